#include "mfd/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "mfd/error.hpp"

#ifndef MFD_VERSION
#define MFD_VERSION "0.1.0"
#endif

namespace mfd {

std::string_view artifact_version() { return MFD_VERSION; }

namespace {

constexpr std::array<std::string_view, 6> kMethodNames = {
    "vanilla-dnn", "dnn-oversample", "dnn-undersample", "dnn-incremental", "dnn-qdbp", "tsdnn-qdbp",
};

std::vector<std::size_t> flat_dims(const ExperimentConfig& config, std::size_t outputs) {
  std::vector<std::size_t> dims{kFeatureDim};
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  dims.push_back(outputs);
  return dims;
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& m, std::span<const std::size_t> idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(idx[j]));
  return out;
}

template <class T>
std::vector<T> gather(std::span<const T> v, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

std::vector<double> uniform_weights(std::size_t n) { return std::vector<double>(n, 1.0 / static_cast<double>(n)); }

nlohmann::ordered_json report_header(std::string_view command, const ExperimentConfig& config) {
  nlohmann::ordered_json j;
  j["artifact_version"] = artifact_version();
  j["command"] = command;
  j["config"] = config.to_json();
  return j;
}

nlohmann::ordered_json class_counts_json(std::span<const ClassLabel> labels) {
  std::array<std::size_t, kNumClasses> counts{};
  for (ClassLabel l : labels) ++counts[static_cast<std::size_t>(index_of(l))];
  nlohmann::ordered_json j;
  for (ClassLabel l : kAllLabels) j[std::string(label_name(l))] = counts[static_cast<std::size_t>(index_of(l))];
  return j;
}

}  // namespace

std::string_view method_name(Method m) { return kMethodNames[static_cast<std::size_t>(m)]; }

std::optional<Method> parse_method(std::string_view name) {
  for (std::size_t i = 0; i < kMethodNames.size(); ++i) {
    if (kMethodNames[i] == name) return static_cast<Method>(i);
  }
  return std::nullopt;
}

void ExperimentConfig::validate() const {
  train.validate();
  if (!(test_fraction > 0 && test_fraction < 1)) throw Error(Errc::BadConfig, "test_fraction must lie in (0, 1)");
  if (hidden.empty()) throw Error(Errc::BadConfig, "at least one hidden layer is required");
  for (std::size_t h : hidden) {
    if (h == 0) throw Error(Errc::BadConfig, "hidden widths must be positive");
  }
  if (!(minority_coefficient > 0)) throw Error(Errc::NonPositiveCoefficient, "minority coefficient must be > 0");
  if (incremental_stages < 2) throw Error(Errc::BadConfig, "incremental learning needs >= 2 stages");
  if (methods.empty()) throw Error(Errc::BadConfig, "no methods requested");
  for (double f : fractions) {
    if (!(f > 0 && f <= 1)) throw Error(Errc::InvalidFraction, "fractions must lie in (0, 1]");
  }
  for (ClassLabel l : holdout) {
    if (!is_malicious(l)) throw Error(Errc::HoldoutUnknown, "the benign class cannot be held out");
  }
}

nlohmann::ordered_json ExperimentConfig::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["scale"] = scale;
  j["test_fraction"] = test_fraction;
  j["eta"] = train.eta;
  j["epochs"] = train.epochs;
  j["batch_size"] = train.batch_size;
  j["shuffle_seed"] = train.seed;
  j["hidden"] = hidden;
  if (coefficients) {
    auto& cs = j["coefficients"] = nlohmann::ordered_json::array();
    for (const auto& m : *coefficients) {
      nlohmann::ordered_json node = nlohmann::ordered_json::object();
      for (const auto& [cls, c] : m) node[std::to_string(cls)] = c;
      cs.push_back(node);
    }
  } else {
    j["minority_coefficient"] = minority_coefficient;
  }
  auto& ms = j["methods"] = nlohmann::ordered_json::array();
  for (Method m : methods) ms.push_back(method_name(m));
  j["oversample_target"] = oversample_target;
  j["undersample_target"] = undersample_target;
  j["incremental_stages"] = incremental_stages;
  j["fractions"] = fractions;
  auto& ho = j["holdout"] = nlohmann::ordered_json::array();
  for (ClassLabel l : holdout) ho.push_back(label_name(l));
  return j;
}

// ---- data ------------------------------------------------------------------

Eigen::MatrixXd to_matrix(std::span<const std::vector<double>> rows) {
  const auto d = rows.empty() ? Eigen::Index{0} : static_cast<Eigen::Index>(rows.front().size());
  Eigen::MatrixXd m(d, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (static_cast<Eigen::Index>(rows[j].size()) != d) throw Error(Errc::DimensionMismatch, "ragged feature rows");
    m.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(rows[j].data(), d);
  }
  return m;
}

std::vector<std::vector<double>> featurize_all(std::span<const FlowRecord> flows) {
  std::vector<std::vector<double>> rows;
  rows.reserve(flows.size());
  for (const auto& f : flows) rows.push_back(featurize(f).values);
  return rows;
}

PreparedData prepare_data(const ExperimentConfig& config, std::span<const ClassLabel> excluded) {
  config.validate();
  PreparedData p;
  p.data = generate_dataset(config.scale, config.seed);
  p.split = split(p.data, config.test_fraction, config.seed);
  p.raw_features = featurize_all(p.data.flows);

  const auto is_excluded = [&](ClassLabel l) { return std::find(excluded.begin(), excluded.end(), l) != excluded.end(); };
  std::erase_if(p.split.train, [&](std::size_t i) { return is_excluded(p.data.flows[i].label); });

  std::vector<std::vector<double>> train_rows;
  for (std::size_t i : p.split.train) train_rows.push_back(p.raw_features[i]);
  p.normalizer = MinMaxNormalizer::fit(train_rows);
  for (auto& r : train_rows) r = p.normalizer.apply(r);
  std::vector<std::vector<double>> test_rows;
  for (std::size_t i : p.split.test) test_rows.push_back(p.normalizer.apply(p.raw_features[i]));

  p.train_x = to_matrix(train_rows);
  p.test_x = to_matrix(test_rows);
  for (std::size_t i : p.split.train) p.train_y.push_back(p.data.flows[i].label);
  for (std::size_t i : p.split.test) p.test_y.push_back(p.data.flows[i].label);
  return p;
}

std::vector<int> label_indices(std::span<const ClassLabel> labels) {
  std::vector<int> out;
  out.reserve(labels.size());
  for (ClassLabel l : labels) out.push_back(index_of(l));
  return out;
}

const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (ClassLabel l : kAllLabels) n.emplace_back(label_name(l));
    return n;
  }();
  return names;
}

// ---- training --------------------------------------------------------------

void train_dnn(DenseNetwork& net, const Eigen::MatrixXd& inputs, std::span<const int> labels,
               std::span<const double> sample_weights, const TrainConfig& config) {
  config.validate();
  const std::size_t n = labels.size();
  if (static_cast<std::size_t>(inputs.cols()) != n || sample_weights.size() != n) {
    throw Error(Errc::DimensionMismatch, "inputs, labels and weights disagree on sample count");
  }
  if (n == 0) throw Error(Errc::BadConfig, "cannot train on zero samples");
  if (config.batch_size == 0 || config.batch_size >= n) {
    for (int e = 0; e < config.epochs; ++e) {
      apply_update(net, weighted_gradient(net, inputs, labels, sample_weights), config.eta);
    }
    return;
  }
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int e = 0; e < config.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(n, start + config.batch_size) - start);
      const auto yb = gather(labels, idx);
      const auto wb = gather(sample_weights, idx);
      apply_update(net, weighted_gradient(net, gather(inputs, idx), yb, wb), config.eta);
    }
  }
}

std::vector<int> predict_dnn(const DenseNetwork& net, const Eigen::MatrixXd& inputs) {
  const ForwardCache cache = forward_batch(net, inputs);
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(inputs.cols()));
  for (Eigen::Index c = 0; c < inputs.cols(); ++c) out.push_back(argmax(cache.probs().col(c)));
  return out;
}

std::vector<int> predict_tsdnn(const TsdnnModel& model, const Eigen::MatrixXd& inputs) {
  std::vector<int> out;
  for (const auto& t : predict_batch(model, inputs)) out.push_back(index_of(t.label));
  return out;
}

TsdnnModel train_tsdnn(const ExperimentConfig& config, const PreparedData& data, std::span<const ClassLabel> excluded,
                       TsdnnTrainLog* log) {
  TsdnnModel model = build_tsdnn(kFeatureDim, config.hidden, config.seed);
  if (config.coefficients) {
    for (std::size_t k = 0; k < kNumNodes; ++k) model.nodes[k].coefficients = (*config.coefficients)[k];
  } else {
    set_minority_coefficients(model, data.train_y, config.minority_coefficient);
  }
  model.normalizer = data.normalizer;
  TsdnnTrainOptions options;
  options.excluded.insert(excluded.begin(), excluded.end());
  TsdnnTrainLog l = train(model, data.train_x, data.train_y, config.train, options);
  if (log) *log = std::move(l);
  return model;
}

MethodResult run_method(Method method, const ExperimentConfig& config, const PreparedData& data) {
  MethodResult r;
  r.method = method;
  const auto test_truth = label_indices(data.test_y);
  if (method == Method::TsdnnQdbp) {
    const TsdnnModel model = train_tsdnn(config, data);
    r.train_samples = data.train_y.size();
    r.matrix = confusion(predict_tsdnn(model, data.test_x), test_truth, kNumClasses);
    return r;
  }

  const auto dims = flat_dims(config, kNumClasses);
  DenseNetwork net = DenseNetwork::build(dims, config.seed);
  const auto train_labels = label_indices(data.train_y);
  const std::span<const int> all_labels(train_labels);

  switch (method) {
    case Method::VanillaDnn:
      train_dnn(net, data.train_x, all_labels, uniform_weights(train_labels.size()), config.train);
      r.train_samples = train_labels.size();
      break;
    case Method::DnnOversample: {
      const std::size_t target = config.oversample_target > 0
                                     ? config.oversample_target
                                     : static_cast<std::size_t>(std::llround(10000.0 * config.scale));
      const auto idx = oversample_indices(data.train_y, target, config.seed);
      const auto y = gather(all_labels, idx);
      train_dnn(net, gather(data.train_x, idx), y, uniform_weights(y.size()), config.train);
      r.train_samples = y.size();
      break;
    }
    case Method::DnnUndersample: {
      std::size_t target = config.undersample_target;
      if (target == 0) {
        const auto parts = ClassPartition::from_labels(all_labels);
        target = std::numeric_limits<std::size_t>::max();
        for (const auto& [cls, idx] : parts.classes) target = std::min(target, idx.size());
      }
      const auto idx = undersample_indices(data.train_y, target, config.seed);
      const auto y = gather(all_labels, idx);
      train_dnn(net, gather(data.train_x, idx), y, uniform_weights(y.size()), config.train);
      r.train_samples = y.size();
      break;
    }
    case Method::DnnIncremental: {
      // The epoch budget is spread over the stages.
      const auto schedule = incremental_schedule_indices(data.train_y, config.incremental_stages, config.seed);
      TrainConfig stage_config = config.train;
      stage_config.epochs = std::max(1, config.train.epochs / config.incremental_stages);
      for (const auto& idx : schedule) {
        const auto y = gather(all_labels, idx);
        train_dnn(net, gather(data.train_x, idx), y, uniform_weights(y.size()), stage_config);
      }
      r.train_samples = schedule.back().size();
      break;
    }
    case Method::DnnQdbp: {
      const auto parts = ClassPartition::from_labels(all_labels);
      CoefficientMap coeffs;
      int smallest = -1;
      for (const auto& [cls, idx] : parts.classes) {
        if (smallest < 0 || idx.size() < parts.cardinality(smallest)) smallest = cls;
      }
      coeffs[smallest] = config.minority_coefficient;
      const auto w = make_weighting(parts, coeffs).sample_weights(all_labels);
      train_dnn(net, data.train_x, all_labels, w, config.train);
      r.train_samples = train_labels.size();
      break;
    }
    case Method::TsdnnQdbp:
      break;
  }
  r.matrix = confusion(predict_dnn(net, data.test_x), test_truth, kNumClasses);
  return r;
}

// ---- experiments -----------------------------------------------------------

CompareReport run_compare(const ExperimentConfig& config) {
  const PreparedData data = prepare_data(config);
  CompareReport report;
  report.json = report_header("compare", config);
  report.json["train_counts"] = class_counts_json(data.train_y);
  report.json["test_counts"] = class_counts_json(data.test_y);
  auto& methods = report.json["methods"] = nlohmann::ordered_json::object();
  for (Method m : config.methods) {
    MethodResult r = run_method(m, config, data);
    auto mj = metrics_json(r.matrix, class_names());
    mj["train_samples"] = r.train_samples;
    methods[std::string(method_name(m))] = std::move(mj);
    report.results.push_back(std::move(r));
  }
  return report;
}

void write_compare_csv(std::ostream& out, const CompareReport& report) {
  out << "method,accuracy,avg_precision\n";
  for (const auto& r : report.results) {
    out << method_name(r.method) << ',' << nlohmann::json(accuracy(r.matrix)).dump() << ','
        << nlohmann::json(average_precision(r.matrix)).dump() << '\n';
  }
}

PartialFlowReport run_partial_flow(const ExperimentConfig& config) {
  const PreparedData data = prepare_data(config);
  const TsdnnModel model = train_tsdnn(config, data);
  PartialFlowReport report;
  report.json = report_header("partial-flow", config);
  auto& rows = report.json["fractions"] = nlohmann::ordered_json::array();
  for (double fraction : config.fractions) {
    std::vector<std::vector<double>> truncated;
    truncated.reserve(data.split.test.size());
    for (std::size_t i : data.split.test) {
      truncated.push_back(data.normalizer.apply(featurize(truncate_flow(data.data.flows[i], fraction)).values));
    }
    const ForwardCache c1 = forward_batch(model.nodes[0].net, to_matrix(truncated));
    std::size_t correct = 0;
    for (std::size_t j = 0; j < truncated.size(); ++j) {
      const int decision = argmax(c1.probs().col(static_cast<Eigen::Index>(j)));
      if (decision == node1_class(data.test_y[j])) ++correct;
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(truncated.size());
    report.rows.push_back({fraction, acc});
    rows.push_back({{"fraction", fraction}, {"binary_accuracy", acc}, {"test_flows", truncated.size()}});
  }
  return report;
}

void write_partial_flow_csv(std::ostream& out, const PartialFlowReport& report) {
  out << "fraction,accuracy\n";
  for (const auto& r : report.rows) out << nlohmann::json(r.fraction).dump() << ',' << nlohmann::json(r.accuracy).dump() << '\n';
}

namespace {

/// Node1 decisions for the given test columns.
std::vector<int> node1_decisions(const TsdnnModel& model, const Eigen::MatrixXd& x) {
  return predict_dnn(model.nodes[0].net, x);
}

double benign_fpr(const std::vector<int>& decisions, std::span<const ClassLabel> truth) {
  std::size_t benign = 0, flagged = 0;
  for (std::size_t j = 0; j < truth.size(); ++j) {
    if (truth[j] != ClassLabel::Benign) continue;
    ++benign;
    if (decisions[j] == kMalicious) ++flagged;
  }
  return benign == 0 ? 0.0 : static_cast<double>(flagged) / static_cast<double>(benign);
}

}  // namespace

ZeroShotReport run_zero_shot(const ExperimentConfig& config) {
  if (config.holdout.empty()) throw Error(Errc::HoldoutUnknown, "no holdout classes given");
  ZeroShotReport report;
  report.json = report_header("zero-shot", config);

  const PreparedData full = prepare_data(config);
  const TsdnnModel full_model = train_tsdnn(config, full);
  report.benign_fpr_full = benign_fpr(node1_decisions(full_model, full.test_x), full.test_y);

  const PreparedData held = prepare_data(config, config.holdout);
  const TsdnnModel held_model = train_tsdnn(config, held, config.holdout);
  const auto decisions = node1_decisions(held_model, held.test_x);
  report.benign_fpr_holdout = benign_fpr(decisions, held.test_y);

  auto& per = report.json["holdout"] = nlohmann::ordered_json::object();
  for (ClassLabel h : config.holdout) {
    std::size_t total = 0, flagged = 0;
    for (std::size_t j = 0; j < held.test_y.size(); ++j) {
      if (held.test_y[j] != h) continue;
      ++total;
      if (decisions[j] == kMalicious) ++flagged;
    }
    const double frac = total == 0 ? 0.0 : static_cast<double>(flagged) / static_cast<double>(total);
    report.flagged.emplace_back(h, frac);
    per[std::string(label_name(h))] = {{"test_flows", total}, {"flagged_malicious", flagged}, {"fraction", frac}};
  }
  report.json["benign_fpr_full"] = report.benign_fpr_full;
  report.json["benign_fpr_holdout"] = report.benign_fpr_holdout;
  report.json["train_counts"] = class_counts_json(held.train_y);
  return report;
}

}  // namespace mfd
