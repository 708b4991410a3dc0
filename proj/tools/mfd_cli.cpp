// Command-line driver: featurize, gen-data, train, eval, compare, partial-flow, zero-shot.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "mfd/datagen.hpp"
#include "mfd/error.hpp"
#include "mfd/experiments.hpp"
#include "mfd/features.hpp"
#include "mfd/flowparse.hpp"
#include "mfd/metrics.hpp"
#include "mfd/tsdnn.hpp"

namespace fs = std::filesystem;
using namespace mfd;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

struct Options {
  ExperimentConfig config;
  std::string coeff_file;
  std::string fractions;
  std::string holdout;
  std::string methods;
  std::string out_dir = "out";
  // featurize / eval
  std::string input;
  std::string labels_file;
  std::string default_label;
  std::string output;
  std::string model_path;
  std::string features_path;
  double idle_timeout = kDefaultIdleTimeoutSec;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

ClassLabel require_label(const std::string& name) {
  const auto l = parse_label(name);
  if (!l) throw Error(Errc::HoldoutUnknown, "unknown class '" + name + "'");
  return *l;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  return out;
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot read " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadFormat, path + ": " + e.what());
  }
}

/// Coefficient file: {"node1": {"Malicious": 1.0}, "node2": {...}, "node3": {...}}.
std::array<CoefficientMap, kNumNodes> load_coefficients(const std::string& path) {
  const auto j = read_json(path);
  const TsdnnModel names = build_tsdnn(1, std::vector<std::size_t>{1}, 0);
  std::array<CoefficientMap, kNumNodes> out;
  for (std::size_t k = 0; k < kNumNodes; ++k) {
    const std::string key = "node" + std::to_string(k + 1);
    if (!j.contains(key)) continue;
    const auto& cls = names.nodes[k].class_names;
    out[k] = coefficients_from_json(j.at(key), [&](const std::string& n) {
      for (std::size_t c = 0; c < cls.size(); ++c) {
        if (cls[c] == n) return static_cast<int>(c);
      }
      throw Error(Errc::UnknownClass, key + " has no class '" + n + "'");
    });
  }
  return out;
}

void resolve(Options& o) {
  if (!o.coeff_file.empty()) o.config.coefficients = load_coefficients(o.coeff_file);
  if (!o.fractions.empty()) {
    o.config.fractions.clear();
    for (const auto& f : split_list(o.fractions)) {
      try {
        o.config.fractions.push_back(std::stod(f));
      } catch (const std::exception&) {
        throw Error(Errc::InvalidFraction, "not a number: '" + f + "'");
      }
    }
  }
  if (!o.holdout.empty()) {
    o.config.holdout.clear();
    for (const auto& h : split_list(o.holdout)) o.config.holdout.push_back(require_label(h));
  }
  if (!o.methods.empty()) {
    o.config.methods.clear();
    for (const auto& m : split_list(o.methods)) {
      const auto parsed = parse_method(m);
      if (!parsed) throw Error(Errc::BadConfig, "unknown method '" + m + "'");
      o.config.methods.push_back(*parsed);
    }
  }
  o.config.validate();
  fs::create_directories(o.out_dir);
}

void add_experiment_flags(CLI::App* app, Options& o) {
  app->add_option("--seed", o.config.seed, "Generation, split and initialization seed");
  app->add_option("--scale", o.config.scale, "Fraction of the reference class counts");
  app->add_option("--test-fraction", o.config.test_fraction, "Per-class test fraction");
  app->add_option("--eta", o.config.train.eta, "Learning rate");
  app->add_option("--epochs", o.config.train.epochs, "Training epochs");
  app->add_option("--batch-size", o.config.train.batch_size, "Mini-batch size (0 = full batch)");
  app->add_option("--coeff-file", o.coeff_file, "JSON file of per-node QDBP coefficients");
  app->add_option("--out-dir", o.out_dir, "Directory for reports");
}

// ---- commands --------------------------------------------------------------

std::map<std::string, ClassLabel> load_label_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot read " + path);
  std::map<std::string, ClassLabel> m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (lineno == 1 && line.rfind("flow_key", 0) == 0)) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw Error(Errc::BadFormat, path + ":" + std::to_string(lineno) + ": expected key,label");
    const auto label = parse_label(line.substr(comma + 1));
    if (!label) throw Error(Errc::BadFormat, path + ":" + std::to_string(lineno) + ": unknown label");
    m[line.substr(0, comma)] = *label;
  }
  return m;
}

std::vector<FlowRecord> load_flows(const std::string& path, double idle_timeout) {
  if (path.ends_with(".jsonl")) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::Io, "cannot read " + path);
    return read_flow_jsonl(in);
  }
  const Bytes bytes = read_file(path);
  std::vector<ParsedPacket> packets;
  for (const auto& raw : parse_pcap(bytes)) {
    if (auto p = decode_frame(raw)) packets.push_back(std::move(*p));
  }
  return assemble_flows(std::move(packets), idle_timeout);
}

int cmd_featurize(const Options& o) {
  auto flows = load_flows(o.input, o.idle_timeout);
  std::map<std::string, ClassLabel> labels;
  if (!o.labels_file.empty()) labels = load_label_map(o.labels_file);
  std::optional<ClassLabel> fallback;
  if (!o.default_label.empty()) {
    fallback = parse_label(o.default_label);
    if (!fallback) throw Error(Errc::BadConfig, "unknown default label '" + o.default_label + "'");
  }
  LabeledFeatures data;
  std::array<std::size_t, kNumClasses> counts{};
  for (auto& f : flows) {
    const auto it = labels.find(f.key.to_string());
    if (it != labels.end()) {
      f.label = it->second;
    } else if (fallback) {
      f.label = *fallback;
    } else if (o.labels_file.empty() && o.input.ends_with(".jsonl")) {
      // Flow JSONL already carries labels.
    } else {
      throw Error(Errc::UnlabeledFlow, "no label for flow " + f.key.to_string());
    }
    data.rows.push_back(featurize(f).values);
    data.labels.push_back(f.label);
    ++counts[static_cast<std::size_t>(index_of(f.label))];
  }
  if (o.output.empty() || o.output == "-") {
    write_feature_csv(std::cout, data);
  } else {
    auto out = open_out(o.output);
    write_feature_csv(out, data);
  }
  std::cerr << "featurized " << flows.size() << " flows:";
  for (ClassLabel l : kAllLabels) {
    if (counts[static_cast<std::size_t>(index_of(l))] > 0) std::cerr << ' ' << label_name(l) << '=' << counts[static_cast<std::size_t>(index_of(l))];
  }
  std::cerr << '\n';
  return 0;
}

int cmd_gen_data(const Options& o) {
  const DatasetProfile profile = default_profile(o.config.scale);
  Dataset data = generate_dataset(profile, o.config.seed);
  split(data, o.config.test_fraction, o.config.seed);
  const fs::path dir(o.out_dir);
  {
    auto out = open_out(dir / "flows.jsonl");
    write_flow_jsonl(out, data.flows);
  }
  {
    auto out = open_out(dir / "split.csv");
    out << "index,flow_key,label,split\n";
    for (std::size_t i = 0; i < data.flows.size(); ++i) {
      out << i << ',' << data.flows[i].key.to_string() << ',' << label_name(data.flows[i].label) << ','
          << (data.tags[i] == SplitTag::Test ? "test" : "train") << '\n';
    }
  }
  write_json(dir / "profile.json", profile_to_json(profile));
  std::cerr << "wrote " << data.flows.size() << " flows to " << dir.string() << '\n';
  return 0;
}

int cmd_train(const Options& o) {
  const PreparedData data = prepare_data(o.config);
  TsdnnTrainLog log;
  const TsdnnModel model = train_tsdnn(o.config, data, {}, &log);
  const fs::path dir(o.out_dir);
  write_json(dir / "model.json", model.to_json());
  nlohmann::ordered_json j;
  j["artifact_version"] = artifact_version();
  j["command"] = "train";
  j["config"] = o.config.to_json();
  j["log"] = log.to_json();
  write_json(dir / "train_log.json", j);
  return 0;
}

int cmd_eval(const Options& o) {
  if (o.model_path.empty()) throw Error(Errc::BadConfig, "--model is required");
  const TsdnnModel model = TsdnnModel::from_json(read_json(o.model_path));
  Eigen::MatrixXd x;
  std::vector<ClassLabel> truth;
  if (!o.features_path.empty()) {
    std::ifstream in(o.features_path);
    if (!in) throw Error(Errc::Io, "cannot read " + o.features_path);
    const LabeledFeatures f = read_feature_csv(in);
    std::vector<std::vector<double>> rows;
    for (const auto& r : f.rows) rows.push_back(model.normalizer ? model.normalizer->apply(r) : r);
    x = to_matrix(rows);
    truth = f.labels;
  } else {
    // Synthetic test split regenerated from the seed.
    const PreparedData data = prepare_data(o.config);
    std::vector<std::vector<double>> rows;
    for (std::size_t i : data.split.test) {
      rows.push_back(model.normalizer ? model.normalizer->apply(data.raw_features[i]) : data.raw_features[i]);
    }
    x = to_matrix(rows);
    truth = data.test_y;
  }
  const ConfusionMatrix cm = confusion(predict_tsdnn(model, x), label_indices(truth), kNumClasses);
  nlohmann::ordered_json j;
  j["artifact_version"] = artifact_version();
  j["command"] = "eval";
  j["model"] = o.model_path;
  j["metrics"] = metrics_json(cm, class_names());
  const fs::path dir(o.out_dir);
  write_json(dir / "eval.json", j);
  auto csv = open_out(dir / "confusion.csv");
  write_matrix_csv(csv, cm, class_names());
  return 0;
}

int cmd_compare(const Options& o) {
  const CompareReport r = run_compare(o.config);
  const fs::path dir(o.out_dir);
  write_json(dir / "compare.json", r.json);
  auto csv = open_out(dir / "compare.csv");
  write_compare_csv(csv, r);
  for (const auto& m : r.results) {
    auto out = open_out(dir / ("confusion_" + std::string(method_name(m.method)) + ".csv"));
    write_matrix_csv(out, m.matrix, class_names());
  }
  write_compare_csv(std::cout, r);
  return 0;
}

int cmd_partial_flow(const Options& o) {
  const PartialFlowReport r = run_partial_flow(o.config);
  const fs::path dir(o.out_dir);
  write_json(dir / "partial_flow.json", r.json);
  auto csv = open_out(dir / "partial_flow.csv");
  write_partial_flow_csv(csv, r);
  write_partial_flow_csv(std::cout, r);
  return 0;
}

int cmd_zero_shot(const Options& o) {
  const ZeroShotReport r = run_zero_shot(o.config);
  write_json(fs::path(o.out_dir) / "zero_shot.json", r.json);
  std::cout << r.json.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Malicious flow detection toolkit"};
  app.require_subcommand(1);
  Options o;

  auto* featurize = app.add_subcommand("featurize", "Turn a pcap or flow JSONL file into a feature CSV");
  featurize->add_option("input", o.input, "pcap or .jsonl path")->required();
  featurize->add_option("--labels", o.labels_file, "CSV of flow_key,label");
  featurize->add_option("--default-label", o.default_label, "Label for flows missing from --labels");
  featurize->add_option("-o,--output", o.output, "Output CSV (default stdout)");
  featurize->add_option("--idle-timeout", o.idle_timeout, "Flow idle timeout in seconds");

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic flow dataset");
  add_experiment_flags(gen, o);

  auto* train = app.add_subcommand("train", "Train the tree-shaped network on synthetic data");
  add_experiment_flags(train, o);

  auto* eval = app.add_subcommand("eval", "Evaluate a saved model");
  add_experiment_flags(eval, o);
  eval->add_option("--model", o.model_path, "Model JSON from train")->required();
  eval->add_option("--features", o.features_path, "Feature CSV (default: the synthetic test split)");

  auto* compare = app.add_subcommand("compare", "Compare training methods on one split");
  add_experiment_flags(compare, o);
  compare->add_option("--methods", o.methods, "Comma-separated subset of methods");

  auto* partial = app.add_subcommand("partial-flow", "Binary accuracy on time-truncated test flows");
  add_experiment_flags(partial, o);
  partial->add_option("--fractions", o.fractions, "Comma-separated fractions in (0, 1]");

  auto* zero = app.add_subcommand("zero-shot", "Hold out families and test binary detection on them");
  add_experiment_flags(zero, o);
  zero->add_option("--holdout", o.holdout, "Comma-separated malicious classes to hold out");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (featurize->parsed()) return cmd_featurize(o);
    resolve(o);
    if (gen->parsed()) return cmd_gen_data(o);
    if (train->parsed()) return cmd_train(o);
    if (eval->parsed()) return cmd_eval(o);
    if (compare->parsed()) return cmd_compare(o);
    if (partial->parsed()) return cmd_partial_flow(o);
    if (zero->parsed()) return cmd_zero_shot(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_data_error(e.code()) ? kExitData : kExitConfig;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
