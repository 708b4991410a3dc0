#include "mfd/tsdnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mfd/error.hpp"

namespace mfd {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<std::string> node_class_names(std::size_t node) {
  std::vector<std::string> names;
  if (node == 0) {
    names = {"Benign", "Malicious"};
  } else if (node == 1) {
    for (std::size_t c = 0; c < kNumBehaviors; ++c) names.emplace_back(node2_class_name(static_cast<int>(c)));
  } else {
    for (std::size_t c = 0; c < kNumFamilies; ++c) {
      names.emplace_back(label_name(label_from_index(index_of(ClassLabel::Cryptomix) + static_cast<int>(c))));
    }
  }
  return names;
}

int local_class(std::size_t node, ClassLabel l) {
  switch (node) {
    case 0: return node1_class(l);
    case 1: return node2_class(l);
    default: return node3_class(l);
  }
}

bool routed_to(std::size_t node, ClassLabel l) {
  return node == 0 || (node == 1 && is_malicious(l)) || (node == 2 && is_ransomware(l));
}

ClassLabel assemble_label(int d1, std::optional<int> d2, std::optional<int> d3) {
  if (d1 == 0) return ClassLabel::Benign;
  if (*d2 != kRansomware) return label_from_index(index_of(ClassLabel::Bot) + *d2);
  return label_from_index(index_of(ClassLabel::Cryptomix) + *d3);
}

double summed_ce(const Eigen::MatrixXd& probs, std::span<const int> labels) {
  double s = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    s -= std::log(std::max(probs(labels[i], static_cast<Eigen::Index>(i)), 1e-300));
  }
  return s;
}

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& m, std::span<const std::size_t> idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(idx[j]));
  return out;
}

/// Forward pass of all three nodes over a batch under a fixed routing.
struct TreePass {
  std::vector<std::size_t> idx2;   // batch columns routed to node2
  std::vector<std::size_t> idx3;   // batch columns routed to node3
  std::vector<std::size_t> pos3in2;  // for each node3 column, its column within node2's batch
  ForwardCache c1, c2, c3;
};

void forward_node2(const TsdnnModel& model, const Eigen::MatrixXd& inputs, TreePass& pass) {
  const auto d = static_cast<Eigen::Index>(model.feature_dim);
  Eigen::MatrixXd in2(d + 2, static_cast<Eigen::Index>(pass.idx2.size()));
  for (std::size_t j = 0; j < pass.idx2.size(); ++j) {
    const auto s = static_cast<Eigen::Index>(pass.idx2[j]);
    in2.col(static_cast<Eigen::Index>(j)) << inputs.col(s), pass.c1.probs().col(s);
  }
  pass.c2 = forward_batch(model.nodes[1].net, in2);
}

void forward_node3(const TsdnnModel& model, const Eigen::MatrixXd& inputs, TreePass& pass) {
  const auto d = static_cast<Eigen::Index>(model.feature_dim);
  Eigen::MatrixXd in3(d + 2 + static_cast<Eigen::Index>(kNumBehaviors), static_cast<Eigen::Index>(pass.idx3.size()));
  for (std::size_t j = 0; j < pass.idx3.size(); ++j) {
    const auto s = static_cast<Eigen::Index>(pass.idx3[j]);
    in3.col(static_cast<Eigen::Index>(j)) << inputs.col(s), pass.c1.probs().col(s),
        pass.c2.probs().col(static_cast<Eigen::Index>(pass.pos3in2[j]));
  }
  pass.c3 = forward_batch(model.nodes[2].net, in3);
}

TreePass ground_truth_pass(const TsdnnModel& model, const Eigen::MatrixXd& inputs, std::span<const ClassLabel> labels) {
  TreePass pass;
  pass.c1 = forward_batch(model.nodes[0].net, inputs);
  for (std::size_t s = 0; s < labels.size(); ++s) {
    if (!is_malicious(labels[s])) continue;
    if (is_ransomware(labels[s])) {
      pass.idx3.push_back(s);
      pass.pos3in2.push_back(pass.idx2.size());
    }
    pass.idx2.push_back(s);
  }
  if (!pass.idx2.empty()) forward_node2(model, inputs, pass);
  if (!pass.idx3.empty()) forward_node3(model, inputs, pass);
  return pass;
}

std::vector<int> node_labels(std::size_t node, std::span<const ClassLabel> labels, std::span<const std::size_t> idx) {
  std::vector<int> out;
  if (node == 0) {
    for (ClassLabel l : labels) out.push_back(local_class(0, l));
  } else {
    for (std::size_t s : idx) out.push_back(local_class(node, labels[s]));
  }
  return out;
}

std::vector<double> node_weights(const QdbpWeighting* w, std::span<const int> local) {
  return w ? w->sample_weights(local) : std::vector<double>{};
}

/// Backpropagation through the tree, including the bridge paths.
NodeGradients tree_backprop(const TsdnnModel& model, const Eigen::MatrixXd& inputs, std::span<const ClassLabel> labels,
                            const std::array<QdbpWeighting, kNumNodes>* weightings, bool detach) {
  if (static_cast<std::size_t>(inputs.cols()) != labels.size()) {
    throw Error(Errc::DimensionMismatch, "label count differs from batch size");
  }
  const TreePass pass = ground_truth_pass(model, inputs, labels);
  const auto d = static_cast<Eigen::Index>(model.feature_dim);
  const auto batch = inputs.cols();

  NodeGradients out;
  for (std::size_t k = 0; k < kNumNodes; ++k) out.grads[k] = ParamGrad::zeros_like(model.nodes[k].net);
  Eigen::MatrixXd dp1 = Eigen::MatrixXd::Zero(2, batch);
  Eigen::MatrixXd dp2 = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kNumBehaviors),
                                              static_cast<Eigen::Index>(pass.idx2.size()));

  if (!pass.idx3.empty()) {
    const auto y3 = node_labels(2, labels, pass.idx3);
    const auto w3 = node_weights(weightings ? &(*weightings)[2] : nullptr, y3);
    out.node_loss[2] = summed_ce(pass.c3.probs(), y3);
    auto b3 = backward_from_logits(model.nodes[2].net, pass.c3, cross_entropy_dlogits(pass.c3.probs(), y3), w3);
    out.grads[2] = std::move(b3.grad);
    if (!detach) {
      for (std::size_t j = 0; j < pass.idx3.size(); ++j) {
        const auto col = static_cast<Eigen::Index>(j);
        dp1.col(static_cast<Eigen::Index>(pass.idx3[j])) += b3.input_grad.block(d, col, 2, 1);
        dp2.col(static_cast<Eigen::Index>(pass.pos3in2[j])) +=
            b3.input_grad.block(d + 2, col, static_cast<Eigen::Index>(kNumBehaviors), 1);
      }
    }
  }

  if (!pass.idx2.empty()) {
    const auto y2 = node_labels(1, labels, pass.idx2);
    const auto w2 = node_weights(weightings ? &(*weightings)[1] : nullptr, y2);
    out.node_loss[1] = summed_ce(pass.c2.probs(), y2);
    Eigen::MatrixXd dlog2 = cross_entropy_dlogits(pass.c2.probs(), y2);
    if (!detach) dlog2 += softmax_backward(pass.c2.probs(), dp2);
    auto b2 = backward_from_logits(model.nodes[1].net, pass.c2, dlog2, w2);
    out.grads[1] = std::move(b2.grad);
    if (!detach) {
      for (std::size_t j = 0; j < pass.idx2.size(); ++j) {
        dp1.col(static_cast<Eigen::Index>(pass.idx2[j])) += b2.input_grad.block(d, static_cast<Eigen::Index>(j), 2, 1);
      }
    }
  }

  const auto y1 = node_labels(0, labels, {});
  const auto w1 = node_weights(weightings ? &(*weightings)[0] : nullptr, y1);
  out.node_loss[0] = summed_ce(pass.c1.probs(), y1);
  Eigen::MatrixXd dlog1 = cross_entropy_dlogits(pass.c1.probs(), y1);
  if (!detach) dlog1 += softmax_backward(pass.c1.probs(), dp1);
  out.grads[0] = backward_from_logits(model.nodes[0].net, pass.c1, dlog1, w1).grad;
  return out;
}

double imbalance_ratio(const ClassPartition& p) {
  std::size_t lo = 0, hi = 0;
  for (const auto& [cls, idx] : p.classes) {
    lo = lo == 0 ? idx.size() : std::min(lo, idx.size());
    hi = std::max(hi, idx.size());
  }
  return lo == 0 ? 0.0 : static_cast<double>(hi) / static_cast<double>(lo);
}

}  // namespace

// ---- model -----------------------------------------------------------------

std::array<std::size_t, kNumNodes> TsdnnModel::input_dims(std::size_t feature_dim) {
  return {feature_dim, feature_dim + kNodeOutputs[0], feature_dim + kNodeOutputs[0] + kNodeOutputs[1]};
}

void TsdnnModel::validate() const {
  if (feature_dim == 0) throw Error(Errc::BadSpec, "feature_dim must be positive");
  const auto dims = input_dims(feature_dim);
  for (std::size_t k = 0; k < kNumNodes; ++k) {
    const auto& node = nodes[k];
    node.net.validate();
    if (node.net.input_dim() != dims[k]) {
      throw Error(Errc::BadSpec, "node" + std::to_string(k + 1) + " input dim " + std::to_string(node.net.input_dim()) +
                                     " breaks the bridge rule (expected " + std::to_string(dims[k]) + ")");
    }
    if (node.net.output_dim() != kNodeOutputs[k] || node.class_names.size() != kNodeOutputs[k]) {
      throw Error(Errc::BadSpec, "node" + std::to_string(k + 1) + " output dim mismatch");
    }
  }
  if (normalizer && normalizer->dim() != feature_dim) throw Error(Errc::BadSpec, "normalizer dim mismatch");
}

TsdnnModel build_tsdnn(std::size_t feature_dim, std::span<const std::size_t> hidden, std::uint64_t seed) {
  if (feature_dim == 0) throw Error(Errc::BadSpec, "feature_dim must be positive");
  TsdnnModel model;
  model.feature_dim = feature_dim;
  model.seed = seed;
  const auto in = TsdnnModel::input_dims(feature_dim);
  for (std::size_t k = 0; k < kNumNodes; ++k) {
    std::vector<std::size_t> dims{in[k]};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(kNodeOutputs[k]);
    model.nodes[k].net = DenseNetwork::build(dims, splitmix64(seed + k));
    model.nodes[k].class_names = node_class_names(k);
  }
  return model;
}

void set_minority_coefficients(TsdnnModel& model, std::span<const ClassLabel> train_labels, double minority_coeff) {
  const auto parts = local_partitions(train_labels);
  for (std::size_t k = 1; k < kNumNodes; ++k) {
    model.nodes[k].coefficients.clear();
    int smallest = -1;
    std::size_t best = 0;
    for (const auto& [cls, idx] : parts[k].classes) {
      if (smallest < 0 || idx.size() < best) {
        smallest = cls;
        best = idx.size();
      }
    }
    if (smallest >= 0) model.nodes[k].coefficients[smallest] = minority_coeff;
  }
}

nlohmann::json TsdnnModel::to_json() const {
  nlohmann::json j;
  j["schema_version"] = kTsdnnSchemaVersion;
  j["feature_schema_version"] = kFeatureSchemaVersion;
  j["feature_dim"] = feature_dim;
  j["seed"] = seed;
  j["epoch"] = epochs_trained;
  auto& taxonomy = j["label_taxonomy"] = nlohmann::json::array();
  for (ClassLabel l : kAllLabels) taxonomy.push_back(std::string(label_name(l)));
  j["bridges"] = {{{"node", 2}, {"inputs", {"features", "node1"}}},
                  {{"node", 3}, {"inputs", {"features", "node1", "node2"}}}};
  auto& ns = j["nodes"] = nlohmann::json::array();
  for (const auto& node : nodes) {
    nlohmann::json coeffs = nlohmann::json::object();
    for (const auto& [cls, c] : node.coefficients) coeffs[node.class_names.at(static_cast<std::size_t>(cls))] = c;
    ns.push_back({{"classes", node.class_names}, {"coefficients", coeffs}, {"network", node.net.to_json()}});
  }
  j["normalizer"] = normalizer ? normalizer->to_json() : nlohmann::json(nullptr);
  return j;
}

TsdnnModel TsdnnModel::from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != kTsdnnSchemaVersion) {
      throw Error(Errc::BadFormat, "unsupported TSDNN checkpoint schema");
    }
    if (j.at("feature_schema_version").get<int>() != kFeatureSchemaVersion) {
      throw Error(Errc::BadFormat, "checkpoint was trained on a different feature schema");
    }
    TsdnnModel m;
    m.feature_dim = j.at("feature_dim").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.epochs_trained = j.at("epoch").get<int>();
    const auto& ns = j.at("nodes");
    if (ns.size() != kNumNodes) throw Error(Errc::BadFormat, "checkpoint must hold three nodes");
    for (std::size_t k = 0; k < kNumNodes; ++k) {
      auto& node = m.nodes[k];
      node.class_names = ns[k].at("classes").get<std::vector<std::string>>();
      node.net = DenseNetwork::from_json(ns[k].at("network"));
      const auto& names = node.class_names;
      node.coefficients = coefficients_from_json(ns[k].at("coefficients"), [&](const std::string& name) {
        const auto it = std::find(names.begin(), names.end(), name);
        return it == names.end() ? -1 : static_cast<int>(it - names.begin());
      });
    }
    if (!j.at("normalizer").is_null()) m.normalizer = MinMaxNormalizer::from_json(j.at("normalizer"));
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadFormat, std::string("TSDNN checkpoint: ") + e.what());
  }
}

// ---- routing ---------------------------------------------------------------

Eigen::VectorXd concat_bridge(const Eigen::VectorXd& v_in, std::span<const Eigen::VectorXd> v_outs) {
  Eigen::Index n = v_in.size();
  for (const auto& v : v_outs) n += v.size();
  Eigen::VectorXd out(n);
  out.head(v_in.size()) = v_in;
  Eigen::Index at = v_in.size();
  for (const auto& v : v_outs) {
    out.segment(at, v.size()) = v;
    at += v.size();
  }
  return out;
}

RouteTrace forward_route(const TsdnnModel& model, const Eigen::VectorXd& x, RouteMode mode,
                         std::optional<ClassLabel> truth) {
  if (static_cast<std::size_t>(x.size()) != model.feature_dim) {
    throw Error(Errc::DimensionMismatch, "expected " + std::to_string(model.feature_dim) + " features, got " +
                                             std::to_string(x.size()));
  }
  const bool gt = mode == RouteMode::GroundTruth;
  if (gt && !truth) throw Error(Errc::BadConfig, "ground-truth routing needs a label");

  RouteTrace t;
  t.node1 = forward(model.nodes[0].net, x).probs;
  t.decision1 = gt ? node1_class(*truth) : argmax(t.node1);
  if (t.decision1 == kMalicious) {
    const Eigen::VectorXd p1[] = {t.node1};
    t.node2 = forward(model.nodes[1].net, concat_bridge(x, p1)).probs;
    t.decision2 = gt ? node2_class(*truth) : argmax(*t.node2);
    if (*t.decision2 == kRansomware) {
      const Eigen::VectorXd p12[] = {t.node1, *t.node2};
      t.node3 = forward(model.nodes[2].net, concat_bridge(x, p12)).probs;
      t.decision3 = gt ? node3_class(*truth) : argmax(*t.node3);
    }
  }
  t.label = assemble_label(t.decision1, t.decision2, t.decision3);
  return t;
}

RouteTrace predict(const TsdnnModel& model, const Eigen::VectorXd& x) {
  return forward_route(model, x, RouteMode::Predicted);
}

std::vector<RouteTrace> predict_batch(const TsdnnModel& model, const Eigen::MatrixXd& inputs) {
  if (static_cast<std::size_t>(inputs.rows()) != model.feature_dim) {
    throw Error(Errc::DimensionMismatch, "expected " + std::to_string(model.feature_dim) + " feature rows");
  }
  TreePass pass;
  pass.c1 = forward_batch(model.nodes[0].net, inputs);
  std::vector<RouteTrace> traces(static_cast<std::size_t>(inputs.cols()));
  for (std::size_t s = 0; s < traces.size(); ++s) {
    traces[s].node1 = pass.c1.probs().col(static_cast<Eigen::Index>(s));
    traces[s].decision1 = argmax(traces[s].node1);
    if (traces[s].decision1 == kMalicious) pass.idx2.push_back(s);
  }
  if (!pass.idx2.empty()) {
    forward_node2(model, inputs, pass);
    for (std::size_t j = 0; j < pass.idx2.size(); ++j) {
      auto& t = traces[pass.idx2[j]];
      t.node2 = pass.c2.probs().col(static_cast<Eigen::Index>(j));
      t.decision2 = argmax(*t.node2);
      if (*t.decision2 == kRansomware) {
        pass.idx3.push_back(pass.idx2[j]);
        pass.pos3in2.push_back(j);
      }
    }
  }
  if (!pass.idx3.empty()) {
    forward_node3(model, inputs, pass);
    for (std::size_t j = 0; j < pass.idx3.size(); ++j) {
      auto& t = traces[pass.idx3[j]];
      t.node3 = pass.c3.probs().col(static_cast<Eigen::Index>(j));
      t.decision3 = argmax(*t.node3);
    }
  }
  for (auto& t : traces) t.label = assemble_label(t.decision1, t.decision2, t.decision3);
  return traces;
}

// ---- gradients -------------------------------------------------------------

TsdnnGradients tsdnn_loss_and_grads(const TsdnnModel& model, const Eigen::MatrixXd& inputs,
                                    std::span<const ClassLabel> labels, bool detach_bridges) {
  if (static_cast<std::size_t>(inputs.rows()) != model.feature_dim) {
    throw Error(Errc::DimensionMismatch, "expected " + std::to_string(model.feature_dim) + " feature rows");
  }
  if (static_cast<std::size_t>(inputs.cols()) != labels.size()) {
    throw Error(Errc::DimensionMismatch, "label count differs from batch size");
  }
  TsdnnGradients out;
  for (std::size_t s = 0; s < labels.size(); ++s) {
    const ClassLabel l = labels[s];
    const Eigen::MatrixXd col = inputs.col(static_cast<Eigen::Index>(s));
    NodeGradients g = tree_backprop(model, col, std::span(&l, 1), nullptr, detach_bridges);
    for (std::size_t k = 0; k < kNumNodes; ++k) {
      out.loss += g.node_loss[k];
      if (routed_to(k, l)) out.per_node[k].push_back({std::move(g.grads[k]), local_class(k, l)});
    }
  }
  return out;
}

double tsdnn_loss(const TsdnnModel& model, const Eigen::MatrixXd& inputs, std::span<const ClassLabel> labels) {
  double total = 0;
  for (std::size_t s = 0; s < labels.size(); ++s) {
    const RouteTrace t = forward_route(model, inputs.col(static_cast<Eigen::Index>(s)), RouteMode::GroundTruth, labels[s]);
    total -= std::log(t.node1(t.decision1));
    if (t.node2) total -= std::log((*t.node2)(*t.decision2));
    if (t.node3) total -= std::log((*t.node3)(*t.decision3));
  }
  return total;
}

std::array<ClassPartition, kNumNodes> local_partitions(std::span<const ClassLabel> labels) {
  std::array<ClassPartition, kNumNodes> parts;
  for (std::size_t s = 0; s < labels.size(); ++s) {
    for (std::size_t k = 0; k < kNumNodes; ++k) {
      if (routed_to(k, labels[s])) parts[k].classes[local_class(k, labels[s])].push_back(s);
    }
  }
  return parts;
}

NodeGradients tsdnn_weighted_gradients(const TsdnnModel& model, const Eigen::MatrixXd& inputs,
                                       std::span<const ClassLabel> labels,
                                       const std::array<QdbpWeighting, kNumNodes>& weightings, bool detach_bridges) {
  if (static_cast<std::size_t>(inputs.rows()) != model.feature_dim) {
    throw Error(Errc::DimensionMismatch, "expected " + std::to_string(model.feature_dim) + " feature rows");
  }
  return tree_backprop(model, inputs, labels, &weightings, detach_bridges);
}

// ---- training --------------------------------------------------------------

nlohmann::json TsdnnTrainLog::to_json() const {
  nlohmann::json j;
  j["local_imbalance"] = local_imbalance;
  j["global_imbalance"] = global_imbalance;
  auto& es = j["epochs"] = nlohmann::json::array();
  for (const auto& e : epochs) es.push_back({{"epoch", e.epoch}, {"node_loss", e.node_loss}});
  return j;
}

TsdnnTrainLog train(TsdnnModel& model, const Eigen::MatrixXd& inputs, std::span<const ClassLabel> labels,
                    const TrainConfig& config, const TsdnnTrainOptions& options) {
  config.validate();
  model.validate();
  if (static_cast<std::size_t>(inputs.rows()) != model.feature_dim) {
    throw Error(Errc::DimensionMismatch, "expected " + std::to_string(model.feature_dim) + " feature rows");
  }
  if (static_cast<std::size_t>(inputs.cols()) != labels.size()) {
    throw Error(Errc::DimensionMismatch, "label count differs from sample count");
  }

  const auto parts = local_partitions(labels);
  // A local class may be empty only when every global label feeding it is excluded.
  for (std::size_t k = 0; k < kNumNodes; ++k) {
    for (std::size_t c = 0; c < kNodeOutputs[k]; ++c) {
      if (parts[k].cardinality(static_cast<int>(c)) > 0) continue;
      bool all_excluded = true;
      for (ClassLabel l : kAllLabels) {
        if (routed_to(k, l) && local_class(k, l) == static_cast<int>(c) && !options.excluded.contains(l)) {
          all_excluded = false;
        }
      }
      if (!all_excluded) {
        throw Error(Errc::EmptyClass, "node" + std::to_string(k + 1) + " class '" + model.nodes[k].class_names[c] +
                                          "' has no training samples");
      }
    }
  }

  std::array<QdbpWeighting, kNumNodes> weightings;
  TsdnnTrainLog log;
  for (std::size_t k = 0; k < kNumNodes; ++k) {
    weightings[k] = make_weighting(parts[k], model.nodes[k].coefficients);
    log.local_imbalance[k] = imbalance_ratio(parts[k]);
  }
  std::vector<int> flat;
  for (ClassLabel l : labels) flat.push_back(index_of(l));
  log.global_imbalance = imbalance_ratio(ClassPartition::from_labels(flat));

  const std::size_t n = labels.size();
  const bool full_batch = config.batch_size == 0 || config.batch_size >= n;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    TsdnnEpochLog entry;
    entry.epoch = model.epochs_trained + 1;
    if (full_batch) {
      const NodeGradients g = tree_backprop(model, inputs, labels, &weightings, false);
      for (std::size_t k = 0; k < kNumNodes; ++k) apply_update(model.nodes[k].net, g.grads[k], config.eta);
      entry.node_loss = g.node_loss;
    } else {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < n; start += config.batch_size) {
        const std::size_t end = std::min(n, start + config.batch_size);
        const std::span<const std::size_t> idx(order.data() + start, end - start);
        const Eigen::MatrixXd xb = gather_columns(inputs, idx);
        std::vector<ClassLabel> yb;
        for (std::size_t s : idx) yb.push_back(labels[s]);
        const NodeGradients g = tree_backprop(model, xb, yb, &weightings, false);
        for (std::size_t k = 0; k < kNumNodes; ++k) {
          apply_update(model.nodes[k].net, g.grads[k], config.eta);
          entry.node_loss[k] += g.node_loss[k];
        }
      }
    }
    ++model.epochs_trained;
    log.epochs.push_back(entry);
  }
  return log;
}

}  // namespace mfd
