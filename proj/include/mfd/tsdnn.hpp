#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfd/features.hpp"
#include "mfd/labels.hpp"
#include "mfd/nn.hpp"
#include "mfd/qdbp.hpp"

namespace mfd {

inline constexpr int kTsdnnSchemaVersion = 1;
inline constexpr std::size_t kNumNodes = 3;
inline constexpr std::array<std::size_t, kNumNodes> kNodeOutputs = {2, kNumBehaviors, kNumFamilies};

/// One classifier in the tree with its local class names and QDBP coefficients.
struct NodalNetwork {
  DenseNetwork net;
  std::vector<std::string> class_names;
  CoefficientMap coefficients;  // local class id -> c; missing ids mean 1
};

/// Three nodal networks chained by concatenation bridges:
///   node1(x) -> p1,  node2([x, p1]) -> p2,  node3([x, p1, p2]) -> p3.
struct TsdnnModel {
  std::size_t feature_dim = 0;
  std::array<NodalNetwork, kNumNodes> nodes;
  std::uint64_t seed = 0;
  int epochs_trained = 0;
  std::optional<MinMaxNormalizer> normalizer;

  /// Node input widths implied by the bridges: D, D+2, D+2+5.
  static std::array<std::size_t, kNumNodes> input_dims(std::size_t feature_dim);
  void validate() const;

  nlohmann::json to_json() const;
  static TsdnnModel from_json(const nlohmann::json& j);
};

/// Hidden widths are shared by all three nodes.
TsdnnModel build_tsdnn(std::size_t feature_dim, std::span<const std::size_t> hidden, std::uint64_t seed);

/// Default QDBP coefficients: 1.2 on the smallest local class of nodes 2 and 3.
void set_minority_coefficients(TsdnnModel& model, std::span<const ClassLabel> train_labels, double minority_coeff = 1.2);

Eigen::VectorXd concat_bridge(const Eigen::VectorXd& v_in, std::span<const Eigen::VectorXd> v_outs);

enum class RouteMode { Predicted, GroundTruth };

struct RouteTrace {
  Eigen::VectorXd node1;
  std::optional<Eigen::VectorXd> node2;
  std::optional<Eigen::VectorXd> node3;
  int decision1 = 0;
  std::optional<int> decision2;
  std::optional<int> decision3;
  ClassLabel label = ClassLabel::Benign;
};

/// In GroundTruth mode `truth` selects the route; otherwise argmax does.
RouteTrace forward_route(const TsdnnModel& model, const Eigen::VectorXd& x, RouteMode mode,
                         std::optional<ClassLabel> truth = std::nullopt);

RouteTrace predict(const TsdnnModel& model, const Eigen::VectorXd& x);
/// Predicted-mode routing for a batch (one column per sample).
std::vector<RouteTrace> predict_batch(const TsdnnModel& model, const Eigen::MatrixXd& inputs);

struct TsdnnGradients {
  std::array<std::vector<PerSampleGradient>, kNumNodes> per_node;  // class_id = local class
  double loss = 0;
};

/// Ground-truth routing; per-sample gradients of the summed node losses. With
/// `detach_bridges` the bridge vectors are treated as constants.
TsdnnGradients tsdnn_loss_and_grads(const TsdnnModel& model, const Eigen::MatrixXd& inputs,
                                    std::span<const ClassLabel> labels, bool detach_bridges = false);

/// Summed node losses under ground-truth routing.
double tsdnn_loss(const TsdnnModel& model, const Eigen::MatrixXd& inputs, std::span<const ClassLabel> labels);

/// Local class partitions seen by each node: all samples at node1, malicious
/// samples at node2, ransomware samples at node3. Indices refer to `labels`.
std::array<ClassPartition, kNumNodes> local_partitions(std::span<const ClassLabel> labels);

struct NodeGradients {
  std::array<ParamGrad, kNumNodes> grads;
  std::array<double, kNumNodes> node_loss{};
};

/// Batched sum over samples of w_k(s) * dLoss_s/dtheta_k for each node k,
/// with w_k from that node's weighting.
NodeGradients tsdnn_weighted_gradients(const TsdnnModel& model, const Eigen::MatrixXd& inputs,
                                       std::span<const ClassLabel> labels,
                                       const std::array<QdbpWeighting, kNumNodes>& weightings,
                                       bool detach_bridges = false);

struct TsdnnEpochLog {
  int epoch = 0;
  std::array<double, kNumNodes> node_loss{};
};

struct TsdnnTrainLog {
  std::array<double, kNumNodes> local_imbalance{};  // majority / minority count per node
  double global_imbalance = 0;                      // over the 12 flat classes
  std::vector<TsdnnEpochLog> epochs;

  nlohmann::json to_json() const;
};

struct TsdnnTrainOptions {
  /// Classes intentionally missing from the training data (zero-shot holdout).
  std::set<ClassLabel> excluded;
};

/// End-to-end training: every epoch computes all node gradients at the same
/// parameter snapshot and applies one QDBP step per node (node1, node2, node3).
TsdnnTrainLog train(TsdnnModel& model, const Eigen::MatrixXd& inputs, std::span<const ClassLabel> labels,
                    const TrainConfig& config, const TsdnnTrainOptions& options = {});

}  // namespace mfd
