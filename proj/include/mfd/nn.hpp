#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace mfd {

enum class Activation { ReLU, Softmax };

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd biases;   // out
  Activation activation = Activation::ReLU;
};

/// Dense feed-forward classifier: ReLU hidden layers, softmax output.
struct DenseNetwork {
  std::vector<DenseLayer> layers;

  /// Glorot-uniform weights, zero biases. `dims` = {input, hidden..., classes}.
  static DenseNetwork build(std::span<const std::size_t> dims, std::uint64_t seed);

  std::size_t input_dim() const { return static_cast<std::size_t>(layers.front().weights.cols()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(layers.back().weights.rows()); }
  std::vector<std::size_t> dims() const;
  std::size_t parameter_count() const;

  /// Throws BadSpec unless dimensions chain, the last layer is softmax and
  /// every parameter is finite.
  void validate() const;

  nlohmann::json to_json() const;
  static DenseNetwork from_json(const nlohmann::json& j);

  bool operator==(const DenseNetwork& other) const;
};

/// Parameter-shaped gradient (or update) container.
struct ParamGrad {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static ParamGrad zeros_like(const DenseNetwork& net);

  bool same_shape(const DenseNetwork& net) const;
  bool same_shape(const ParamGrad& other) const;
  void add_scaled(const ParamGrad& other, double scale);  // this += scale * other
  ParamGrad& operator+=(const ParamGrad& other);
  double squared_norm() const;
  double dot(const ParamGrad& other) const;
  /// Flattened in layer order, weights (column-major) then biases.
  Eigen::VectorXd flatten() const;
  bool all_finite() const;
};

/// Gradient of one sample's loss; `class_id` is the sample's class in the
/// caller's class space (global label, or a node-local class).
struct PerSampleGradient {
  ParamGrad grad;
  int class_id = 0;
};

/// Per-layer activations for a batch (one column per sample). activations[0]
/// is the input; activations.back() holds the softmax probabilities.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;

  const Eigen::MatrixXd& probs() const { return activations.back(); }
};

struct ForwardResult {
  std::vector<Eigen::VectorXd> activations;
  Eigen::VectorXd probs;
};

ForwardCache forward_batch(const DenseNetwork& net, const Eigen::MatrixXd& inputs);
ForwardResult forward(const DenseNetwork& net, const Eigen::VectorXd& x);

struct BackwardResult {
  ParamGrad grad;             // sum over samples of weight_s * dLoss_s/dtheta
  Eigen::MatrixXd input_grad;  // unweighted dLoss_s/dinput, one column per sample
};

/// Backpropagates upstream gradients w.r.t. the output logits through a
/// cached forward pass. Per-sample weights scale each sample's contribution
/// to the parameter gradient only; an empty span means weight 1 everywhere.
BackwardResult backward_from_logits(const DenseNetwork& net, const ForwardCache& cache,
                                    const Eigen::MatrixXd& dlogits,
                                    std::span<const double> sample_weights = {});

/// dLoss/dlogits for cross-entropy on softmax outputs: probs - one_hot(labels).
Eigen::MatrixXd cross_entropy_dlogits(const Eigen::MatrixXd& probs, std::span<const int> labels);

/// Maps dLoss/dprobs to dLoss/dlogits through the softmax Jacobian.
Eigen::MatrixXd softmax_backward(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& dprobs);

/// -log probs[y], computed from logits for stability.
double cross_entropy_loss(const DenseNetwork& net, const Eigen::VectorXd& x, int y);
double cross_entropy_loss_batch(const DenseNetwork& net, const Eigen::MatrixXd& inputs,
                                std::span<const int> labels);

PerSampleGradient backward(const DenseNetwork& net, const Eigen::VectorXd& x, int y);

/// Central differences (L(theta+eps) - L(theta-eps)) / 2eps, one parameter at a time.
PerSampleGradient finite_difference_gradient(const DenseNetwork& net, const Eigen::VectorXd& x, int y,
                                             double eps);

/// Sum over samples of weight_s * dLoss_s/dtheta, computed batched.
ParamGrad weighted_gradient(const DenseNetwork& net, const Eigen::MatrixXd& inputs,
                            std::span<const int> labels, std::span<const double> sample_weights);

/// theta <- theta - eta * update
void apply_update(DenseNetwork& net, const ParamGrad& update, double eta);

/// Sum of per-sample gradients, accumulated in input order.
ParamGrad sum_gradients(const DenseNetwork& net, std::span<const PerSampleGradient> grads);

/// Plain backpropagation: theta <- theta - eta * sum(grads).
void sgd_step(DenseNetwork& net, std::span<const PerSampleGradient> grads, double eta);

/// argmax with lowest-index tie-breaking.
int argmax(const Eigen::Ref<const Eigen::VectorXd>& v);

struct TrainConfig {
  double eta = 0.05;
  int epochs = 100;
  std::uint64_t seed = 7;
  std::size_t batch_size = 0;  // 0 = full batch

  void validate() const;
};

}  // namespace mfd
