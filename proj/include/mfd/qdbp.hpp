#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfd/nn.hpp"

namespace mfd {

/// Training indices grouped by class id. Empty classes are never stored.
struct ClassPartition {
  std::map<int, std::vector<std::size_t>> classes;

  static ClassPartition from_labels(std::span<const int> labels);

  std::size_t total() const;
  std::size_t cardinality(int cls) const;  // 0 when absent
};

using CoefficientMap = std::map<int, double>;

/// Quantity-dependent weighting: each sample of class t is scaled by
/// coefficient[t] / cardinality[t].
struct QdbpWeighting {
  std::map<int, double> coefficient;
  std::map<int, std::size_t> cardinality;

  /// c/n for one class; throws UnknownClass.
  double weight(int cls) const;
  /// c/n for every sample, in order.
  std::vector<double> sample_weights(std::span<const int> labels) const;
};

/// Missing coefficients default to 1; coefficients for classes outside the
/// partition are ignored.
QdbpWeighting make_weighting(const ClassPartition& partition, const CoefficientMap& coefficients = {});

/// Sum over samples of (c/n of the sample's class) * gradient, accumulated in
/// input order. `grads` must be nonempty.
ParamGrad qdbp_aggregate(std::span<const PerSampleGradient> grads, const QdbpWeighting& w);

/// theta <- theta - eta * qdbp_aggregate(grads, w)
void qdbp_step(DenseNetwork& net, std::span<const PerSampleGradient> grads, const QdbpWeighting& w, double eta);

/// Batched equivalent of qdbp_aggregate over backward() of every sample.
ParamGrad qdbp_gradient(const DenseNetwork& net, const Eigen::MatrixXd& inputs, std::span<const int> labels,
                        const QdbpWeighting& w);

/// Reads {class_name: coefficient}; `resolve` maps a name to a class id or
/// returns -1 for names outside this class space (those entries are skipped).
CoefficientMap coefficients_from_json(const nlohmann::json& j, const std::function<int(const std::string&)>& resolve);

}  // namespace mfd
