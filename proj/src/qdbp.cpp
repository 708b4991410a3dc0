#include "mfd/qdbp.hpp"

#include <cmath>

#include "mfd/error.hpp"

namespace mfd {

ClassPartition ClassPartition::from_labels(std::span<const int> labels) {
  ClassPartition p;
  for (std::size_t i = 0; i < labels.size(); ++i) p.classes[labels[i]].push_back(i);
  return p;
}

std::size_t ClassPartition::total() const {
  std::size_t n = 0;
  for (const auto& [cls, idx] : classes) n += idx.size();
  return n;
}

std::size_t ClassPartition::cardinality(int cls) const {
  const auto it = classes.find(cls);
  return it == classes.end() ? 0 : it->second.size();
}

double QdbpWeighting::weight(int cls) const {
  const auto c = coefficient.find(cls);
  const auto n = cardinality.find(cls);
  if (c == coefficient.end() || n == cardinality.end()) {
    throw Error(Errc::UnknownClass, "no QDBP weighting entry for class " + std::to_string(cls));
  }
  return c->second / static_cast<double>(n->second);
}

std::vector<double> QdbpWeighting::sample_weights(std::span<const int> labels) const {
  std::vector<double> w;
  w.reserve(labels.size());
  for (int y : labels) w.push_back(weight(y));
  return w;
}

QdbpWeighting make_weighting(const ClassPartition& partition, const CoefficientMap& coefficients) {
  QdbpWeighting w;
  for (const auto& [cls, idx] : partition.classes) {
    if (idx.empty()) continue;
    const auto it = coefficients.find(cls);
    const double c = it == coefficients.end() ? 1.0 : it->second;
    if (!(c > 0) || !std::isfinite(c)) {
      throw Error(Errc::NonPositiveCoefficient, "class " + std::to_string(cls) + " has coefficient " +
                                                    std::to_string(c));
    }
    w.coefficient[cls] = c;
    w.cardinality[cls] = idx.size();
  }
  return w;
}

ParamGrad qdbp_aggregate(std::span<const PerSampleGradient> grads, const QdbpWeighting& w) {
  if (grads.empty()) throw Error(Errc::ShapeMismatch, "qdbp_aggregate needs at least one gradient");
  ParamGrad total = grads.front().grad;
  for (std::size_t l = 0; l < total.weights.size(); ++l) {
    total.weights[l].setZero();
    total.biases[l].setZero();
  }
  for (const auto& g : grads) total.add_scaled(g.grad, w.weight(g.class_id));
  return total;
}

void qdbp_step(DenseNetwork& net, std::span<const PerSampleGradient> grads, const QdbpWeighting& w, double eta) {
  apply_update(net, qdbp_aggregate(grads, w), eta);
}

ParamGrad qdbp_gradient(const DenseNetwork& net, const Eigen::MatrixXd& inputs, std::span<const int> labels,
                        const QdbpWeighting& w) {
  const auto weights = w.sample_weights(labels);
  return weighted_gradient(net, inputs, labels, weights);
}

CoefficientMap coefficients_from_json(const nlohmann::json& j, const std::function<int(const std::string&)>& resolve) {
  if (!j.is_object()) throw Error(Errc::BadFormat, "coefficient file must be a JSON object");
  CoefficientMap out;
  for (const auto& [name, value] : j.items()) {
    const int cls = resolve(name);
    if (cls < 0) continue;
    if (!value.is_number()) throw Error(Errc::BadFormat, "coefficient for '" + name + "' is not a number");
    const double c = value.get<double>();
    if (!(c > 0)) throw Error(Errc::NonPositiveCoefficient, "coefficient for '" + name + "' must be positive");
    out[cls] = c;
  }
  return out;
}

}  // namespace mfd
