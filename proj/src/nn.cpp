#include "mfd/nn.hpp"

#include <cmath>
#include <random>
#include <string>

#include "mfd/error.hpp"

namespace mfd {

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

void check_shape(bool ok, const char* what) {
  if (!ok) throw Error(Errc::ShapeMismatch, what);
}

Eigen::VectorXd column_log_softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

/// Logits of the output layer for a single input.
Eigen::VectorXd output_logits(const DenseNetwork& net, const Eigen::VectorXd& x) {
  Eigen::VectorXd a = x;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    Eigen::VectorXd z = layer.weights * a + layer.biases;
    if (l + 1 == net.layers.size()) return z;
    a = z.cwiseMax(0.0);
  }
  return a;
}

void check_input(const DenseNetwork& net, Eigen::Index rows) {
  if (static_cast<std::size_t>(rows) != net.input_dim()) {
    throw Error(Errc::DimensionMismatch, "network expects input dim " + std::to_string(net.input_dim()) +
                                             ", got " + std::to_string(rows));
  }
}

void check_label(const DenseNetwork& net, int y) {
  if (y < 0 || static_cast<std::size_t>(y) >= net.output_dim()) {
    throw Error(Errc::LabelOutOfRange, "label " + std::to_string(y) + " outside [0, " +
                                           std::to_string(net.output_dim()) + ")");
  }
}

}  // namespace

// ---- DenseNetwork ----------------------------------------------------------

DenseNetwork DenseNetwork::build(std::span<const std::size_t> dims, std::uint64_t seed) {
  if (dims.size() < 2) throw Error(Errc::BadSpec, "a network needs at least input and output dims");
  for (std::size_t d : dims) {
    if (d == 0) throw Error(Errc::BadSpec, "layer width must be positive");
  }
  std::mt19937_64 rng(seed);
  DenseNetwork net;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto fan_in = static_cast<Eigen::Index>(dims[l]);
    const auto fan_out = static_cast<Eigen::Index>(dims[l + 1]);
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer;
    layer.weights.resize(fan_out, fan_in);
    // Row-major fill order so the draw sequence does not depend on storage.
    for (Eigen::Index r = 0; r < fan_out; ++r) {
      for (Eigen::Index c = 0; c < fan_in; ++c) layer.weights(r, c) = (2.0 * uniform01(rng) - 1.0) * s;
    }
    layer.biases = Eigen::VectorXd::Zero(fan_out);
    layer.activation = l + 2 == dims.size() ? Activation::Softmax : Activation::ReLU;
    net.layers.push_back(std::move(layer));
  }
  return net;
}

std::vector<std::size_t> DenseNetwork::dims() const {
  std::vector<std::size_t> d;
  if (layers.empty()) return d;
  d.push_back(input_dim());
  for (const auto& l : layers) d.push_back(static_cast<std::size_t>(l.weights.rows()));
  return d;
}

std::size_t DenseNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.biases.size());
  return n;
}

void DenseNetwork::validate() const {
  if (layers.empty()) throw Error(Errc::BadSpec, "network has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.biases.size() != layer.weights.rows()) throw Error(Errc::BadSpec, "bias/weight rows differ");
    if (l > 0 && layer.weights.cols() != layers[l - 1].weights.rows()) {
      throw Error(Errc::BadSpec, "layer dimensions do not chain at layer " + std::to_string(l));
    }
    const bool last = l + 1 == layers.size();
    if ((layer.activation == Activation::Softmax) != last) {
      throw Error(Errc::BadSpec, "softmax must be exactly the final activation");
    }
    if (!layer.weights.allFinite() || !layer.biases.allFinite()) {
      throw Error(Errc::BadSpec, "non-finite parameter in layer " + std::to_string(l));
    }
  }
}

nlohmann::json DenseNetwork::to_json() const {
  nlohmann::json j;
  j["dims"] = dims();
  auto& acts = j["activations"] = nlohmann::json::array();
  auto& ws = j["weights"] = nlohmann::json::array();
  auto& bs = j["biases"] = nlohmann::json::array();
  for (const auto& l : layers) {
    acts.push_back(l.activation == Activation::ReLU ? "relu" : "softmax");
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weights.size()));
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.push_back(l.weights(r, c));
    }
    ws.push_back(std::move(w));
    bs.push_back(std::vector<double>(l.biases.data(), l.biases.data() + l.biases.size()));
  }
  return j;
}

DenseNetwork DenseNetwork::from_json(const nlohmann::json& j) {
  const auto dims = j.at("dims").get<std::vector<std::size_t>>();
  const auto& acts = j.at("activations");
  const auto& ws = j.at("weights");
  const auto& bs = j.at("biases");
  if (dims.size() < 2 || acts.size() + 1 != dims.size() || ws.size() != acts.size() || bs.size() != acts.size()) {
    throw Error(Errc::BadFormat, "inconsistent network checkpoint");
  }
  DenseNetwork net;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto rows = static_cast<Eigen::Index>(dims[l + 1]);
    const auto cols = static_cast<Eigen::Index>(dims[l]);
    const auto w = ws[l].get<std::vector<double>>();
    const auto b = bs[l].get<std::vector<double>>();
    if (w.size() != static_cast<std::size_t>(rows * cols) || b.size() != static_cast<std::size_t>(rows)) {
      throw Error(Errc::BadFormat, "checkpoint array sizes disagree with dims");
    }
    DenseLayer layer;
    layer.weights.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) layer.weights(r, c) = w[static_cast<std::size_t>(r * cols + c)];
    }
    layer.biases = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
    const auto act = acts[l].get<std::string>();
    if (act != "relu" && act != "softmax") throw Error(Errc::BadFormat, "unknown activation " + act);
    layer.activation = act == "relu" ? Activation::ReLU : Activation::Softmax;
    net.layers.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

bool DenseNetwork::operator==(const DenseNetwork& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& a = layers[l];
    const auto& b = other.layers[l];
    if (a.activation != b.activation || a.weights.rows() != b.weights.rows() ||
        a.weights.cols() != b.weights.cols() || a.weights != b.weights || a.biases != b.biases) {
      return false;
    }
  }
  return true;
}

// ---- ParamGrad -------------------------------------------------------------

ParamGrad ParamGrad::zeros_like(const DenseNetwork& net) {
  ParamGrad g;
  for (const auto& l : net.layers) {
    g.weights.push_back(Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()));
    g.biases.push_back(Eigen::VectorXd::Zero(l.biases.size()));
  }
  return g;
}

bool ParamGrad::same_shape(const DenseNetwork& net) const {
  if (weights.size() != net.layers.size() || biases.size() != net.layers.size()) return false;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != net.layers[l].weights.rows() || weights[l].cols() != net.layers[l].weights.cols() ||
        biases[l].size() != net.layers[l].biases.size()) {
      return false;
    }
  }
  return true;
}

bool ParamGrad::same_shape(const ParamGrad& other) const {
  if (weights.size() != other.weights.size() || biases.size() != other.biases.size()) return false;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != other.weights[l].rows() || weights[l].cols() != other.weights[l].cols() ||
        biases[l].size() != other.biases[l].size()) {
      return false;
    }
  }
  return true;
}

void ParamGrad::add_scaled(const ParamGrad& other, double scale) {
  check_shape(same_shape(other), "gradient shapes differ");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += scale * other.weights[l];
    biases[l] += scale * other.biases[l];
  }
}

ParamGrad& ParamGrad::operator+=(const ParamGrad& other) {
  check_shape(same_shape(other), "gradient shapes differ");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += other.weights[l];
    biases[l] += other.biases[l];
  }
  return *this;
}

double ParamGrad::squared_norm() const {
  double s = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) s += weights[l].squaredNorm() + biases[l].squaredNorm();
  return s;
}

double ParamGrad::dot(const ParamGrad& other) const {
  check_shape(same_shape(other), "gradient shapes differ");
  double s = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    s += weights[l].cwiseProduct(other.weights[l]).sum() + biases[l].dot(other.biases[l]);
  }
  return s;
}

Eigen::VectorXd ParamGrad::flatten() const {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  Eigen::VectorXd v(n);
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    v.segment(at, weights[l].size()) = Eigen::Map<const Eigen::VectorXd>(weights[l].data(), weights[l].size());
    at += weights[l].size();
    v.segment(at, biases[l].size()) = biases[l];
    at += biases[l].size();
  }
  return v;
}

bool ParamGrad::all_finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
  }
  return true;
}

// ---- forward / backward ----------------------------------------------------

ForwardCache forward_batch(const DenseNetwork& net, const Eigen::MatrixXd& inputs) {
  check_input(net, inputs.rows());
  ForwardCache cache;
  cache.activations.reserve(net.layers.size() + 1);
  cache.activations.push_back(inputs);
  for (const auto& layer : net.layers) {
    Eigen::MatrixXd z = layer.weights * cache.activations.back();
    z.colwise() += layer.biases;
    if (layer.activation == Activation::ReLU) {
      z = z.cwiseMax(0.0);
    } else {
      // Column-wise softmax with max subtraction.
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        auto col = z.col(c);
        col.array() -= col.maxCoeff();
        col = col.array().exp();
        col /= col.sum();
      }
    }
    cache.activations.push_back(std::move(z));
  }
  return cache;
}

ForwardResult forward(const DenseNetwork& net, const Eigen::VectorXd& x) {
  ForwardCache cache = forward_batch(net, x);
  ForwardResult r;
  for (auto& a : cache.activations) r.activations.emplace_back(a.col(0));
  r.probs = r.activations.back();
  return r;
}

Eigen::MatrixXd cross_entropy_dlogits(const Eigen::MatrixXd& probs, std::span<const int> labels) {
  if (static_cast<std::size_t>(probs.cols()) != labels.size()) {
    throw Error(Errc::DimensionMismatch, "label count differs from batch size");
  }
  Eigen::MatrixXd d = probs;
  for (std::size_t s = 0; s < labels.size(); ++s) {
    if (labels[s] < 0 || labels[s] >= probs.rows()) {
      throw Error(Errc::LabelOutOfRange, "label " + std::to_string(labels[s]));
    }
    d(labels[s], static_cast<Eigen::Index>(s)) -= 1.0;
  }
  return d;
}

Eigen::MatrixXd softmax_backward(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& dprobs) {
  // dL/dz_j = p_j * (g_j - sum_k g_k p_k)
  const Eigen::RowVectorXd inner = probs.cwiseProduct(dprobs).colwise().sum();
  return probs.cwiseProduct(dprobs - inner.replicate(probs.rows(), 1));
}

BackwardResult backward_from_logits(const DenseNetwork& net, const ForwardCache& cache,
                                    const Eigen::MatrixXd& dlogits, std::span<const double> sample_weights) {
  const Eigen::Index batch = cache.activations.front().cols();
  if (dlogits.cols() != batch || static_cast<std::size_t>(dlogits.rows()) != net.output_dim()) {
    throw Error(Errc::DimensionMismatch, "upstream gradient shape does not match forward cache");
  }
  if (!sample_weights.empty() && static_cast<Eigen::Index>(sample_weights.size()) != batch) {
    throw Error(Errc::DimensionMismatch, "sample weight count differs from batch size");
  }
  const Eigen::Map<const Eigen::RowVectorXd> w(sample_weights.data(), static_cast<Eigen::Index>(sample_weights.size()));

  BackwardResult out;
  out.grad.weights.resize(net.layers.size());
  out.grad.biases.resize(net.layers.size());
  Eigen::MatrixXd delta = dlogits;
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const auto& layer = net.layers[l];
    const Eigen::MatrixXd& input = cache.activations[l];
    if (sample_weights.empty()) {
      out.grad.weights[l] = delta * input.transpose();
      out.grad.biases[l] = delta.rowwise().sum();
    } else {
      const Eigen::MatrixXd scaled = delta.array().rowwise() * w.array();
      out.grad.weights[l] = scaled * input.transpose();
      out.grad.biases[l] = scaled.rowwise().sum();
    }
    Eigen::MatrixXd down = layer.weights.transpose() * delta;
    if (l > 0) {
      // ReLU derivative evaluated on the layer input (a post-ReLU activation).
      delta = (input.array() > 0.0).select(down, 0.0);
    } else {
      out.input_grad = std::move(down);
    }
  }
  return out;
}

double cross_entropy_loss(const DenseNetwork& net, const Eigen::VectorXd& x, int y) {
  check_input(net, x.size());
  check_label(net, y);
  return -column_log_softmax(output_logits(net, x))(y);
}

double cross_entropy_loss_batch(const DenseNetwork& net, const Eigen::MatrixXd& inputs, std::span<const int> labels) {
  double total = 0;
  for (Eigen::Index s = 0; s < inputs.cols(); ++s) {
    total += cross_entropy_loss(net, inputs.col(s), labels[static_cast<std::size_t>(s)]);
  }
  return total;
}

PerSampleGradient backward(const DenseNetwork& net, const Eigen::VectorXd& x, int y) {
  check_input(net, x.size());
  check_label(net, y);
  const ForwardCache cache = forward_batch(net, x);
  const int labels[] = {y};
  PerSampleGradient g;
  g.grad = backward_from_logits(net, cache, cross_entropy_dlogits(cache.probs(), labels)).grad;
  g.class_id = y;
  return g;
}

PerSampleGradient finite_difference_gradient(const DenseNetwork& net, const Eigen::VectorXd& x, int y, double eps) {
  if (!(eps > 0)) throw Error(Errc::BadConfig, "finite-difference step must be positive");
  check_input(net, x.size());
  check_label(net, y);
  DenseNetwork probe = net;
  PerSampleGradient g;
  g.grad = ParamGrad::zeros_like(net);
  g.class_id = y;
  const auto central = [&](double& param) {
    const double saved = param;
    param = saved + eps;
    const double up = cross_entropy_loss(probe, x, y);
    param = saved - eps;
    const double down = cross_entropy_loss(probe, x, y);
    param = saved;
    return (up - down) / (2 * eps);
  };
  for (std::size_t l = 0; l < probe.layers.size(); ++l) {
    auto& layer = probe.layers[l];
    for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) g.grad.weights[l](r, c) = central(layer.weights(r, c));
    }
    for (Eigen::Index r = 0; r < layer.biases.size(); ++r) g.grad.biases[l](r) = central(layer.biases(r));
  }
  return g;
}

ParamGrad weighted_gradient(const DenseNetwork& net, const Eigen::MatrixXd& inputs, std::span<const int> labels,
                            std::span<const double> sample_weights) {
  const ForwardCache cache = forward_batch(net, inputs);
  return backward_from_logits(net, cache, cross_entropy_dlogits(cache.probs(), labels), sample_weights).grad;
}

void apply_update(DenseNetwork& net, const ParamGrad& update, double eta) {
  check_shape(update.same_shape(net), "update does not match network shape");
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    net.layers[l].weights -= eta * update.weights[l];
    net.layers[l].biases -= eta * update.biases[l];
  }
}

ParamGrad sum_gradients(const DenseNetwork& net, std::span<const PerSampleGradient> grads) {
  ParamGrad total = ParamGrad::zeros_like(net);
  for (const auto& g : grads) {
    check_shape(g.grad.same_shape(net), "per-sample gradient does not match network shape");
    total += g.grad;
  }
  return total;
}

void sgd_step(DenseNetwork& net, std::span<const PerSampleGradient> grads, double eta) {
  if (grads.empty()) throw Error(Errc::ShapeMismatch, "sgd_step needs at least one gradient");
  apply_update(net, sum_gradients(net, grads), eta);
}

int argmax(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return static_cast<int>(best);
}

void TrainConfig::validate() const {
  if (!(eta > 0) || !std::isfinite(eta)) throw Error(Errc::BadConfig, "eta must be positive");
  if (epochs <= 0) throw Error(Errc::BadConfig, "epochs must be positive");
}

}  // namespace mfd
