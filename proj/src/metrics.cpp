#include "mfd/metrics.hpp"

#include <ostream>

#include "mfd/error.hpp"

namespace mfd {

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (std::size_t c : counts_) n += c;
  return n;
}

std::size_t ConfusionMatrix::false_positives(std::size_t c) const {
  std::size_t col = 0;
  for (std::size_t t = 0; t < k_; ++t) col += at(t, c);
  return col - at(c, c);
}

std::size_t ConfusionMatrix::support(std::size_t c) const {
  std::size_t row = 0;
  for (std::size_t p = 0; p < k_; ++p) row += at(c, p);
  return row;
}

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> truths, std::size_t k) {
  if (preds.size() != truths.size()) {
    throw Error(Errc::LengthMismatch, std::to_string(preds.size()) + " predictions vs " +
                                          std::to_string(truths.size()) + " labels");
  }
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int p = preds[i];
    const int t = truths[i];
    if (p < 0 || t < 0 || static_cast<std::size_t>(p) >= k || static_cast<std::size_t>(t) >= k) {
      throw Error(Errc::LabelOutOfRange, "label outside [0, " + std::to_string(k) + ")");
    }
    ++cm.at(static_cast<std::size_t>(t), static_cast<std::size_t>(p));
  }
  return cm;
}

double accuracy(const ConfusionMatrix& cm) {
  const std::size_t n = cm.total();
  if (n == 0) throw Error(Errc::EmptyMatrix, "accuracy of an empty confusion matrix");
  std::size_t trace = 0;
  for (std::size_t c = 0; c < cm.classes(); ++c) trace += cm.at(c, c);
  return static_cast<double>(trace) / static_cast<double>(n);
}

double precision(const ConfusionMatrix& cm, std::size_t c) {
  const std::size_t tp = cm.true_positives(c);
  const std::size_t predicted = tp + cm.false_positives(c);
  return predicted == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(predicted);
}

double recall(const ConfusionMatrix& cm, std::size_t c) {
  const std::size_t s = cm.support(c);
  return s == 0 ? 0.0 : static_cast<double>(cm.true_positives(c)) / static_cast<double>(s);
}

double average_precision(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw Error(Errc::EmptyMatrix, "average precision of an empty confusion matrix");
  double sum = 0;
  for (std::size_t c = 0; c < cm.classes(); ++c) sum += precision(cm, c);
  return sum / static_cast<double>(cm.classes());
}

nlohmann::ordered_json metrics_json(const ConfusionMatrix& cm, std::span<const std::string> class_names) {
  nlohmann::ordered_json j;
  j["accuracy"] = accuracy(cm);
  j["avg_precision"] = average_precision(cm);
  auto& per = j["per_class"] = nlohmann::ordered_json::object();
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    per[class_names[c]] = {{"precision", precision(cm, c)}, {"recall", recall(cm, c)}, {"support", cm.support(c)}};
  }
  auto& m = j["matrix"] = nlohmann::ordered_json::array();
  for (std::size_t t = 0; t < cm.classes(); ++t) {
    auto row = nlohmann::ordered_json::array();
    for (std::size_t p = 0; p < cm.classes(); ++p) row.push_back(cm.at(t, p));
    m.push_back(std::move(row));
  }
  return j;
}

void write_matrix_csv(std::ostream& out, const ConfusionMatrix& cm, std::span<const std::string> class_names) {
  out << "true\\pred";
  for (const auto& n : class_names) out << ',' << n;
  out << '\n';
  for (std::size_t t = 0; t < cm.classes(); ++t) {
    out << class_names[t];
    for (std::size_t p = 0; p < cm.classes(); ++p) out << ',' << cm.at(t, p);
    out << '\n';
  }
}

}  // namespace mfd
