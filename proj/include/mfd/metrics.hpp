#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace mfd {

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
public:
  explicit ConfusionMatrix(std::size_t k = 0) : k_(k), counts_(k * k, 0) {}

  std::size_t classes() const { return k_; }
  std::size_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * k_ + pred]; }
  std::size_t& at(std::size_t truth, std::size_t pred) { return counts_[truth * k_ + pred]; }

  std::size_t total() const;
  std::size_t true_positives(std::size_t c) const { return at(c, c); }
  std::size_t false_positives(std::size_t c) const;  // column sum minus diagonal
  std::size_t support(std::size_t c) const;          // row sum

  bool operator==(const ConfusionMatrix&) const = default;

private:
  std::size_t k_;
  std::vector<std::size_t> counts_;
};

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> truths, std::size_t k);

double accuracy(const ConfusionMatrix& cm);

/// Mean over all K classes of TP/(TP+FP); a never-predicted class counts as 0.
double average_precision(const ConfusionMatrix& cm);

/// TP/(TP+FP), 0 when the class is never predicted.
double precision(const ConfusionMatrix& cm, std::size_t c);
/// TP/support, 0 when the class has no samples.
double recall(const ConfusionMatrix& cm, std::size_t c);

/// {accuracy, avg_precision, per_class:{name:{precision, recall, support}}, matrix}
nlohmann::ordered_json metrics_json(const ConfusionMatrix& cm, std::span<const std::string> class_names);

void write_matrix_csv(std::ostream& out, const ConfusionMatrix& cm, std::span<const std::string> class_names);

}  // namespace mfd
