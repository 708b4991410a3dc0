#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mfd/datagen.hpp"
#include "mfd/features.hpp"
#include "mfd/metrics.hpp"
#include "mfd/nn.hpp"
#include "mfd/qdbp.hpp"
#include "mfd/tsdnn.hpp"

namespace mfd {

/// Version string embedded in every report.
std::string_view artifact_version();

enum class Method { VanillaDnn, DnnOversample, DnnUndersample, DnnIncremental, DnnQdbp, TsdnnQdbp };

inline constexpr std::array<Method, 6> kAllMethods = {Method::VanillaDnn,     Method::DnnOversample,
                                                      Method::DnnUndersample, Method::DnnIncremental,
                                                      Method::DnnQdbp,        Method::TsdnnQdbp};

std::string_view method_name(Method m);
std::optional<Method> parse_method(std::string_view name);

struct ExperimentConfig {
  std::uint64_t seed = 7;
  double scale = kDefaultScale;
  double test_fraction = 0.5;
  TrainConfig train{.eta = 0.02, .epochs = 50, .seed = 7, .batch_size = 0};
  std::vector<std::size_t> hidden = {256, 128, 64};
  /// Per-node coefficient overrides; when unset the smallest local class of
  /// nodes 2 and 3 gets `minority_coefficient`.
  std::optional<std::array<CoefficientMap, kNumNodes>> coefficients;
  double minority_coefficient = 1.2;
  std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
  std::size_t oversample_target = 0;   // 0: round(10000 * scale)
  std::size_t undersample_target = 0;  // 0: smallest training class
  int incremental_stages = 4;
  std::vector<double> fractions = {0.05, 0.25, 0.5, 1.0};
  std::vector<ClassLabel> holdout = {ClassLabel::Cerber};

  void validate() const;
  nlohmann::ordered_json to_json() const;
};

/// Dense column-per-sample design matrix built from normalized features.
Eigen::MatrixXd to_matrix(std::span<const std::vector<double>> rows);

std::vector<std::vector<double>> featurize_all(std::span<const FlowRecord> flows);

/// Generated data, its split, and normalized train/test matrices.
struct PreparedData {
  Dataset data;
  SplitIndices split;
  MinMaxNormalizer normalizer;
  std::vector<std::vector<double>> raw_features;  // unnormalized, one per flow
  Eigen::MatrixXd train_x, test_x;
  std::vector<ClassLabel> train_y, test_y;
};

/// `excluded` classes are dropped from the training side only.
PreparedData prepare_data(const ExperimentConfig& config, std::span<const ClassLabel> excluded = {});

/// Full-batch (or mini-batch) gradient descent with fixed per-sample weights.
void train_dnn(DenseNetwork& net, const Eigen::MatrixXd& inputs, std::span<const int> labels,
               std::span<const double> sample_weights, const TrainConfig& config);

std::vector<int> predict_dnn(const DenseNetwork& net, const Eigen::MatrixXd& inputs);
std::vector<int> predict_tsdnn(const TsdnnModel& model, const Eigen::MatrixXd& inputs);

std::vector<int> label_indices(std::span<const ClassLabel> labels);
const std::vector<std::string>& class_names();

struct MethodResult {
  Method method = Method::VanillaDnn;
  ConfusionMatrix matrix;
  std::size_t train_samples = 0;
};

/// Trains and evaluates one method on prepared data.
MethodResult run_method(Method method, const ExperimentConfig& config, const PreparedData& data);

/// Trains the TSDNN on prepared data with the configured coefficients.
TsdnnModel train_tsdnn(const ExperimentConfig& config, const PreparedData& data,
                       std::span<const ClassLabel> excluded = {}, TsdnnTrainLog* log = nullptr);

struct CompareReport {
  std::vector<MethodResult> results;
  nlohmann::ordered_json json;
};
CompareReport run_compare(const ExperimentConfig& config);
/// One row per method: method, accuracy, avg_precision.
void write_compare_csv(std::ostream& out, const CompareReport& report);

struct PartialFlowRow {
  double fraction = 0;
  double accuracy = 0;
};
struct PartialFlowReport {
  std::vector<PartialFlowRow> rows;
  nlohmann::ordered_json json;
};
/// Binary benign/malicious accuracy of node1 on truncated test flows; the
/// model is trained once on complete flows.
PartialFlowReport run_partial_flow(const ExperimentConfig& config);
void write_partial_flow_csv(std::ostream& out, const PartialFlowReport& report);

struct ZeroShotReport {
  std::vector<std::pair<ClassLabel, double>> flagged;  // fraction flagged Malicious per held-out class
  double benign_fpr_full = 0;
  double benign_fpr_holdout = 0;
  nlohmann::ordered_json json;
};
ZeroShotReport run_zero_shot(const ExperimentConfig& config);

}  // namespace mfd
