#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfd/flowparse.hpp"

namespace mfd {

inline constexpr int kFeatureSchemaVersion = 1;

inline constexpr std::size_t kConnectionDim = 21;
inline constexpr std::size_t kHistogramDim = 256;
inline constexpr std::size_t kMarkovStates = 16;
inline constexpr std::size_t kMarkovDim = kMarkovStates * kMarkovStates;
inline constexpr std::size_t kHistogramOffset = kConnectionDim;
inline constexpr std::size_t kMarkovOffset = kHistogramOffset + kHistogramDim;
inline constexpr std::size_t kFeatureDim = kMarkovOffset + kMarkovDim;  // 533

inline constexpr std::size_t kMarkovBinWidth = 94;
inline constexpr std::size_t kDefaultHistogramCap = 16384;

/// Slots of the connection block. Inter-arrival statistics occupy the last
/// four slots.
namespace conn {
inline constexpr std::size_t kTcp = 0, kUdp = 1;
inline constexpr std::size_t kSrcPortClass = 2;  // 3 slots: well-known, registered, ephemeral
inline constexpr std::size_t kDstPortClass = 5;  // 3 slots
inline constexpr std::size_t kSrcPortNorm = 8, kDstPortNorm = 9;
inline constexpr std::size_t kLogPackets = 10, kLogBytes = 11;
inline constexpr std::size_t kForwardFraction = 12;
inline constexpr std::size_t kLenMean = 13, kLenStd = 14, kLenMin = 15, kLenMax = 16;
inline constexpr std::size_t kIatMean = 17, kIatStd = 18, kIatMin = 19, kIatMax = 20;
}  // namespace conn

struct FeatureVector {
  std::vector<double> values;
  int schema_version = kFeatureSchemaVersion;
};

using MarkovMatrix = std::array<std::array<double, kMarkovStates>, kMarkovStates>;

std::size_t length_bin(std::size_t payload_len);

std::array<double, kConnectionDim> connection_features(const FlowRecord& flow);
std::array<double, kHistogramDim> payload_histogram(const FlowRecord& flow,
                                                    std::size_t cap_bytes = kDefaultHistogramCap);
MarkovMatrix markov_matrix(const FlowRecord& flow);
/// mean, std, min, max of log1p(inter-arrival microseconds).
std::array<double, 4> interarrival_features(const FlowRecord& flow);

FeatureVector featurize(const FlowRecord& flow);

/// Column names of the 533 feature dimensions, in vector order.
const std::vector<std::string>& feature_names();

/// Per-dimension min-max scaling fit on a training split.
class MinMaxNormalizer {
public:
  MinMaxNormalizer() = default;
  MinMaxNormalizer(std::vector<double> mins, std::vector<double> maxs);

  static MinMaxNormalizer fit(std::span<const std::vector<double>> rows);

  /// Scales into [0, 1] and clips; constant dimensions map to 0.
  std::vector<double> apply(std::span<const double> x) const;

  std::size_t dim() const { return mins_.size(); }
  const std::vector<double>& mins() const { return mins_; }
  const std::vector<double>& maxs() const { return maxs_; }

  nlohmann::json to_json() const;
  static MinMaxNormalizer from_json(const nlohmann::json& j);

private:
  std::vector<double> mins_;
  std::vector<double> maxs_;
};

struct LabeledFeatures {
  std::vector<std::vector<double>> rows;
  std::vector<ClassLabel> labels;
};

void write_feature_csv(std::ostream& out, const LabeledFeatures& data);
LabeledFeatures read_feature_csv(std::istream& in);

}  // namespace mfd
