#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfd/features.hpp"
#include "mfd/flowparse.hpp"
#include "mfd/labels.hpp"

namespace mfd {

/// Flow counts per class of the reference corpus, in ClassLabel order.
inline constexpr std::array<std::size_t, kNumClasses> kReferenceCounts = {
    246015, 99, 349, 3085, 3612, 90, 229, 390, 755, 1259, 2864, 23260,
};
inline constexpr std::size_t kMinClassCount = 10;
inline constexpr double kDefaultScale = 0.04;

struct PortChoice {
  std::uint16_t port = 0;
  Protocol protocol = Protocol::TCP;
  double weight = 1;
};

/// Byte-value mixture for payload content.
struct ByteMixture {
  double text = 0;     // printable ASCII, letter-heavy
  double uniform = 0;  // all 256 values equally likely
  double zeros = 0;    // 0x00 padding
  double peaks = 0;    // class-specific byte values
  std::vector<std::uint8_t> peak_bytes;
};

/// Generative parameters of one class.
struct ClassProfile {
  ClassLabel label = ClassLabel::Benign;
  std::size_t count = 0;
  std::vector<PortChoice> server_ports;
  std::uint16_t client_port_lo = 49152;
  std::uint16_t client_port_hi = 65535;
  std::uint32_t server_net = 0;  // /16 prefix for server addresses
  ByteMixture bytes;
  std::array<std::array<double, kMarkovStates>, kMarkovStates> markov{};
  std::array<double, kMarkovStates> initial_state{};
  double iat_log_mu = 0;     // ln(microseconds)
  double iat_log_sigma = 1;
  std::size_t min_packets = 2;
  std::size_t max_packets = 20;
  double short_flow_prob = 0.15;  // chance of a 1-3 packet flow
  double forward_prob = 0.5;      // per-packet chance of client->server after the first
};

struct DatasetProfile {
  int version = 1;
  std::vector<ClassProfile> classes;  // ClassLabel order
};

/// Built-in profile; per-class counts are round(scale * reference) floored at 10.
DatasetProfile default_profile(double scale = kDefaultScale);
std::size_t scaled_count(std::size_t reference, double scale);

nlohmann::json profile_to_json(const DatasetProfile& p);
DatasetProfile profile_from_json(const nlohmann::json& j);

enum class SplitTag { Train, Test };

struct Dataset {
  std::vector<FlowRecord> flows;
  std::vector<SplitTag> tags;  // empty until split

  std::vector<ClassLabel> labels() const;
  std::array<std::size_t, kNumClasses> class_counts() const;
  Dataset subset(std::span<const std::size_t> idx) const;
};

/// Deterministic per seed; every flow draws from its own RNG stream keyed by
/// (seed, class, index), so generation order never changes the output.
Dataset generate_dataset(double scale, std::uint64_t seed);
Dataset generate_dataset(const DatasetProfile& profile, std::uint64_t seed);
FlowRecord generate_flow(const ClassProfile& profile, std::size_t index, std::uint64_t seed);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Stratified per class; each class keeps >= 1 sample on both sides.
SplitIndices split_indices(std::span<const ClassLabel> labels, double test_fraction, std::uint64_t seed);
/// Tags every flow of `dataset` in place and returns the index split.
SplitIndices split(Dataset& dataset, double test_fraction, std::uint64_t seed);

/// Indices after topping every class below `target` up to `target` by
/// sampling with replacement; originals come first in input order.
std::vector<std::size_t> oversample_indices(std::span<const ClassLabel> labels, std::size_t target, std::uint64_t seed);
/// Every class reduced to exactly `target` without replacement, input order kept.
std::vector<std::size_t> undersample_indices(std::span<const ClassLabel> labels, std::size_t target, std::uint64_t seed);
/// Nested stages; stage 1 is class-balanced at the smallest class count and
/// the last stage is everything.
std::vector<std::vector<std::size_t>> incremental_schedule_indices(std::span<const ClassLabel> labels, int stages,
                                                                   std::uint64_t seed);

Dataset oversample(const Dataset& train, std::size_t per_class_target, std::uint64_t seed);
Dataset undersample(const Dataset& train, std::size_t per_class_target, std::uint64_t seed);
std::vector<Dataset> incremental_schedule(const Dataset& train, int stages, std::uint64_t seed);

}  // namespace mfd
