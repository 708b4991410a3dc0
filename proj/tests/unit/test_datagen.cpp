#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include <Eigen/Dense>

#include "mfd/datagen.hpp"
#include "mfd/error.hpp"
#include "mfd/features.hpp"

using namespace mfd;

namespace {

std::vector<ClassLabel> labels_with_counts(std::initializer_list<std::pair<ClassLabel, std::size_t>> counts) {
  std::vector<ClassLabel> out;
  for (auto [l, n] : counts) out.insert(out.end(), n, l);
  return out;
}

std::map<ClassLabel, std::size_t> count_of(std::span<const ClassLabel> labels, std::span<const std::size_t> idx) {
  std::map<ClassLabel, std::size_t> m;
  for (std::size_t i : idx) ++m[labels[i]];
  return m;
}

const Dataset& small_dataset() {
  static const Dataset d = generate_dataset(0.01, 7);
  return d;
}

}  // namespace

TEST(Datagen, ScaledCounts) {
  const auto p = default_profile(0.04);
  ASSERT_EQ(p.classes.size(), kNumClasses);
  EXPECT_EQ(p.classes[index_of(ClassLabel::Benign)].count, 9841u);
  EXPECT_EQ(p.classes[index_of(ClassLabel::Cryptomix)].count, 10u);  // floored
  EXPECT_EQ(p.classes[index_of(ClassLabel::Cerber)].count, 930u);
  EXPECT_EQ(scaled_count(349, 0.04), 14u);
  EXPECT_EQ(scaled_count(99, 0.04), 10u);
  for (std::size_t c = 0; c < kNumClasses; ++c) EXPECT_EQ(default_profile(1.0).classes[c].count, kReferenceCounts[c]);
}

TEST(Datagen, ScaleBounds) {
  for (double bad : {0.0, -0.1, 1.5, 0.0004}) {
    try {
      default_profile(bad);
      FAIL() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::ScaleTooSmall);
    }
  }
  EXPECT_NO_THROW(default_profile(0.0005));  // 123 benign flows
}

TEST(Datagen, DatasetMatchesProfileCounts) {
  const Dataset& d = small_dataset();
  const auto p = default_profile(0.01);
  const auto counts = d.class_counts();
  for (std::size_t c = 0; c < kNumClasses; ++c) EXPECT_EQ(counts[c], p.classes[c].count);
  for (const auto& f : d.flows) {
    ASSERT_FALSE(f.packets.empty());
    ASSERT_EQ(f.packets.size(), f.directions.size());
    for (std::size_t i = 1; i < f.packets.size(); ++i) ASSERT_LE(f.packets[i - 1].ts_micros, f.packets[i].ts_micros);
    for (const auto& pk : f.packets) ASSERT_LE(pk.payload_len(), kMaxPayload);
  }
}

TEST(Datagen, Deterministic) {
  const Dataset again = generate_dataset(0.01, 7);
  EXPECT_EQ(again.flows, small_dataset().flows);
  const Dataset other = generate_dataset(0.01, 8);
  EXPECT_NE(other.flows, small_dataset().flows);

  // Flow streams are independent of generation order.
  const auto p = default_profile(0.01);
  const auto& cerber = p.classes[index_of(ClassLabel::Cerber)];
  const std::size_t offset = p.classes[index_of(ClassLabel::Cerber)].count;
  std::size_t first_cerber = 0;
  for (std::size_t c = 0; c < index_of(ClassLabel::Cerber); ++c) first_cerber += p.classes[c].count;
  EXPECT_EQ(generate_flow(cerber, 5, 7), small_dataset().flows[first_cerber + 5]);
  EXPECT_GT(offset, 5u);
}

TEST(Datagen, FlowKeysAreUnique) {
  std::set<std::string> keys;
  for (const auto& f : small_dataset().flows) keys.insert(f.key.to_string());
  EXPECT_EQ(keys.size(), small_dataset().flows.size());
}

TEST(Datagen, ProfileJsonRoundTrip) {
  const auto p = default_profile(0.02);
  const auto back = profile_from_json(nlohmann::json::parse(profile_to_json(p).dump()));
  EXPECT_EQ(profile_to_json(back), profile_to_json(p));
  EXPECT_EQ(generate_dataset(back, 3).flows, generate_dataset(p, 3).flows);

  auto j = profile_to_json(p);
  j["classes"][0]["markov"][0][0] = 5.0;
  EXPECT_THROW(profile_from_json(j), Error);
}

TEST(Split, StratifiedAndDisjoint) {
  const auto labels = small_dataset().labels();
  const SplitIndices s = split_indices(labels, 0.5, 7);
  EXPECT_EQ(s.train.size() + s.test.size(), labels.size());
  EXPECT_TRUE(std::is_sorted(s.train.begin(), s.train.end()));
  std::vector<std::size_t> all = s.train;
  all.insert(all.end(), s.test.begin(), s.test.end());
  std::sort(all.begin(), all.end());
  EXPECT_EQ(std::adjacent_find(all.begin(), all.end()), all.end());

  const auto tr = count_of(labels, s.train), te = count_of(labels, s.test);
  const auto total = small_dataset().class_counts();
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const ClassLabel l = kAllLabels[c];
    EXPECT_GE(tr.at(l), 1u);
    EXPECT_GE(te.at(l), 1u);
    EXPECT_LE(std::abs(static_cast<double>(te.at(l)) - 0.5 * static_cast<double>(total[c])), 1.0);
  }
  EXPECT_EQ(split_indices(labels, 0.5, 7).test, s.test);
}

TEST(Split, Errors) {
  const auto one_bot = labels_with_counts({{ClassLabel::Benign, 10}, {ClassLabel::Bot, 1}});
  try {
    split_indices(one_bot, 0.5, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ClassTooSmall);
  }
  const auto ok = labels_with_counts({{ClassLabel::Benign, 10}});
  EXPECT_THROW(split_indices(ok, 0.0, 1), Error);
  EXPECT_THROW(split_indices(ok, 1.0, 1), Error);
  // Extreme fractions still leave one sample on each side.
  const auto s = split_indices(labels_with_counts({{ClassLabel::Benign, 2}}), 0.99, 1);
  EXPECT_EQ(s.train.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
}

TEST(Resampling, Oversample) {
  const auto labels = labels_with_counts({{ClassLabel::Benign, 50}, {ClassLabel::Bot, 3}, {ClassLabel::Cerber, 20}});
  const auto idx = oversample_indices(labels, 30, 4);
  for (std::size_t i = 0; i < labels.size(); ++i) EXPECT_EQ(idx[i], i);  // originals first
  const auto m = count_of(labels, idx);
  EXPECT_EQ(m.at(ClassLabel::Benign), 50u);
  EXPECT_EQ(m.at(ClassLabel::Bot), 30u);
  EXPECT_EQ(m.at(ClassLabel::Cerber), 30u);
  for (std::size_t i = labels.size(); i < idx.size(); ++i) EXPECT_NE(labels[idx[i]], ClassLabel::Benign);
}

TEST(Resampling, Undersample) {
  const auto labels = labels_with_counts({{ClassLabel::Benign, 50}, {ClassLabel::Bot, 3}, {ClassLabel::Cerber, 20}});
  const auto idx = undersample_indices(labels, 3, 4);
  EXPECT_EQ(idx.size(), 9u);
  EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
  EXPECT_EQ(std::adjacent_find(idx.begin(), idx.end()), idx.end());
  for (auto [l, n] : count_of(labels, idx)) EXPECT_EQ(n, 3u);
  try {
    undersample_indices(labels, 4, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TargetTooLarge);
  }
}

TEST(Resampling, IncrementalSchedule) {
  const auto labels = small_dataset().labels();
  const auto stages = incremental_schedule_indices(labels, 4, 9);
  ASSERT_EQ(stages.size(), 4u);
  const auto counts = small_dataset().class_counts();
  const std::size_t min_count = *std::min_element(counts.begin(), counts.end());
  EXPECT_EQ(stages[0].size(), kNumClasses * min_count);
  for (auto [l, n] : count_of(labels, stages[0])) EXPECT_EQ(n, min_count);
  for (std::size_t s = 1; s < stages.size(); ++s) {
    EXPECT_GT(stages[s].size(), stages[s - 1].size());
    std::vector<std::size_t> a = stages[s - 1], b = stages[s];
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_TRUE(std::includes(b.begin(), b.end(), a.begin(), a.end()));
  }
  EXPECT_EQ(stages.back().size(), labels.size());
  EXPECT_THROW(incremental_schedule_indices(labels, 1, 9), Error);
}

TEST(Datagen, ClassesAreSeparable) {
  // Nearest class centroid on normalized features: a weak learner, so high
  // accuracy means the classes carry real signal.
  Dataset d = generate_dataset(0.01, 7);
  const SplitIndices s = split(d, 0.5, 7);
  std::vector<std::vector<double>> rows;
  for (const auto& f : d.flows) rows.push_back(featurize(f).values);
  std::vector<std::vector<double>> train_rows;
  for (std::size_t i : s.train) train_rows.push_back(rows[i]);
  const auto norm = MinMaxNormalizer::fit(train_rows);

  std::vector<Eigen::VectorXd> centroid(kNumClasses, Eigen::VectorXd::Zero(kFeatureDim));
  std::vector<double> n(kNumClasses, 0);
  for (std::size_t i : s.train) {
    const auto v = norm.apply(rows[i]);
    const auto c = static_cast<std::size_t>(index_of(d.flows[i].label));
    centroid[c] += Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    ++n[c];
  }
  for (std::size_t c = 0; c < kNumClasses; ++c) centroid[c] /= n[c];

  std::size_t malicious_right = 0, right = 0;
  for (std::size_t i : s.test) {
    const auto v = norm.apply(rows[i]);
    const Eigen::Map<const Eigen::VectorXd> x(v.data(), static_cast<Eigen::Index>(v.size()));
    std::size_t best = 0;
    for (std::size_t c = 1; c < kNumClasses; ++c) {
      if ((x - centroid[c]).squaredNorm() < (x - centroid[best]).squaredNorm()) best = c;
    }
    right += kAllLabels[best] == d.flows[i].label;
    malicious_right += is_malicious(kAllLabels[best]) == is_malicious(d.flows[i].label);
  }
  const double n_test = static_cast<double>(s.test.size());
  EXPECT_GE(static_cast<double>(malicious_right) / n_test, 0.95);
  EXPECT_GE(static_cast<double>(right) / n_test, 0.90);
  for (std::size_t i : s.test) EXPECT_EQ(d.tags[i], SplitTag::Test);
}
