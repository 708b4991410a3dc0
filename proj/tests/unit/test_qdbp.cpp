#include <gtest/gtest.h>

#include <random>

#include "mfd/error.hpp"
#include "mfd/qdbp.hpp"

using namespace mfd;

namespace {

struct Instance {
  DenseNetwork net;
  std::vector<PerSampleGradient> grads;
  std::vector<int> labels;
  Eigen::MatrixXd inputs;
};

/// Real per-sample gradients of a random small network over `k` classes.
Instance random_instance(std::mt19937_64& rng, std::size_t k, std::size_t n) {
  const std::size_t d = 3 + rng() % 4;
  Instance in;
  in.net = DenseNetwork::build(std::vector<std::size_t>{d, 2 + rng() % 5, k}, rng());
  in.inputs.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
  std::uniform_real_distribution<double> u(-1, 1);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < d; ++i) in.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)) = u(rng);
    // Every class appears at least once.
    const int y = s < k ? static_cast<int>(s) : static_cast<int>(rng() % k);
    in.labels.push_back(y);
    in.grads.push_back(backward(in.net, in.inputs.col(static_cast<Eigen::Index>(s)), y));
  }
  return in;
}

/// Brute force: explicit loops over every entry, samples in input order.
Eigen::VectorXd brute_force(const std::vector<PerSampleGradient>& grads, const std::map<int, double>& coeff,
                            const std::map<int, std::size_t>& card) {
  Eigen::VectorXd total = Eigen::VectorXd::Zero(grads.front().grad.flatten().size());
  for (const auto& g : grads) {
    const double w = coeff.at(g.class_id) / static_cast<double>(card.at(g.class_id));
    const Eigen::VectorXd flat = g.grad.flatten();
    for (Eigen::Index i = 0; i < flat.size(); ++i) total[i] += w * flat[i];
  }
  return total;
}

double relative_diff(const ParamGrad& a, const ParamGrad& b) {
  const Eigen::VectorXd x = a.flatten(), y = b.flatten();
  return (x - y).norm() / std::max(y.norm(), 1e-300);
}

}  // namespace

TEST(Weighting, DefaultsAndErrors) {
  const std::vector<int> labels = {0, 0, 0, 1, 2, 2};
  const auto part = ClassPartition::from_labels(labels);
  EXPECT_EQ(part.total(), 6u);
  EXPECT_EQ(part.cardinality(2), 2u);
  EXPECT_EQ(part.cardinality(7), 0u);

  const auto w = make_weighting(part, {{1, 1.2}, {9, 5.0}});
  EXPECT_DOUBLE_EQ(w.weight(0), 1.0 / 3);
  EXPECT_DOUBLE_EQ(w.weight(1), 1.2);
  EXPECT_DOUBLE_EQ(w.weight(2), 0.5);
  EXPECT_EQ(w.coefficient.count(9), 0u);  // classes outside the partition are ignored
  try {
    w.weight(9);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownClass);
  }
  EXPECT_EQ(w.sample_weights(labels), (std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3, 1.2, 0.5, 0.5}));

  for (double bad : {0.0, -1.0, std::nan("")}) {
    try {
      make_weighting(part, {{0, bad}});
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::NonPositiveCoefficient);
    }
  }
}

TEST(Weighting, EachClassContributesItsCoefficient) {
  // With unit per-sample gradients, class t contributes exactly c_t in total.
  const std::vector<int> labels = {0, 0, 0, 0, 1, 2, 2};
  const auto w = make_weighting(ClassPartition::from_labels(labels), {{2, 1.2}});
  std::map<int, double> per_class;
  for (int y : labels) per_class[y] += w.weight(y);
  EXPECT_NEAR(per_class[0], 1.0, 1e-15);
  EXPECT_NEAR(per_class[1], 1.0, 1e-15);
  EXPECT_NEAR(per_class[2], 1.2, 1e-15);
}

TEST(Aggregate, BitwiseEqualToBruteForce) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 50; ++t) {
    const std::size_t k = 2 + rng() % 4;
    Instance in = random_instance(rng, k, k + rng() % 40);
    CoefficientMap coeff;
    for (std::size_t c = 0; c < k; ++c) coeff[static_cast<int>(c)] = 0.5 + static_cast<double>(rng() % 100) / 50;
    const auto part = ClassPartition::from_labels(in.labels);
    const auto w = make_weighting(part, coeff);
    const Eigen::VectorXd got = qdbp_aggregate(in.grads, w).flatten();
    const Eigen::VectorXd want = brute_force(in.grads, w.coefficient, w.cardinality);
    ASSERT_EQ(got.size(), want.size());
    for (Eigen::Index i = 0; i < got.size(); ++i) ASSERT_EQ(got[i], want[i]) << "instance " << t << " entry " << i;
  }
}

TEST(Aggregate, BatchedMatchesPerSample) {
  std::mt19937_64 rng(22);
  for (int t = 0; t < 10; ++t) {
    Instance in = random_instance(rng, 3, 25);
    const auto w = make_weighting(ClassPartition::from_labels(in.labels), {{1, 1.2}});
    EXPECT_LT(relative_diff(qdbp_gradient(in.net, in.inputs, in.labels, w), qdbp_aggregate(in.grads, w)), 1e-13);
  }
}

TEST(Aggregate, ReducesToScaledSgdUnderUniformCardinality) {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 20; ++t) {
    const std::size_t k = 2 + rng() % 3, per = 1 + rng() % 8;
    Instance in = random_instance(rng, k, k);
    // Rebuild labels so every class has exactly `per` samples.
    std::vector<PerSampleGradient> grads;
    for (std::size_t r = 0; r < per; ++r) {
      for (std::size_t c = 0; c < k; ++c) {
        Eigen::VectorXd x = Eigen::VectorXd::Random(in.inputs.rows());
        grads.push_back(backward(in.net, x, static_cast<int>(c)));
      }
    }
    std::vector<int> labels;
    for (const auto& g : grads) labels.push_back(g.class_id);
    const auto w = make_weighting(ClassPartition::from_labels(labels));
    const double eta = 0.37;

    DenseNetwork a = in.net, b = in.net;
    qdbp_step(a, grads, w, eta);
    sgd_step(b, grads, eta / static_cast<double>(per));
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
      EXPECT_LT((a.layers[l].weights - b.layers[l].weights).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LT((a.layers[l].biases - b.layers[l].biases).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Aggregate, InvariantToClassDuplication) {
  std::mt19937_64 rng(24);
  for (int t = 0; t < 20; ++t) {
    const std::size_t k = 2 + rng() % 4;
    Instance in = random_instance(rng, k, k + rng() % 30);
    const auto base = qdbp_aggregate(in.grads, make_weighting(ClassPartition::from_labels(in.labels)));
    const int dup_class = static_cast<int>(rng() % k);
    for (int d : {2, 5, 10}) {
      std::vector<PerSampleGradient> dup;
      for (const auto& g : in.grads) {
        const int copies = g.class_id == dup_class ? d : 1;
        for (int c = 0; c < copies; ++c) dup.push_back(g);
      }
      std::vector<int> labels;
      for (const auto& g : dup) labels.push_back(g.class_id);
      const auto agg = qdbp_aggregate(dup, make_weighting(ClassPartition::from_labels(labels)));
      EXPECT_LT(relative_diff(agg, base), 1e-9) << "d=" << d;
    }
  }
}

TEST(Aggregate, PlainSumIsNotDuplicationInvariant) {
  // Contrast: the vanilla sum shifts toward the duplicated class.
  std::mt19937_64 rng(25);
  Instance in = random_instance(rng, 3, 12);
  const ParamGrad base = sum_gradients(in.net, in.grads);
  std::vector<PerSampleGradient> dup = in.grads;
  for (const auto& g : in.grads) {
    if (g.class_id == 0) {
      for (int c = 0; c < 9; ++c) dup.push_back(g);
    }
  }
  EXPECT_GT(relative_diff(sum_gradients(in.net, dup), base), 1e-3);
}

TEST(Aggregate, EmptyInputRejected) {
  const QdbpWeighting w;
  EXPECT_THROW(qdbp_aggregate(std::vector<PerSampleGradient>{}, w), Error);
}

TEST(Coefficients, FromJson) {
  const auto resolve = [](const std::string& n) { return n == "Benign" ? 0 : n == "Malicious" ? 1 : -1; };
  const auto m = coefficients_from_json(nlohmann::json::parse(R"({"Malicious": 1.5, "Other": 3})"), resolve);
  EXPECT_EQ(m, (CoefficientMap{{1, 1.5}}));
  EXPECT_THROW(coefficients_from_json(nlohmann::json::parse(R"({"Benign": 0})"), resolve), Error);
  EXPECT_THROW(coefficients_from_json(nlohmann::json::parse(R"({"Benign": "x"})"), resolve), Error);
  EXPECT_THROW(coefficients_from_json(nlohmann::json::parse("[1]"), resolve), Error);
}
