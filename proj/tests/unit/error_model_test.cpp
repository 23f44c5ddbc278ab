#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "pdi/error_model.hpp"
#include "pdi/errors.hpp"

namespace pdi {
namespace {

DemographicProfile profile(std::map<std::string, std::string> attributes) {
  DemographicProfile p;
  p.attributes = std::move(attributes);
  return p;
}

TrainingPair pair(std::map<std::string, std::string> attributes, double target) {
  return {profile(std::move(attributes)), target};
}

TEST(EncodeFeatures, OneHotBlocks) {
  const std::vector<TrainingPair> pairs{pair({{"gender", "man"}, {"age", "18-29"}}, 0),
                                        pair({{"gender", "woman"}, {"age", "30-49"}}, 0),
                                        pair({{"gender", "man"}, {"age", "50+"}}, 0)};
  const auto schema = FeatureSchema::from_pairs(pairs);
  EXPECT_EQ(schema.width(), 5u);

  FeatureSchema gender{{"gender"}, {{"man", "woman"}}};
  const auto e = encode_features(profile({{"gender", "man"}}), gender);
  EXPECT_EQ(e.values, (std::vector<double>{1, 0}));
  EXPECT_FALSE(e.unseen);

  const auto u = encode_features(profile({{"gender", "nonbinary"}}), gender);
  EXPECT_EQ(u.values, (std::vector<double>{0, 0}));
  EXPECT_TRUE(u.unseen);

  EXPECT_THROW(encode_features(profile({{"age", "50+"}}), gender), SchemaError);
}

TEST(CellMean, SmoothingArithmetic) {
  // Targets 0.04 and 0.16 in one cell, global mean 0.1:
  // (0.20 + 1 * 0.1) / (2 + 1) = 0.1.
  const std::vector<TrainingPair> pairs{pair({{"g", "a"}}, 0.04), pair({{"g", "a"}}, 0.16)};
  const auto m = fit_error_model(pairs);
  EXPECT_EQ(m.kind(), ErrorModelKind::kCellMean);
  EXPECT_NEAR(m.predict(profile({{"g", "a"}})), 0.1, 1e-15);
  EXPECT_EQ(m.training_size(), 2u);
}

TEST(CellMean, SmoothedTowardGlobal) {
  // Cell a: {0.3, 0.5}, cell b: {0.0}; global = 0.8 / 3.
  const std::vector<TrainingPair> pairs{pair({{"g", "a"}}, 0.3), pair({{"g", "a"}}, 0.5), pair({{"g", "b"}}, 0.0)};
  const auto m = fit_error_model(pairs);
  const double global = 0.8 / 3;
  EXPECT_NEAR(m.predict(profile({{"g", "a"}})), (0.8 + global) / 3, 1e-15);
  EXPECT_NEAR(m.predict(profile({{"g", "b"}})), (0.0 + global) / 2, 1e-15);
}

TEST(CellMean, SinglePairZeroTarget) {
  const std::vector<TrainingPair> pairs{pair({{"g", "a"}}, 0.0)};
  const auto m = fit_error_model(pairs);
  EXPECT_EQ(m.predict(profile({{"g", "a"}})), 0.0);
  EXPECT_EQ(m.predict(profile({{"g", "zzz"}})), 0.0);
}

TEST(CellMean, FallbackChain) {
  const std::vector<TrainingPair> pairs{pair({{"x", "1"}, {"y", "p"}}, 0.2), pair({{"x", "1"}, {"y", "q"}}, 0.4),
                                        pair({{"x", "2"}, {"y", "q"}}, 0.9)};
  const auto m = fit_error_model(pairs);
  // Unobserved cell (2, p): average of the x=2 and y=p marginal means.
  EXPECT_NEAR(m.predict(profile({{"x", "2"}, {"y", "p"}})), (0.9 + 0.2) / 2, 1e-15);
  // One axis unseen: only the observed marginal contributes.
  EXPECT_NEAR(m.predict(profile({{"x", "3"}, {"y", "q"}})), (0.4 + 0.9) / 2, 1e-15);
  // Fully unseen: global mean.
  EXPECT_NEAR(m.predict(profile({{"x", "3"}, {"y", "r"}})), 0.5, 1e-15);
  EXPECT_THROW(m.predict(profile({{"x", "1"}})), SchemaError);
}

TEST(CellMean, ZeroKappaGivesRawMean) {
  const std::vector<TrainingPair> pairs{pair({{"g", "a"}}, 0.3), pair({{"g", "a"}}, 0.7), pair({{"g", "b"}}, 0.1)};
  ErrorModelParams params;
  params.kappa = 0.0;
  EXPECT_NEAR(fit_error_model(pairs, params).predict(profile({{"g", "a"}})), 0.5, 1e-12);
}

TEST(CellMean, OrderPreservingWithEqualCounts) {
  std::vector<TrainingPair> pairs;
  for (int i = 0; i < 4; ++i) {
    pairs.push_back(pair({{"g", "hi"}}, 0.25));
    pairs.push_back(pair({{"g", "lo"}}, 0.01));
  }
  const auto m = fit_error_model(pairs);
  EXPECT_GT(m.predict(profile({{"g", "hi"}})), m.predict(profile({{"g", "lo"}})));
}

TEST(CellMean, PermutationInvariant) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  const std::vector<std::string> cats{"a", "b", "c"};
  std::vector<TrainingPair> pairs;
  for (int i = 0; i < 200; ++i) pairs.push_back(pair({{"x", cats[rng() % 3]}, {"y", cats[rng() % 2]}}, u(rng)));
  const auto base = fit_error_model(pairs);
  for (int rep = 0; rep < 10; ++rep) {
    std::shuffle(pairs.begin(), pairs.end(), rng);
    const auto m = fit_error_model(pairs);
    for (const auto& x : cats)
      for (const auto& y : cats)
        EXPECT_EQ(m.predict(profile({{"x", x}, {"y", y}})), base.predict(profile({{"x", x}, {"y", y}})));
  }
}

TEST(CellMean, Errors) {
  EXPECT_THROW(fit_error_model({}), DataError);
  const std::vector<TrainingPair> negative{pair({{"g", "a"}}, -0.1)};
  EXPECT_THROW(fit_error_model(negative), DataError);
}

ErrorModelParams boosted(int rounds = 50) {
  ErrorModelParams p;
  p.kind = ErrorModelKind::kBoostedStumps;
  p.rounds = rounds;
  return p;
}

TEST(BoostedStumps, ConstantTargets) {
  std::vector<TrainingPair> pairs;
  const std::vector<std::string> cats{"a", "b", "c"};
  for (int i = 0; i < 12; ++i) pairs.push_back(pair({{"g", cats[i % 3]}}, 0.37));
  const auto m = fit_error_model(pairs, boosted());
  EXPECT_EQ(m.kind(), ErrorModelKind::kBoostedStumps);
  for (const auto& c : {"a", "b", "c", "unseen"}) EXPECT_NEAR(m.predict(profile({{"g", c}})), 0.37, 1e-6);
}

TEST(BoostedStumps, ConvergesToCellMeansOnOneAxis) {
  // Oracle: with a single one-hot axis, squared-loss boosting converges to
  // the per-category means.
  std::vector<TrainingPair> pairs;
  for (int i = 0; i < 6; ++i) pairs.push_back(pair({{"g", "a"}}, i % 2 ? 0.3 : 0.1));
  for (int i = 0; i < 4; ++i) pairs.push_back(pair({{"g", "b"}}, 0.6));
  const auto m = fit_error_model(pairs, boosted(2000));
  EXPECT_NEAR(m.predict(profile({{"g", "a"}})), 0.2, 1e-6);
  EXPECT_NEAR(m.predict(profile({{"g", "b"}})), 0.6, 1e-6);
}

TEST(BoostedStumps, NonnegativeAndDeterministic) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<TrainingPair> pairs;
  const std::vector<std::string> cats{"a", "b", "c", "d"};
  for (int i = 0; i < 60; ++i) {
    const auto x = cats[rng() % 4];
    pairs.push_back(pair({{"x", x}, {"y", cats[rng() % 2]}}, x == "a" ? 0.0 : u(rng) * u(rng)));
  }
  const auto a = fit_error_model(pairs, boosted());
  const auto b = fit_error_model(pairs, boosted());
  for (const auto& x : cats)
    for (const auto& y : cats) {
      const auto p = profile({{"x", x}, {"y", y}});
      EXPECT_GE(a.predict(p), 0.0);
      EXPECT_EQ(a.predict(p), b.predict(p));
    }
}

TEST(BoostedStumps, NeedsFivePairs) {
  std::vector<TrainingPair> pairs(4, pair({{"g", "a"}}, 0.1));
  EXPECT_THROW(fit_error_model(pairs, boosted()), DataError);
}

TEST(ErrorModelKind, ParseRoundTrip) {
  for (auto k : {ErrorModelKind::kCellMean, ErrorModelKind::kBoostedStumps})
    EXPECT_EQ(parse_error_model_kind(to_string(k)), k);
  EXPECT_THROW(parse_error_model_kind("xgboost"), ConfigError);
}

}  // namespace
}  // namespace pdi
