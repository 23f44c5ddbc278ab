#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "pdi/errors.hpp"
#include "pdi/sampling.hpp"
#include "pdi/synthetic.hpp"
#include "test_helpers.hpp"

namespace pdi {
namespace {

LabelOracle oracle_for(const Dataset& d) {
  return [&d](std::size_t i) { return *d.records[i].human_label; };
}

TEST(BurnInSample, FullBudgetLabelsEverything) {
  const auto t = burn_in_sample(10, 10, 1);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(t.pi[i], 1.0);
    EXPECT_EQ(t.xi[i], 1);
    EXPECT_EQ(t.batch[i], kBurnInBatch);
  }
}

TEST(BurnInSample, ExpectedCountMonteCarlo) {
  const int seeds = 10000;
  double total = 0;
  for (int s = 0; s < seeds; ++s) {
    const auto t = burn_in_sample(10000, 50, static_cast<std::uint64_t>(s));
    if (s == 0) EXPECT_DOUBLE_EQ(t.pi[17], 0.005);
    total += static_cast<double>(t.labeled_count());
  }
  // Binomial(10000, 0.005): standard error of the mean over the seeds.
  const double se = std::sqrt(50 * 0.995 / seeds);
  EXPECT_NEAR(total / seeds, 50.0, 3 * se);
}

TEST(BurnInSample, DeterministicAndValidated) {
  EXPECT_EQ(burn_in_sample(500, 40, 9).xi, burn_in_sample(500, 40, 9).xi);
  EXPECT_NE(burn_in_sample(500, 40, 9).xi, burn_in_sample(500, 40, 10).xi);
  EXPECT_THROW(burn_in_sample(10, 11, 1), ConfigError);
}

std::vector<std::size_t> iota_vec(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

TEST(PartitionBatches, SizesAndCoverage) {
  const auto two = partition_batches(iota_vec(10), 2, 3);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0].size(), 5u);
  EXPECT_EQ(two[1].size(), 5u);

  const auto three = partition_batches(iota_vec(7), 3, 3);
  EXPECT_EQ(three[0].size(), 3u);
  EXPECT_EQ(three[1].size(), 2u);
  EXPECT_EQ(three[2].size(), 2u);

  const auto one = partition_batches(iota_vec(6), 1, 3);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(std::set<std::size_t>(one[0].begin(), one[0].end()).size(), 6u);

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = rng() % 200;
    const int b = 1 + static_cast<int>(rng() % 12);
    const auto parts = partition_batches(iota_vec(n), b, rng());
    std::multiset<std::size_t> seen;
    std::size_t lo = n, hi = 0;
    for (const auto& p : parts) {
      seen.insert(p.begin(), p.end());
      lo = std::min(lo, p.size());
      hi = std::max(hi, p.size());
    }
    EXPECT_EQ(seen.size(), n);
    EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), n);
    EXPECT_LE(hi - lo, 1u);
  }
  EXPECT_THROW(partition_batches(iota_vec(3), 0, 1), ConfigError);
}

TEST(ComputeInclusionProbabilities, UniformErrorsOrFullSmoothing) {
  const std::vector<double> flat{0.3, 0.3, 0.3, 0.3};
  for (double gamma : {0.0, 0.4, 1.0})
    for (double p : compute_inclusion_probabilities(flat, 2, gamma, 0).pi) EXPECT_NEAR(p, 0.5, 1e-15);
  const std::vector<double> skewed{0.9, 0.0, 0.1, 0.5, 0.02};
  for (double p : compute_inclusion_probabilities(skewed, 3, 1.0, 0.05).pi) EXPECT_EQ(p, 0.6);
}

TEST(ComputeInclusionProbabilities, CappingExample) {
  // p = (0.5, .125, .125, .125, .125); pi = 2p = (1, .25, .25, .25, .25).
  const std::vector<double> err{4, 1, 1, 1, 1};
  const auto r = compute_inclusion_probabilities(err, 2, 0.0, 0.0);
  const std::vector<double> expected{1.0, 0.25, 0.25, 0.25, 0.25};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(r.pi[i], expected[i], 1e-15);
  EXPECT_NEAR(r.deviation, 0.0, 1e-15);
}

TEST(ComputeInclusionProbabilities, CappingRedistributesExcess) {
  // Raw pi = 3 * (0.8, 0.05, 0.05, 0.05, 0.05) = (2.4, .15, .15, .15, .15):
  // cap the first at 1 and spread 1.4 equally over the rest -> 0.5 each.
  const std::vector<double> err{16, 1, 1, 1, 1};
  const auto r = compute_inclusion_probabilities(err, 3, 0.0, 0.0);
  const std::vector<double> expected{1.0, 0.5, 0.5, 0.5, 0.5};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(r.pi[i], expected[i], 1e-12);
}

TEST(ComputeInclusionProbabilities, BudgetPreservedAndBounded) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t m = 1 + rng() % 60;
    std::vector<double> err(m);
    for (auto& e : err) e = std::pow(u(rng), 4);
    const double budget = u(rng) * static_cast<double>(m);
    const auto r = compute_inclusion_probabilities(err, budget, u(rng), 0.0);
    double sum = 0;
    for (double p : r.pi) {
      EXPECT_GE(p, 0.0);
      EXPECT_LE(p, 1.0);
      sum += p;
    }
    EXPECT_NEAR(sum, budget, 1e-9);
    EXPECT_NEAR(r.deviation, sum - budget, 1e-12);
  }
}

TEST(ComputeInclusionProbabilities, FloorApplied) {
  const std::vector<double> err{1, 0, 0, 0};
  const auto r = compute_inclusion_probabilities(err, 1, 0.0, 0.1);
  EXPECT_NEAR(r.pi[1], 0.1 * 0.25, 1e-15);
  EXPECT_NEAR(r.deviation, 3 * 0.025, 1e-12);
}

TEST(ComputeInclusionProbabilities, MonotoneTargeting) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.01, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> err(10);
    for (auto& e : err) e = u(rng);
    const auto before = compute_inclusion_probabilities(err, 2, 0.2, 0.05);
    if (*std::max_element(before.pi.begin(), before.pi.end()) >= 1.0) continue;
    err[3] *= 1.5;
    const auto after = compute_inclusion_probabilities(err, 2, 0.2, 0.05);
    if (*std::max_element(after.pi.begin(), after.pi.end()) >= 1.0) continue;
    EXPECT_GE(after.pi[3], before.pi[3]);
  }
}

TEST(ComputeInclusionProbabilities, Errors) {
  const std::vector<double> err{1, 1};
  EXPECT_THROW(compute_inclusion_probabilities(err, 3, 0.2, 0.0), ConfigError);
  const std::vector<double> negative{1, -1};
  EXPECT_THROW(compute_inclusion_probabilities(negative, 1, 0.2, 0.0), DataError);
}

TEST(PoissonDraw, Examples) {
  const std::vector<double> ones(50, 1.0);
  for (auto x : poisson_draw(ones, 1)) EXPECT_EQ(x, 1);

  const std::vector<double> half(10000, 0.5);
  const auto xi = poisson_draw(half, 5);
  const auto count = std::count(xi.begin(), xi.end(), std::uint8_t{1});
  EXPECT_NEAR(static_cast<double>(count), 5000.0, 150.0);
  EXPECT_EQ(xi, poisson_draw(half, 5));

  const std::vector<double> zero{0.5, 0.0};
  EXPECT_THROW(poisson_draw(zero, 1), DataError);
  const std::vector<double> big{1.5};
  EXPECT_THROW(poisson_draw(big, 1), DataError);
}

Dataset small_world(std::uint64_t seed) {
  SynthConfig c;
  c.N = 2000;
  c.small_group_share = 0.1;
  c.err_g1 = 0.1;
  c.err_g2 = 0.3;
  c.seed = seed;
  return generate_synthetic(c);
}

TEST(RunAdaptiveCollection, TraceInvariants) {
  const auto d = small_world(1);
  SamplingConfig cfg;
  const auto t = run_adaptive_collection(d, cfg, "zero_shot", oracle_for(d), 77);
  ASSERT_EQ(t.size(), d.size());
  std::size_t labeled = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_NE(t.batch[i], kNotOffered);
    EXPECT_GT(t.pi[i], 0.0);
    EXPECT_LE(t.pi[i], 1.0);
    if (t.xi[i]) {
      ++labeled;
      ASSERT_TRUE(t.revealed[i].has_value());
      EXPECT_EQ(*t.revealed[i], *d.records[i].human_label);
    } else {
      EXPECT_FALSE(t.revealed[i].has_value());
    }
  }
  EXPECT_EQ(labeled, t.labeled_count());
  ASSERT_EQ(t.batches.size(), 6u);
  EXPECT_EQ(t.batches[0].index, kBurnInBatch);
  std::size_t from_batches = 0;
  double expected = 0;
  for (const auto& b : t.batches) {
    from_batches += b.labeled;
    expected += b.budget;
  }
  EXPECT_EQ(from_batches, labeled);
  EXPECT_NEAR(expected, cfg.n_human, 1e-9);
  EXPECT_EQ(t.models.size(), 5u);
}

TEST(RunAdaptiveCollection, OracleOnlyQueriedForDrawnRecords) {
  const auto d = small_world(2);
  std::vector<int> queried(d.size(), 0);
  const auto t = run_adaptive_collection(d, SamplingConfig{}, "zero_shot",
                                         [&](std::size_t i) {
                                           ++queried[i];
                                           return *d.records[i].human_label;
                                         },
                                         5);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(queried[i], t.xi[i] ? 1 : 0);
}

TEST(RunAdaptiveCollection, FullSmoothingReproducesUniformDesign) {
  const auto d = small_world(3);
  SamplingConfig cfg;
  cfg.gamma = 1.0;
  const auto adaptive = run_adaptive_collection(d, cfg, "zero_shot", oracle_for(d), 21);
  const auto uniform = run_uniform_collection(d, cfg.n_human, oracle_for(d), 21);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(adaptive.pi[i], uniform.pi[i]);
  EXPECT_EQ(adaptive.xi, uniform.xi);
}

TEST(RunAdaptiveCollection, DeterministicGivenSeed) {
  const auto d = small_world(4);
  const auto a = run_adaptive_collection(d, SamplingConfig{}, "zero_shot", oracle_for(d), 8);
  const auto b = run_adaptive_collection(d, SamplingConfig{}, "zero_shot", oracle_for(d), 8);
  EXPECT_EQ(a.pi, b.pi);
  EXPECT_EQ(a.xi, b.xi);
  EXPECT_EQ(a.batch, b.batch);
}

TEST(RunAdaptiveCollection, BurnInOnlyWhenBudgetIsBurnIn) {
  const auto d = small_world(5);
  SamplingConfig cfg;
  cfg.n_burnin = cfg.n_human;
  const auto t = run_adaptive_collection(d, cfg, "zero_shot", oracle_for(d), 8);
  ASSERT_EQ(t.batches.size(), 1u);
  EXPECT_EQ(t.batches[0].index, kBurnInBatch);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(t.batch[i], kBurnInBatch);
    EXPECT_DOUBLE_EQ(t.pi[i], 0.1);
  }
  EXPECT_TRUE(t.models.empty());
}

TEST(RunAdaptiveCollection, FailingPredictorFallsBackToUniform) {
  const auto d = small_world(6);
  SamplingConfig cfg;
  const auto t = run_adaptive_collection(d, cfg, "zero_shot", oracle_for(d), 8,
                                         [](std::span<const TrainingPair>) -> ErrorModel {
                                           throw std::runtime_error("boom");
                                         });
  for (std::size_t b = 1; b < t.batches.size(); ++b) {
    EXPECT_TRUE(t.batches[b].uniform_fallback);
    EXPECT_NE(t.batches[b].note.find("boom"), std::string::npos);
  }
  for (double p : t.pi) EXPECT_DOUBLE_EQ(p, 0.1);
}

TEST(RunAdaptiveCollection, UpsamplesHighErrorSmallGroup) {
  // Uniform expectation for the small group outside the burn-in is
  // share * remaining budget = 0.1 * 150 = 15.
  SamplingConfig cfg;
  cfg.n_human = 200;
  cfg.n_burnin = 50;
  const int trials = 100;
  double small_after_burnin = 0;
  for (int t = 0; t < trials; ++t) {
    SynthConfig sc;
    sc.seed = static_cast<std::uint64_t>(t);
    const auto d = generate_synthetic(sc);
    const auto trace = run_adaptive_collection(d, cfg, "zero_shot", oracle_for(d), 1000 + t);
    for (std::size_t i = 0; i < d.size(); ++i)
      if (trace.xi[i] && trace.batch[i] != kBurnInBatch && d.records[i].demographics.attributes.at("group") == "g2")
        small_after_burnin += 1;
  }
  EXPECT_GE(small_after_burnin / trials, 1.1 * 15.0);
}

TEST(RunAdaptiveCollection, ConfigErrors) {
  const auto d = small_world(7);
  SamplingConfig cfg;
  cfg.n_burnin = 300;
  EXPECT_THROW(run_adaptive_collection(d, cfg, "zero_shot", oracle_for(d), 1), ConfigError);
  cfg = {};
  cfg.n_batches = 0;
  EXPECT_THROW(run_adaptive_collection(d, cfg, "zero_shot", oracle_for(d), 1), ConfigError);
  EXPECT_THROW(run_adaptive_collection(d, SamplingConfig{}, "persona", oracle_for(d), 1), SchemaError);
}

TEST(ApplyTrace, KeepsOnlyRevealedLabels) {
  const auto d = small_world(8);
  const auto t = run_uniform_collection(d, 100, oracle_for(d), 3);
  const auto out = apply_trace(d, t);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(out.records[i].pi, t.pi[i]);
    EXPECT_EQ(out.records[i].human_label.has_value(), t.xi[i] == 1);
  }
  EXPECT_TRUE(validate_dataset(out).accepted());
}

}  // namespace
}  // namespace pdi
