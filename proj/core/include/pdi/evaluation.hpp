#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pdi/dataset.hpp"
#include "pdi/estimators.hpp"
#include "pdi/sampling.hpp"

namespace pdi {

/// Plain mean of the human labels per group. Every record must carry a
/// label (DataError otherwise) and every group must be nonempty.
std::vector<double> compute_ground_truth(const Dataset& dataset, const GroupPartition& partition);

struct TrialConfig {
  SamplingConfig sampling;
  EstimatorConfig estimator;
};

struct TrialResult {
  int trial = 0;
  Method method = Method::kPdi;
  std::uint64_t seed = 0;
  EstimateVector estimates;
  std::vector<std::size_t> labeled_per_group;
  std::vector<std::uint32_t> labeled_records;  // sorted record indices with xi = 1
  std::optional<SamplingTrace> trace;          // kept on request
  std::optional<std::string> error;            // the whole trial failed

  bool ok() const { return !error.has_value(); }
};

/// One experimental run of `method`. classical and ppi sample uniformly at
/// rate n_human / n, pdi runs the adaptive collection, llm_only uses no
/// labels. Human labels reach the estimators only through `oracle` for
/// records drawn into the sample; the default oracle reads the dataset.
/// Methods run with the same seed share the per-record draw uniforms and
/// the bootstrap streams.
TrialResult run_trial(const Dataset& dataset, const GroupPartition& partition, Method method,
                      const TrialConfig& config, std::uint64_t seed, const LabelOracle& oracle = {},
                      bool keep_trace = false);

/// Seed of trial t under a master seed, shared by every method.
std::uint64_t trial_seed(std::uint64_t master_seed, int trial);

/// T trials per method, ordered by (trial, method). Failures are captured
/// per trial. `threads` > 1 runs trials concurrently; results do not depend
/// on it.
std::vector<TrialResult> run_trials(const Dataset& dataset, const GroupPartition& partition,
                                    std::span<const Method> methods, const TrialConfig& config, int trials,
                                    std::uint64_t master_seed, int threads = 1, bool keep_traces = false);

/// Fraction of the trials whose interval for group g contains truth[g].
/// Failed groups count as misses, so values are multiples of 1/T.
std::vector<double> aggregate_coverage(std::span<const TrialResult> trials, std::span<const double> truth);

struct DeltaSummary {
  std::vector<double> per_group;  // mean |theta_hat - truth| * 100 over successful trials
  std::vector<double> sd;         // standard deviation of that quantity over trials
  double average = 0.0;           // unweighted mean over groups
};

DeltaSummary aggregate_delta(std::span<const TrialResult> trials, std::span<const double> truth);

/// Mean labeled count per group for each partition, averaged over trials.
std::vector<std::vector<double>> sampling_count_table(std::span<const TrialResult> trials,
                                                      std::span<const GroupPartition> partitions);

struct GroupMetrics {
  std::string group;
  std::size_t successes = 0;
  std::optional<double> coverage;
  std::optional<double> delta_pp;
  std::optional<double> delta_sd_pp;
  std::optional<double> mean_count;
  std::optional<double> ci_width_mean;
  std::optional<std::string> warning;
};

struct MethodMetrics {
  Method method = Method::kPdi;
  int trials = 0;
  std::vector<GroupMetrics> groups;
  std::optional<double> avg_delta_pp;
};

/// Coverage, delta, labeled counts and interval widths per (method, group).
/// Groups that never produced an estimate carry null metrics and a warning.
std::vector<MethodMetrics> build_metrics(std::span<const TrialResult> trials, const GroupPartition& partition,
                                         std::span<const double> truth);

struct ChiSquaredResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
};

/// Pearson test of independence on a rows x cols table of counts. Throws
/// DataError on ragged input, fewer than 2 rows or columns, or a zero margin.
ChiSquaredResult chi_squared_test(const std::vector<std::vector<double>>& counts);

struct ContingencyTable {
  std::vector<std::string> rows;     // categories of the axis
  std::vector<double> columns;       // distinct ratings on the original scale
  std::vector<std::vector<double>> counts;
};

/// Counts of (category, human rating) pairs over records with a label.
ContingencyTable contingency_table(const Dataset& dataset, const std::string& axis);

}  // namespace pdi
