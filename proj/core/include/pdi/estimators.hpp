#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pdi/dataset.hpp"

namespace pdi {

enum class Method { kClassical, kLlmOnly, kPpi, kPdi };

std::string to_string(Method method);
/// Accepts "classical", "llm_only", "ppi", "pdi". Throws ConfigError.
Method parse_method(const std::string& name);

/// One unit for the self-normalized IPW mean.
struct WeightedObservation {
  double value = 0.0;
  double pi = 1.0;
  bool xi = false;
};

/// Hajek mean: sum(w v) / sum(w) with w = xi / pi. Throws EmptyGroupError
/// (tagged with `group`) when nothing is labeled, DataError on pi outside (0, 1].
double hajek_mean(std::span<const WeightedObservation> observations, const std::string& group = "");

/// A group's records flattened for the rectified estimators: proxies for
/// every record, plus (label, proxy, pi) for the labeled ones only.
struct GroupSample {
  std::string group;
  std::vector<double> proxies;
  std::vector<double> labels;
  std::vector<double> labeled_proxies;
  std::vector<double> labeled_pi;

  std::size_t n_total() const { return proxies.size(); }
  std::size_t n_labeled() const { return labels.size(); }

  /// Reads `variant` from every record. Only records with xi == 1 contribute
  /// labels; human labels of other records are never touched.
  static GroupSample from_records(std::span<const AnnotationRecord> records, const std::string& variant,
                                  std::string group = "");
  static GroupSample from_dataset(const Dataset& dataset, std::span<const std::size_t> members,
                                  const std::string& variant, std::string group = "");
};

/// lambda * mean(all proxies) + Hajek mean over labeled of (H - lambda * proxy).
double rectified_point_estimate(const GroupSample& sample, double lambda);

struct LambdaFit {
  double value = 0.0;
  bool degenerate = false;  // fell back to 0 (too few labels or constant proxies)
};

/// Variance-minimizing power-tuning weight
///   clip(Cov_w(H, proxy) / ((1 + n/N) Var(proxy)), 0, 1)
/// with the covariance IPW-weighted over labeled records.
LambdaFit tune_lambda(const GroupSample& sample);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  double width() const { return upper - lower; }
  bool contains(double x) const { return lower <= x && x <= upper; }
};

enum class LambdaMode { kTuned, kZero };

/// Percentile bootstrap over i.i.d. resamples of the group's records, with
/// lambda re-tuned per resample in kTuned mode. Replicate b draws from its
/// own substream of `seed`, so the result is independent of evaluation order.
Interval bootstrap_ci(const GroupSample& sample, double alpha, int replicates, std::uint64_t seed,
                      LambdaMode mode = LambdaMode::kTuned);

/// Bootstrap replicate values, exposed for diagnostics and tests.
std::vector<double> bootstrap_distribution(const GroupSample& sample, int replicates, std::uint64_t seed,
                                           LambdaMode mode = LambdaMode::kTuned);

/// Linear-interpolation (type 7) empirical quantile of unsorted values.
double empirical_quantile(std::vector<double> values, double p);

struct GroupEstimate {
  std::string group;
  Method method = Method::kPdi;
  double theta_hat = 0.0;
  Interval ci;
  double lambda = 0.0;
  bool lambda_degenerate = false;
  std::size_t n_labeled = 0;
  std::size_t n_total = 0;
  double alpha = 0.1;
  std::optional<std::string> error;  // set when this group failed

  bool ok() const { return !error.has_value(); }
};

struct EstimatorConfig {
  std::string variant = "zero_shot";
  double alpha = 0.1;
  int bootstrap = 1000;
};

struct EstimateVector {
  Method method = Method::kPdi;
  std::uint64_t seed = 0;
  EstimatorConfig config;
  std::vector<GroupEstimate> groups;
};

/// Proxy mean with a normal-approximation interval; no human labels used.
GroupEstimate llm_only_estimate(const GroupSample& sample, double alpha);

/// Hajek mean of the human labels with a bootstrap interval (lambda = 0).
GroupEstimate classical_human_estimate(const GroupSample& sample, double alpha, int replicates,
                                       std::uint64_t seed);

/// Tuned-lambda rectified estimate with bootstrap interval. PPI and PDI
/// both land here; they differ only in how (pi, xi) were produced.
GroupEstimate rectified_estimate(const GroupSample& sample, Method method, double alpha, int replicates,
                                 std::uint64_t seed);

/// Applies `method` to each prepared group sample; group g bootstraps from
/// substream g of `seed`.
EstimateVector estimate_group_samples(std::span<const GroupSample> samples, Method method,
                                      const EstimatorConfig& config, std::uint64_t seed);

/// Applies `method` to every group. A failing group is reported in its
/// entry's `error` and does not stop the others.
EstimateVector estimate_groups(const Dataset& dataset, const GroupPartition& partition, Method method,
                               const EstimatorConfig& config, std::uint64_t seed);

}  // namespace pdi
