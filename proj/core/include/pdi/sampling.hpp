#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pdi/dataset.hpp"
#include "pdi/error_model.hpp"

namespace pdi {

struct SamplingConfig {
  double n_human = 200;   // expected total number of human labels
  double n_burnin = 50;   // expected labels from the uniform burn-in phase
  int n_batches = 5;
  double gamma = 0.2;     // weight of the uniform component in each batch
  double pi_floor = 0.05; // lower bound on pi, as a fraction of the uniform rate
  ErrorModelParams predictor;

  /// Throws ConfigError unless 0 < n_human <= n, 0 <= n_burnin <= n_human,
  /// n_batches >= 1, gamma in [0, 1] and pi_floor in [0, 1).
  void validate(std::size_t n_records) const;
};

constexpr int kNotOffered = -1;
constexpr int kBurnInBatch = 0;

struct BatchSummary {
  int index = 0;              // 0 = burn-in / uniform pass, 1..B adaptive batches
  std::size_t size = 0;
  double budget = 0.0;        // expected labels assigned to the batch
  double pi_sum = 0.0;
  std::size_t labeled = 0;
  std::size_t model_training_size = 0;  // 0 when no error model was used
  bool uniform_fallback = false;
  std::string note;
};

/// Complete record of one collection run, indexed by dataset record.
struct SamplingTrace {
  std::vector<double> pi;
  std::vector<std::uint8_t> xi;
  std::vector<int> batch;                       // kNotOffered, kBurnInBatch or 1..B
  std::vector<std::optional<double>> revealed;  // human labels obtained through the oracle
  std::vector<BatchSummary> batches;
  std::vector<ErrorModel> models;               // snapshot used by each adaptive batch, in order

  std::size_t size() const { return pi.size(); }
  std::size_t labeled_count() const;
  std::vector<std::size_t> labeled_per_group(const GroupPartition& partition) const;
};

/// Label source queried only for records drawn into the sample.
using LabelOracle = std::function<double(std::size_t record)>;
/// Fits the squared-error predictor from the labels collected so far.
using ErrorModelFitter = std::function<ErrorModel(std::span<const TrainingPair>)>;

/// Uniform pass: every record gets pi = n_burnin / n and an independent
/// Bernoulli(pi) draw. Labels are not revealed here.
SamplingTrace burn_in_sample(std::size_t n_records, double n_burnin, std::uint64_t seed);

/// Random split of `indices` into `batches` disjoint sets whose sizes differ
/// by at most one (larger sets first).
std::vector<std::vector<std::size_t>> partition_batches(std::vector<std::size_t> indices, int batches,
                                                        std::uint64_t seed);

struct InclusionProbabilities {
  std::vector<double> pi;
  double budget = 0.0;
  double deviation = 0.0;  // sum(pi) - budget, nonzero only through the floor
};

/// Error-proportional probabilities mixed with the uniform distribution,
/// scaled to `budget`, capped at 1 with proportional redistribution of the
/// excess, then floored at pi_floor * budget / m.
InclusionProbabilities compute_inclusion_probabilities(std::span<const double> err_hat, double budget, double gamma,
                                                       double pi_floor);

/// Same, parameterized by the uniform rate budget / m. With gamma = 1 every
/// entry equals `uniform_rate` exactly.
InclusionProbabilities inclusion_probabilities_at_rate(std::span<const double> err_hat, double uniform_rate,
                                                       double gamma, double pi_floor);

/// Independent Bernoulli(pi_i) draws. Throws DataError for pi outside (0, 1].
std::vector<std::uint8_t> poisson_draw(std::span<const double> pi, std::uint64_t seed);

/// Per-record uniforms shared by every design run under `seed`; record i is
/// sampled when u_i < pi_i.
std::vector<double> draw_uniforms(std::size_t n_records, std::uint64_t seed);

/// Uniform design: pi = n_human / n for every record.
SamplingTrace run_uniform_collection(const Dataset& dataset, double n_human, const LabelOracle& oracle,
                                     std::uint64_t seed);

/// Burn-in followed by B error-driven batches. Each record is offered once.
/// The fitter defaults to fit_error_model with config.predictor.
SamplingTrace run_adaptive_collection(const Dataset& dataset, const SamplingConfig& config,
                                      const std::string& variant, const LabelOracle& oracle, std::uint64_t seed,
                                      const ErrorModelFitter& fitter = {});

/// Copy of `dataset` carrying the trace's pi and xi. Human labels are kept
/// only where the trace revealed them.
Dataset apply_trace(const Dataset& dataset, const SamplingTrace& trace);

}  // namespace pdi
