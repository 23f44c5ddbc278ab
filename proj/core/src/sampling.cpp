#include "pdi/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "pdi/errors.hpp"
#include "pdi/rng.hpp"

namespace pdi {

void SamplingConfig::validate(std::size_t n_records) const {
  const auto n = static_cast<double>(n_records);
  if (n_records == 0) throw ConfigError("cannot sample from an empty dataset");
  if (!(n_human > 0.0) || n_human > n) throw ConfigError("budget must lie in (0, n]");
  if (!(n_burnin >= 0.0) || n_burnin > n_human) throw ConfigError("burn-in must lie in [0, budget]");
  if (n_batches < 1) throw ConfigError("at least one batch is required");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (!(pi_floor >= 0.0 && pi_floor < 1.0)) throw ConfigError("pi_floor must lie in [0, 1)");
}

std::size_t SamplingTrace::labeled_count() const {
  return static_cast<std::size_t>(std::count(xi.begin(), xi.end(), std::uint8_t{1}));
}

std::vector<std::size_t> SamplingTrace::labeled_per_group(const GroupPartition& partition) const {
  if (partition.membership.size() != xi.size()) throw ConfigError("partition does not match trace size");
  std::vector<std::size_t> out(partition.K(), 0);
  for (std::size_t i = 0; i < xi.size(); ++i)
    if (xi[i]) ++out[partition.membership[i]];
  return out;
}

std::vector<double> draw_uniforms(std::size_t n_records, std::uint64_t seed) {
  Rng rng(seed, Stream::kDraws);
  std::vector<double> u(n_records);
  for (auto& v : u) v = rng.uniform();
  return u;
}

namespace {

SamplingTrace empty_trace(std::size_t n) {
  SamplingTrace t;
  t.pi.assign(n, 0.0);
  t.xi.assign(n, 0);
  t.batch.assign(n, kNotOffered);
  t.revealed.assign(n, std::nullopt);
  return t;
}

void check_probability(double pi) {
  if (!(pi > 0.0 && pi <= 1.0)) throw DataError("inclusion probability outside (0, 1]");
}

// Draws every record of `members` against the shared uniforms and reveals
// labels for the selected ones.
std::size_t draw_members(SamplingTrace& trace, std::span<const std::size_t> members, std::span<const double> pi,
                         std::span<const double> uniforms, int batch, const LabelOracle& oracle) {
  std::size_t labeled = 0;
  for (std::size_t k = 0; k < members.size(); ++k) {
    const auto i = members[k];
    trace.pi[i] = pi[k];
    trace.batch[i] = batch;
    if (uniforms[i] < pi[k]) {
      trace.xi[i] = 1;
      if (oracle) trace.revealed[i] = oracle(i);
      ++labeled;
    }
  }
  return labeled;
}

}  // namespace

SamplingTrace burn_in_sample(std::size_t n_records, double n_burnin, std::uint64_t seed) {
  if (!(n_burnin > 0.0) || n_burnin > static_cast<double>(n_records))
    throw ConfigError("burn-in size must lie in (0, n]");
  auto trace = empty_trace(n_records);
  const double pi = n_burnin / static_cast<double>(n_records);
  const auto u = draw_uniforms(n_records, seed);
  std::vector<std::size_t> all(n_records);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<double> pis(n_records, pi);
  const auto labeled = draw_members(trace, all, pis, u, kBurnInBatch, nullptr);
  trace.batches.push_back({kBurnInBatch, n_records, n_burnin, pi * static_cast<double>(n_records), labeled, 0, false,
                           "burn-in"});
  return trace;
}

std::vector<std::vector<std::size_t>> partition_batches(std::vector<std::size_t> indices, int batches,
                                                        std::uint64_t seed) {
  if (batches < 1) throw ConfigError("at least one batch is required");
  Rng rng(seed, Stream::kBatches);
  // Fisher-Yates with our own index draw so the order is platform independent.
  for (std::size_t i = indices.size(); i > 1; --i) std::swap(indices[i - 1], indices[rng.index(i)]);

  const auto b = static_cast<std::size_t>(batches);
  const std::size_t base = indices.size() / b;
  const std::size_t extra = indices.size() % b;
  std::vector<std::vector<std::size_t>> out(b);
  std::size_t pos = 0;
  for (std::size_t k = 0; k < b; ++k) {
    const std::size_t len = base + (k < extra ? 1 : 0);
    out[k].assign(indices.begin() + static_cast<std::ptrdiff_t>(pos),
                  indices.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return out;
}

InclusionProbabilities inclusion_probabilities_at_rate(std::span<const double> err_hat, double uniform_rate,
                                                       double gamma, double pi_floor) {
  const std::size_t m = err_hat.size();
  InclusionProbabilities out;
  if (m == 0) return out;
  if (!(uniform_rate >= 0.0 && uniform_rate <= 1.0)) throw ConfigError("batch budget exceeds batch size");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (!(pi_floor >= 0.0 && pi_floor < 1.0)) throw ConfigError("pi_floor must lie in [0, 1)");

  double total = 0;
  for (double e : err_hat) {
    if (!std::isfinite(e) || e < 0.0) throw DataError("predicted errors must be finite and >= 0");
    total += e;
  }
  const double budget = uniform_rate * static_cast<double>(m);
  out.budget = budget;
  out.pi.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    // Zero total error: the proportional part is itself uniform.
    const double share = total > 0.0 ? err_hat[i] / total : 1.0 / static_cast<double>(m);
    out.pi[i] = (1.0 - gamma) * budget * share + gamma * uniform_rate;
  }

  // Cap at one, pushing the excess onto the uncapped entries in proportion
  // to their current value. Each pass caps at least one more entry.
  std::vector<bool> capped(m, false);
  for (;;) {
    double excess = 0, free_mass = 0;
    std::size_t free_count = 0;
    for (std::size_t i = 0; i < m; ++i) {
      if (capped[i]) continue;
      if (out.pi[i] > 1.0) {
        excess += out.pi[i] - 1.0;
        out.pi[i] = 1.0;
        capped[i] = true;
      }
    }
    if (excess <= 0.0) break;
    for (std::size_t i = 0; i < m; ++i) {
      if (capped[i]) continue;
      free_mass += out.pi[i];
      ++free_count;
    }
    if (free_count == 0) break;
    for (std::size_t i = 0; i < m; ++i) {
      if (capped[i]) continue;
      out.pi[i] += free_mass > 0.0 ? excess * out.pi[i] / free_mass : excess / static_cast<double>(free_count);
    }
  }

  const double floor = pi_floor * uniform_rate;
  double sum = 0;
  for (auto& p : out.pi) {
    p = std::max(p, floor);
    sum += p;
  }
  out.deviation = sum - budget;
  return out;
}

InclusionProbabilities compute_inclusion_probabilities(std::span<const double> err_hat, double budget, double gamma,
                                                       double pi_floor) {
  const auto m = static_cast<double>(err_hat.size());
  if (budget < 0.0) throw ConfigError("batch budget must be >= 0");
  if (budget > m) throw ConfigError("batch budget exceeds batch size");
  if (err_hat.empty()) return {};
  return inclusion_probabilities_at_rate(err_hat, budget / m, gamma, pi_floor);
}

std::vector<std::uint8_t> poisson_draw(std::span<const double> pi, std::uint64_t seed) {
  for (double p : pi) check_probability(p);
  const auto u = draw_uniforms(pi.size(), seed);
  std::vector<std::uint8_t> xi(pi.size());
  for (std::size_t i = 0; i < pi.size(); ++i) xi[i] = u[i] < pi[i] ? 1 : 0;
  return xi;
}

SamplingTrace run_uniform_collection(const Dataset& dataset, double n_human, const LabelOracle& oracle,
                                     std::uint64_t seed) {
  const std::size_t n = dataset.size();
  if (n == 0) throw ConfigError("cannot sample from an empty dataset");
  if (!(n_human > 0.0) || n_human > static_cast<double>(n)) throw ConfigError("budget must lie in (0, n]");
  auto trace = empty_trace(n);
  const double rate = n_human / static_cast<double>(n);
  const auto u = draw_uniforms(n, seed);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<double> pis(n, rate);
  const auto labeled = draw_members(trace, all, pis, u, kBurnInBatch, oracle);
  trace.batches.push_back({kBurnInBatch, n, n_human, rate * static_cast<double>(n), labeled, 0, false, "uniform"});
  return trace;
}

namespace {

// Interns demographic profiles so each distinct profile is predicted once per batch.
struct ProfileIndex {
  std::vector<std::size_t> id_of_record;
  std::vector<const DemographicProfile*> profiles;

  explicit ProfileIndex(const Dataset& dataset) {
    std::map<std::map<std::string, std::string>, std::size_t> ids;
    id_of_record.reserve(dataset.size());
    for (const auto& r : dataset.records) {
      auto [it, inserted] = ids.emplace(r.demographics.attributes, profiles.size());
      if (inserted) profiles.push_back(&r.demographics);
      id_of_record.push_back(it->second);
    }
  }
};

}  // namespace

SamplingTrace run_adaptive_collection(const Dataset& dataset, const SamplingConfig& config, const std::string& variant,
                                      const LabelOracle& oracle, std::uint64_t seed, const ErrorModelFitter& fitter) {
  const std::size_t n = dataset.size();
  config.validate(n);
  if (!oracle) throw ConfigError("adaptive collection needs a label oracle");

  std::vector<double> proxies(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto it = dataset.records[i].llm_labels.find(variant);
    if (it == dataset.records[i].llm_labels.end())
      throw SchemaError("record " + std::to_string(i) + " has no llm variant '" + variant + "'");
    proxies[i] = it->second;
  }

  const ErrorModelFitter fit = fitter ? fitter : [&](std::span<const TrainingPair> pairs) {
    return fit_error_model(pairs, config.predictor);
  };

  auto trace = empty_trace(n);
  const double rate = config.n_human / static_cast<double>(n);
  const auto uniforms = draw_uniforms(n, seed);

  // The burn-in pool is sized so that sampling it at the uniform rate yields
  // n_burnin labels in expectation; every batch is later sampled with budget
  // rate * size, so the expected total is exactly n_human.
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const std::size_t pool =
      config.n_burnin >= config.n_human
          ? n
          : std::min(n, static_cast<std::size_t>(std::llround(config.n_burnin / rate)));
  auto split = partition_batches(all, 1, derive_seed(seed, {static_cast<std::uint64_t>(Stream::kBurnIn)}));
  std::vector<std::size_t> shuffled = std::move(split.front());
  std::vector<std::size_t> burn_in(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(pool));
  std::vector<std::size_t> rest(shuffled.begin() + static_cast<std::ptrdiff_t>(pool), shuffled.end());
  std::sort(burn_in.begin(), burn_in.end());
  std::sort(rest.begin(), rest.end());

  std::vector<TrainingPair> training;
  auto collect_pairs = [&](std::span<const std::size_t> members) {
    for (auto i : members) {
      if (!trace.xi[i]) continue;
      const double h = *trace.revealed[i];
      training.push_back({dataset.records[i].demographics, (proxies[i] - h) * (proxies[i] - h)});
    }
  };

  if (!burn_in.empty()) {
    std::vector<double> pis(burn_in.size(), rate);
    const auto labeled = draw_members(trace, burn_in, pis, uniforms, kBurnInBatch, oracle);
    trace.batches.push_back({kBurnInBatch, burn_in.size(), rate * static_cast<double>(burn_in.size()),
                             rate * static_cast<double>(burn_in.size()), labeled, 0, false, "burn-in"});
    collect_pairs(burn_in);
  }
  if (rest.empty()) return trace;

  const ProfileIndex profiles(dataset);
  const auto batches = partition_batches(rest, config.n_batches, seed);
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const auto& members = batches[b];
    BatchSummary summary;
    summary.index = static_cast<int>(b) + 1;
    summary.size = members.size();
    if (members.empty()) {
      trace.batches.push_back(summary);
      continue;
    }

    std::vector<double> err(members.size(), 1.0);
    std::optional<ErrorModel> model;
    if (training.empty()) {
      summary.uniform_fallback = true;
      summary.note = "no labels collected yet; uniform allocation";
    } else {
      try {
        model.emplace(fit(training));
        std::vector<double> by_profile(profiles.profiles.size(), -1.0);
        for (std::size_t k = 0; k < members.size(); ++k) {
          double& cached = by_profile[profiles.id_of_record[members[k]]];
          if (cached < 0.0) cached = model->predict(*profiles.profiles[profiles.id_of_record[members[k]]]);
          err[k] = cached;
        }
        summary.model_training_size = training.size();
      } catch (const std::exception& e) {
        model.reset();
        std::fill(err.begin(), err.end(), 1.0);
        summary.uniform_fallback = true;
        summary.note = std::string("error model failed (") + e.what() + "); uniform allocation";
      }
    }

    const auto probs = inclusion_probabilities_at_rate(err, rate, config.gamma, config.pi_floor);
    summary.budget = probs.budget;
    summary.pi_sum = probs.budget + probs.deviation;
    summary.labeled = draw_members(trace, members, probs.pi, uniforms, summary.index, oracle);
    if (model) trace.models.push_back(std::move(*model));
    trace.batches.push_back(std::move(summary));
    collect_pairs(members);
  }
  return trace;
}

Dataset apply_trace(const Dataset& dataset, const SamplingTrace& trace) {
  if (trace.size() != dataset.size()) throw ConfigError("trace does not match dataset size");
  Dataset out = dataset;
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    auto& r = out.records[i];
    if (trace.batch[i] == kNotOffered) {
      r.pi.reset();
      r.xi.reset();
      r.human_label.reset();
      continue;
    }
    r.pi = trace.pi[i];
    r.xi = trace.xi[i];
    if (!trace.xi[i])
      r.human_label.reset();
    else if (trace.revealed[i])
      r.human_label = trace.revealed[i];
  }
  return out;
}

}  // namespace pdi
