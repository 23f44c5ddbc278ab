#include "pdi/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <thread>

#include "pdi/errors.hpp"
#include "pdi/rng.hpp"
#include "pdi/special_functions.hpp"

namespace pdi {

std::vector<double> compute_ground_truth(const Dataset& dataset, const GroupPartition& partition) {
  if (partition.membership.size() != dataset.size()) throw ConfigError("partition does not match dataset size");
  std::vector<double> sum(partition.K(), 0.0);
  std::vector<std::size_t> count(partition.K(), 0);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& h = dataset.records[i].human_label;
    if (!h) throw DataError("ground truth needs every human label; record " + std::to_string(i) + " has none");
    sum[partition.membership[i]] += *h;
    ++count[partition.membership[i]];
  }
  for (std::size_t g = 0; g < sum.size(); ++g) {
    if (count[g] == 0) throw EmptyGroupError(partition.groups[g].name, "group " + partition.groups[g].name + " is empty");
    sum[g] /= static_cast<double>(count[g]);
  }
  return sum;
}

std::uint64_t trial_seed(std::uint64_t master_seed, int trial) {
  return derive_seed(master_seed, {static_cast<std::uint64_t>(Stream::kTrial), static_cast<std::uint64_t>(trial)});
}

TrialResult run_trial(const Dataset& dataset, const GroupPartition& partition, Method method,
                      const TrialConfig& config, std::uint64_t seed, const LabelOracle& oracle, bool keep_trace) {
  if (partition.membership.size() != dataset.size()) throw ConfigError("partition does not match dataset size");
  const LabelOracle reveal = oracle ? oracle : LabelOracle([&dataset](std::size_t i) {
    const auto& h = dataset.records[i].human_label;
    if (!h) throw DataError("record " + std::to_string(i) + " was sampled but has no human label");
    return *h;
  });

  TrialResult result;
  result.method = method;
  result.seed = seed;

  std::optional<SamplingTrace> trace;
  switch (method) {
    case Method::kLlmOnly:
      break;
    case Method::kClassical:
    case Method::kPpi:
      trace = run_uniform_collection(dataset, config.sampling.n_human, reveal, seed);
      break;
    case Method::kPdi:
      trace = run_adaptive_collection(dataset, config.sampling, config.estimator.variant, reveal, seed);
      break;
  }

  // Group samples are assembled from the trace alone: only labels revealed
  // through the oracle reach the estimators.
  const auto& variant = config.estimator.variant;
  std::vector<GroupSample> samples(partition.K());
  for (std::size_t g = 0; g < partition.K(); ++g) samples[g].group = partition.groups[g].name;
  result.labeled_per_group.assign(partition.K(), 0);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    auto it = dataset.records[i].llm_labels.find(variant);
    if (it == dataset.records[i].llm_labels.end())
      throw SchemaError("record " + std::to_string(i) + " has no llm variant '" + variant + "'");
    auto& s = samples[partition.membership[i]];
    s.proxies.push_back(it->second);
    if (trace && trace->xi[i]) {
      s.labels.push_back(*trace->revealed[i]);
      s.labeled_proxies.push_back(it->second);
      s.labeled_pi.push_back(trace->pi[i]);
      ++result.labeled_per_group[partition.membership[i]];
      result.labeled_records.push_back(static_cast<std::uint32_t>(i));
    }
  }

  result.estimates = estimate_group_samples(samples, method, config.estimator,
                                            derive_seed(seed, {static_cast<std::uint64_t>(Stream::kBootstrap)}));
  if (keep_trace) result.trace = std::move(trace);
  return result;
}

std::vector<TrialResult> run_trials(const Dataset& dataset, const GroupPartition& partition,
                                    std::span<const Method> methods, const TrialConfig& config, int trials,
                                    std::uint64_t master_seed, int threads, bool keep_traces) {
  if (trials < 1) throw ConfigError("at least one trial is required");
  const std::size_t total = static_cast<std::size_t>(trials) * methods.size();
  std::vector<TrialResult> results(total);

  auto run_one = [&](std::size_t job) {
    const int t = static_cast<int>(job / methods.size());
    const Method m = methods[job % methods.size()];
    const auto seed = trial_seed(master_seed, t);
    try {
      results[job] = run_trial(dataset, partition, m, config, seed, {}, keep_traces);
    } catch (const std::exception& e) {
      results[job] = TrialResult{};
      results[job].method = m;
      results[job].seed = seed;
      results[job].error = "trial " + std::to_string(t) + ": " + e.what();
    }
    results[job].trial = t;
  };

  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(total)));
  if (workers == 1) {
    for (std::size_t j = 0; j < total; ++j) run_one(j);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t j = next++; j < total; j = next++) run_one(j);
    });
  for (auto& th : pool) th.join();
  return results;
}

namespace {

void check_groups(const TrialResult& t, std::size_t k) {
  if (t.ok() && t.estimates.groups.size() != k) throw ConfigError("trial groups do not match truth vector");
}

}  // namespace

std::vector<double> aggregate_coverage(std::span<const TrialResult> trials, std::span<const double> truth) {
  if (trials.empty()) throw ConfigError("coverage needs at least one trial");
  std::vector<double> covered(truth.size(), 0.0);
  for (const auto& t : trials) {
    check_groups(t, truth.size());
    if (!t.ok()) continue;
    for (std::size_t g = 0; g < truth.size(); ++g) {
      const auto& e = t.estimates.groups[g];
      if (e.ok() && e.ci.contains(truth[g])) covered[g] += 1.0;
    }
  }
  for (auto& c : covered) c /= static_cast<double>(trials.size());
  return covered;
}

DeltaSummary aggregate_delta(std::span<const TrialResult> trials, std::span<const double> truth) {
  if (trials.empty()) throw ConfigError("delta needs at least one trial");
  const std::size_t k = truth.size();
  std::vector<std::vector<double>> deltas(k);
  for (const auto& t : trials) {
    check_groups(t, k);
    if (!t.ok()) continue;
    for (std::size_t g = 0; g < k; ++g) {
      const auto& e = t.estimates.groups[g];
      if (e.ok()) deltas[g].push_back(std::fabs(e.theta_hat - truth[g]) * 100.0);
    }
  }
  DeltaSummary out;
  out.per_group.assign(k, std::nan(""));
  out.sd.assign(k, std::nan(""));
  double sum = 0;
  std::size_t used = 0;
  for (std::size_t g = 0; g < k; ++g) {
    if (deltas[g].empty()) continue;
    double mean = 0;
    for (double d : deltas[g]) mean += d;
    mean /= static_cast<double>(deltas[g].size());
    double ss = 0;
    for (double d : deltas[g]) ss += (d - mean) * (d - mean);
    out.per_group[g] = mean;
    out.sd[g] = deltas[g].size() > 1 ? std::sqrt(ss / static_cast<double>(deltas[g].size() - 1)) : 0.0;
    sum += mean;
    ++used;
  }
  out.average = used > 0 ? sum / static_cast<double>(used) : std::nan("");
  return out;
}

std::vector<std::vector<double>> sampling_count_table(std::span<const TrialResult> trials,
                                                      std::span<const GroupPartition> partitions) {
  std::vector<std::vector<double>> table;
  for (const auto& p : partitions) {
    std::vector<double> row(p.K(), 0.0);
    std::size_t used = 0;
    for (const auto& t : trials) {
      if (!t.ok()) continue;
      for (auto i : t.labeled_records) row[p.membership.at(i)] += 1.0;
      ++used;
    }
    if (used > 0)
      for (auto& v : row) v /= static_cast<double>(used);
    table.push_back(std::move(row));
  }
  return table;
}

std::vector<MethodMetrics> build_metrics(std::span<const TrialResult> trials, const GroupPartition& partition,
                                         std::span<const double> truth) {
  std::vector<Method> order;
  for (const auto& t : trials)
    if (std::find(order.begin(), order.end(), t.method) == order.end()) order.push_back(t.method);

  std::vector<MethodMetrics> out;
  for (Method m : order) {
    std::vector<TrialResult> mine;
    for (const auto& t : trials)
      if (t.method == m) mine.push_back(t);

    MethodMetrics mm;
    mm.method = m;
    mm.trials = static_cast<int>(mine.size());
    const auto coverage = aggregate_coverage(mine, truth);
    const auto delta = aggregate_delta(mine, truth);
    const auto counts = sampling_count_table(mine, std::span<const GroupPartition>(&partition, 1)).front();

    double delta_sum = 0;
    std::size_t delta_groups = 0;
    for (std::size_t g = 0; g < partition.K(); ++g) {
      GroupMetrics gm;
      gm.group = partition.groups[g].name;
      double width = 0;
      for (const auto& t : mine) {
        if (!t.ok() || !t.estimates.groups[g].ok()) continue;
        ++gm.successes;
        width += t.estimates.groups[g].ci.width();
      }
      if (gm.successes == 0) {
        gm.warning = "group produced no estimate in any trial";
      } else {
        gm.coverage = coverage[g];
        gm.delta_pp = delta.per_group[g];
        gm.delta_sd_pp = delta.sd[g];
        gm.mean_count = counts[g];
        gm.ci_width_mean = width / static_cast<double>(gm.successes);
        delta_sum += delta.per_group[g];
        ++delta_groups;
        if (gm.successes < mine.size())
          gm.warning = "estimate failed in " + std::to_string(mine.size() - gm.successes) + " trial(s)";
      }
      mm.groups.push_back(std::move(gm));
    }
    if (delta_groups > 0) mm.avg_delta_pp = delta_sum / static_cast<double>(delta_groups);
    out.push_back(std::move(mm));
  }
  return out;
}

ChiSquaredResult chi_squared_test(const std::vector<std::vector<double>>& counts) {
  const std::size_t rows = counts.size();
  if (rows < 2) throw DataError("chi-squared test needs at least two rows");
  const std::size_t cols = counts.front().size();
  if (cols < 2) throw DataError("chi-squared test needs at least two columns");
  std::vector<double> row_sum(rows, 0.0), col_sum(cols, 0.0);
  double total = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    if (counts[i].size() != cols) throw DataError("contingency table rows differ in length");
    for (std::size_t j = 0; j < cols; ++j) {
      const double c = counts[i][j];
      if (!std::isfinite(c) || c < 0.0) throw DataError("contingency counts must be finite and >= 0");
      row_sum[i] += c;
      col_sum[j] += c;
      total += c;
    }
  }
  for (double r : row_sum)
    if (r <= 0.0) throw DataError("contingency table has a zero row margin");
  for (double c : col_sum)
    if (c <= 0.0) throw DataError("contingency table has a zero column margin");

  ChiSquaredResult out;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double expected = row_sum[i] * col_sum[j] / total;
      const double diff = counts[i][j] - expected;
      out.statistic += diff * diff / expected;
    }
  }
  out.df = static_cast<int>((rows - 1) * (cols - 1));
  out.p_value = math::chi_squared_sf(out.statistic, out.df);
  return out;
}

ContingencyTable contingency_table(const Dataset& dataset, const std::string& axis) {
  std::map<std::string, std::map<double, double>> cells;
  std::map<double, int> levels;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& r = dataset.records[i];
    if (!r.human_label) continue;
    const auto* cat = r.demographics.find(axis);
    if (cat == nullptr) throw SchemaError("record " + std::to_string(i) + " has no demographic axis '" + axis + "'");
    // Round to kill float noise from the unit-scale round trip.
    const double raw = std::round(denormalize_rating(*r.human_label, dataset.rating_scale) * 1e9) / 1e9;
    cells[*cat][raw] += 1.0;
    levels[raw] = 0;
  }
  ContingencyTable t;
  for (const auto& [level, _] : levels) t.columns.push_back(level);
  for (const auto& [cat, row] : cells) {
    t.rows.push_back(cat);
    std::vector<double> counts;
    for (double level : t.columns) {
      auto it = row.find(level);
      counts.push_back(it == row.end() ? 0.0 : it->second);
    }
    t.counts.push_back(std::move(counts));
  }
  return t;
}

}  // namespace pdi
