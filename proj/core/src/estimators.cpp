#include "pdi/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>

#include "pdi/errors.hpp"
#include "pdi/rng.hpp"
#include "pdi/special_functions.hpp"

namespace pdi {

std::string to_string(Method method) {
  switch (method) {
    case Method::kClassical:
      return "classical";
    case Method::kLlmOnly:
      return "llm_only";
    case Method::kPpi:
      return "ppi";
    case Method::kPdi:
      return "pdi";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  if (name == "classical") return Method::kClassical;
  if (name == "llm_only") return Method::kLlmOnly;
  if (name == "ppi") return Method::kPpi;
  if (name == "pdi") return Method::kPdi;
  throw ConfigError("unknown method '" + name + "' (expected classical, llm_only, ppi or pdi)");
}

namespace {

std::string group_label(const std::string& group) { return group.empty() ? "<unnamed>" : group; }

void check_pi(double pi) {
  if (!(pi > 0.0 && pi <= 1.0)) throw DataError("labeled record has inclusion probability outside (0, 1]");
}

// Sufficient statistics of the rectified estimator. The point estimate and
// every bootstrap replicate go through the same accumulation and formulas.
struct Moments {
  double n_total = 0;
  double sum_proxy = 0;
  double sum_proxy_sq = 0;
  double n_labeled = 0;
  double sum_w = 0;
  double sum_wh = 0;
  double sum_wf = 0;
  double sum_whf = 0;
  double sum_wff = 0;
  double min_labeled_proxy = std::numeric_limits<double>::infinity();
  double max_labeled_proxy = -std::numeric_limits<double>::infinity();

  void add_proxy(double f, double count = 1.0) {
    n_total += count;
    sum_proxy += count * f;
    sum_proxy_sq += count * f * f;
  }

  // Labeled-side statistics only; the proxy totals are added separately.
  void add_labeled(double h, double f, double pi) {
    const double w = 1.0 / pi;
    n_labeled += 1;
    sum_w += w;
    sum_wh += w * h;
    sum_wf += w * f;
    sum_whf += w * h * f;
    sum_wff += w * f * f;
    min_labeled_proxy = std::min(min_labeled_proxy, f);
    max_labeled_proxy = std::max(max_labeled_proxy, f);
  }

  LambdaFit lambda() const {
    if (n_labeled < 2 || !(max_labeled_proxy > min_labeled_proxy)) return {0.0, true};
    const double mean_f = sum_proxy / n_total;
    const double var_f = sum_proxy_sq / n_total - mean_f * mean_f;
    if (!(var_f > 1e-14)) return {0.0, true};
    const double mean_wh = sum_wh / sum_w;
    const double mean_wf = sum_wf / sum_w;
    const double cov = sum_whf / sum_w - mean_wh * mean_wf;
    const double raw = cov / ((1.0 + n_labeled / n_total) * var_f);
    return {std::clamp(raw, 0.0, 1.0), false};
  }

  double estimate(double lambda) const {
    return lambda * (sum_proxy / n_total) + (sum_wh - lambda * sum_wf) / sum_w;
  }
};

Moments full_moments(const GroupSample& sample) {
  Moments m;
  for (double f : sample.proxies) m.add_proxy(f);
  for (std::size_t i = 0; i < sample.n_labeled(); ++i) {
    check_pi(sample.labeled_pi[i]);
    m.add_labeled(sample.labels[i], sample.labeled_proxies[i], sample.labeled_pi[i]);
  }
  return m;
}

void require_labels(const GroupSample& sample) {
  if (sample.n_total() == 0) throw EmptyGroupError(sample.group, "group " + group_label(sample.group) + " is empty");
  if (sample.n_labeled() == 0)
    throw EmptyGroupError(sample.group, "group " + group_label(sample.group) + " has no labeled records");
}

// Resampling N records i.i.d. from the group is split exactly into: the
// number of draws that land on labeled records (binomial), uniform draws
// among the labeled, and a multinomial over the distinct unlabeled proxy
// values. The last step collapses to a handful of binomials on binary and
// Likert data.
class Resampler {
 public:
  explicit Resampler(const GroupSample& sample) : sample_(sample) {
    // Unlabeled proxies = all proxies minus the labeled ones (as a multiset).
    std::map<double, double> counts;
    for (double f : sample.proxies) counts[f] += 1;
    for (double f : sample.labeled_proxies) {
      auto it = counts.find(f);
      if (it != counts.end() && (it->second -= 1) <= 0) counts.erase(it);
    }
    n_unlabeled_ = sample.n_total() - sample.n_labeled();
    if (counts.size() <= kMaxDistinct) {
      for (auto [v, c] : counts) {
        values_.push_back(v);
        weights_.push_back(c);
      }
    } else {
      for (auto [v, c] : counts)
        for (int k = 0; k < static_cast<int>(c); ++k) raw_.push_back(v);
    }
  }

  // Returns false when the resample drew no labeled record.
  bool draw(Rng& rng, Moments& m) const {
    const auto n = static_cast<std::uint64_t>(sample_.n_total());
    const auto n_lab = static_cast<std::uint64_t>(sample_.n_labeled());
    const std::uint64_t hits = rng.binomial(n, static_cast<double>(n_lab) / static_cast<double>(n));
    if (hits == 0) return false;
    m = Moments{};
    for (std::uint64_t k = 0; k < hits; ++k) {
      const auto i = rng.index(n_lab);
      m.add_proxy(sample_.labeled_proxies[i]);
      m.add_labeled(sample_.labels[i], sample_.labeled_proxies[i], sample_.labeled_pi[i]);
    }
    std::uint64_t left = n - hits;
    if (!raw_.empty()) {
      for (std::uint64_t k = 0; k < left; ++k) m.add_proxy(raw_[rng.index(raw_.size())]);
      return true;
    }
    double mass = static_cast<double>(n_unlabeled_);
    for (std::size_t j = 0; j < values_.size() && left > 0; ++j) {
      std::uint64_t c = (j + 1 == values_.size()) ? left : rng.binomial(left, weights_[j] / mass);
      m.add_proxy(values_[j], static_cast<double>(c));
      left -= c;
      mass -= weights_[j];
    }
    return true;
  }

 private:
  static constexpr std::size_t kMaxDistinct = 64;
  const GroupSample& sample_;
  std::size_t n_unlabeled_ = 0;
  std::vector<double> values_;
  std::vector<double> weights_;
  std::vector<double> raw_;
};

constexpr int kMaxRedraws = 1000;

}  // namespace

double hajek_mean(std::span<const WeightedObservation> observations, const std::string& group) {
  double sum_w = 0, sum_wv = 0;
  bool any = false;
  for (const auto& o : observations) {
    if (!o.xi) continue;
    check_pi(o.pi);
    const double w = 1.0 / o.pi;
    sum_w += w;
    sum_wv += w * o.value;
    any = true;
  }
  if (!any) throw EmptyGroupError(group, "group " + group_label(group) + " has no labeled records");
  return sum_wv / sum_w;
}

namespace {

template <typename Records>
GroupSample collect(const Records& records, const std::string& variant, std::string group) {
  GroupSample s;
  s.group = std::move(group);
  for (const AnnotationRecord& r : records) {
    auto it = r.llm_labels.find(variant);
    if (it == r.llm_labels.end())
      throw SchemaError("record '" + r.instance_id + "' has no llm variant '" + variant + "'");
    s.proxies.push_back(it->second);
    if (r.labeled()) {
      if (!r.human_label) throw DataError("record '" + r.instance_id + "' is labeled but has no human label");
      if (!r.pi) throw DataError("record '" + r.instance_id + "' is labeled but has no inclusion probability");
      s.labels.push_back(*r.human_label);
      s.labeled_proxies.push_back(it->second);
      s.labeled_pi.push_back(*r.pi);
    }
  }
  return s;
}

}  // namespace

GroupSample GroupSample::from_records(std::span<const AnnotationRecord> records, const std::string& variant,
                                      std::string group) {
  return collect(records, variant, std::move(group));
}

GroupSample GroupSample::from_dataset(const Dataset& dataset, std::span<const std::size_t> members,
                                      const std::string& variant, std::string group) {
  std::vector<std::reference_wrapper<const AnnotationRecord>> view;
  view.reserve(members.size());
  for (auto i : members) view.emplace_back(dataset.records.at(i));
  return collect(view, variant, std::move(group));
}

double rectified_point_estimate(const GroupSample& sample, double lambda) {
  require_labels(sample);
  if (!std::isfinite(lambda)) throw ConfigError("lambda must be finite");
  return full_moments(sample).estimate(lambda);
}

LambdaFit tune_lambda(const GroupSample& sample) {
  if (sample.n_labeled() == 0 || sample.n_total() == 0) return {0.0, true};
  return full_moments(sample).lambda();
}

double empirical_quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double h = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<double> bootstrap_distribution(const GroupSample& sample, int replicates, std::uint64_t seed,
                                           LambdaMode mode) {
  require_labels(sample);
  if (replicates < 1) throw ConfigError("bootstrap requires at least one replicate");
  for (double pi : sample.labeled_pi) check_pi(pi);

  Resampler resampler(sample);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(replicates));
  Moments m;
  for (int b = 0; b < replicates; ++b) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(Stream::kBootstrap), static_cast<std::uint64_t>(b)}));
    int tries = 0;
    while (!resampler.draw(rng, m)) {
      if (++tries >= kMaxRedraws)
        throw EmptyGroupError(sample.group, "group " + group_label(sample.group) +
                                                ": bootstrap resamples keep missing every labeled record");
    }
    const double lambda = mode == LambdaMode::kTuned ? m.lambda().value : 0.0;
    out.push_back(m.estimate(lambda));
  }
  return out;
}

Interval bootstrap_ci(const GroupSample& sample, double alpha, int replicates, std::uint64_t seed, LambdaMode mode) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  auto values = bootstrap_distribution(sample, replicates, seed, mode);
  std::sort(values.begin(), values.end());
  return {empirical_quantile(values, alpha / 2), empirical_quantile(values, 1 - alpha / 2)};
}

GroupEstimate llm_only_estimate(const GroupSample& sample, double alpha) {
  if (sample.n_total() == 0) throw EmptyGroupError(sample.group, "group " + group_label(sample.group) + " is empty");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  const double n = static_cast<double>(sample.n_total());
  double mean = 0;
  for (double f : sample.proxies) mean += f;
  mean /= n;
  double ss = 0;
  for (double f : sample.proxies) ss += (f - mean) * (f - mean);
  const double sd = sample.n_total() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  const double half = math::normal_quantile(1 - alpha / 2) * sd / std::sqrt(n);

  GroupEstimate e;
  e.group = sample.group;
  e.method = Method::kLlmOnly;
  e.theta_hat = mean;
  e.ci = {mean - half, mean + half};
  e.n_labeled = 0;
  e.n_total = sample.n_total();
  e.alpha = alpha;
  return e;
}

GroupEstimate classical_human_estimate(const GroupSample& sample, double alpha, int replicates, std::uint64_t seed) {
  require_labels(sample);
  GroupEstimate e;
  e.group = sample.group;
  e.method = Method::kClassical;
  e.theta_hat = full_moments(sample).estimate(0.0);
  e.ci = bootstrap_ci(sample, alpha, replicates, seed, LambdaMode::kZero);
  e.n_labeled = sample.n_labeled();
  e.n_total = sample.n_total();
  e.alpha = alpha;
  return e;
}

GroupEstimate rectified_estimate(const GroupSample& sample, Method method, double alpha, int replicates,
                                 std::uint64_t seed) {
  require_labels(sample);
  const Moments m = full_moments(sample);
  const LambdaFit lambda = m.lambda();
  GroupEstimate e;
  e.group = sample.group;
  e.method = method;
  e.lambda = lambda.value;
  e.lambda_degenerate = lambda.degenerate;
  e.theta_hat = m.estimate(lambda.value);
  e.ci = bootstrap_ci(sample, alpha, replicates, seed, LambdaMode::kTuned);
  e.n_labeled = sample.n_labeled();
  e.n_total = sample.n_total();
  e.alpha = alpha;
  return e;
}

namespace {

GroupEstimate estimate_one(const GroupSample& sample, Method method, const EstimatorConfig& config,
                           std::uint64_t group_seed) {
  try {
    switch (method) {
      case Method::kLlmOnly:
        return llm_only_estimate(sample, config.alpha);
      case Method::kClassical:
        return classical_human_estimate(sample, config.alpha, config.bootstrap, group_seed);
      case Method::kPpi:
      case Method::kPdi:
        break;
    }
    return rectified_estimate(sample, method, config.alpha, config.bootstrap, group_seed);
  } catch (const EmptyGroupError& e) {
    GroupEstimate failed;
    failed.group = sample.group;
    failed.method = method;
    failed.alpha = config.alpha;
    failed.n_total = sample.n_total();
    failed.n_labeled = sample.n_labeled();
    failed.error = e.what();
    return failed;
  }
}

}  // namespace

EstimateVector estimate_group_samples(std::span<const GroupSample> samples, Method method,
                                      const EstimatorConfig& config, std::uint64_t seed) {
  EstimateVector out;
  out.method = method;
  out.seed = seed;
  out.config = config;
  for (std::size_t g = 0; g < samples.size(); ++g)
    out.groups.push_back(estimate_one(samples[g], method, config, derive_seed(seed, {static_cast<std::uint64_t>(g)})));
  return out;
}

EstimateVector estimate_groups(const Dataset& dataset, const GroupPartition& partition, Method method,
                               const EstimatorConfig& config, std::uint64_t seed) {
  if (partition.membership.size() != dataset.records.size())
    throw ConfigError("partition does not match dataset size");
  std::vector<std::vector<std::size_t>> members(partition.K());
  for (std::size_t i = 0; i < partition.membership.size(); ++i) members[partition.membership[i]].push_back(i);
  std::vector<GroupSample> samples;
  for (std::size_t g = 0; g < partition.K(); ++g)
    samples.push_back(GroupSample::from_dataset(dataset, members[g], config.variant, partition.groups[g].name));
  return estimate_group_samples(samples, method, config, seed);
}

}  // namespace pdi
