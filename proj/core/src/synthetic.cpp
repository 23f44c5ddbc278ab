#include "pdi/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pdi/errors.hpp"
#include "pdi/rng.hpp"

namespace pdi {

std::size_t SynthConfig::small_group_size() const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(N) * small_group_share));
}

void SynthConfig::validate() const {
  if (N < 2) throw ConfigError("synthetic N must be at least 2");
  if (!(small_group_share > 0.0 && small_group_share < 1.0)) throw ConfigError("small_group_share must lie in (0, 1)");
  const auto small = small_group_size();
  if (small == 0 || small >= N) throw ConfigError("group share leaves one group empty");
  for (double rate : {base_rate_g1, base_rate_g2})
    if (!(rate > 0.0 && rate < 1.0)) throw ConfigError("base rates must lie in (0, 1)");
  for (double err : {err_g1, err_g2})
    if (!(err >= 0.0 && err <= 0.5)) throw ConfigError("flip rates must lie in [0, 0.5]");
}

Dataset generate_synthetic(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed, Stream::kGenerator);
  const std::size_t small = config.small_group_size();
  const std::size_t large = config.N - small;

  Dataset d;
  d.rating_scale = RatingScale::Binary();
  d.metadata["source"] = "synthetic";
  d.records.reserve(config.N);
  char id[32];
  for (std::size_t i = 0; i < config.N; ++i) {
    const bool is_small = i >= large;
    const double y = rng.bernoulli(is_small ? config.base_rate_g2 : config.base_rate_g1) ? 1.0 : 0.0;
    const bool flip = rng.bernoulli(is_small ? config.err_g2 : config.err_g1);
    AnnotationRecord r;
    std::snprintf(id, sizeof id, "s%06zu", i);
    r.instance_id = id;
    r.human_label = y;
    r.llm_labels[kSyntheticVariant] = flip ? 1.0 - y : y;
    r.demographics.attributes[kSyntheticAxis] = is_small ? "g2" : "g1";
    d.records.push_back(std::move(r));
  }
  return d;
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kBudget:
      return "budget";
    case SweepAxis::kBurnin:
      return "burnin";
    case SweepAxis::kErrorGap:
      return "error_gap";
    case SweepAxis::kGroupShare:
      return "group_share";
  }
  return "unknown";
}

SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "budget") return SweepAxis::kBudget;
  if (name == "burnin") return SweepAxis::kBurnin;
  if (name == "error_gap") return SweepAxis::kErrorGap;
  if (name == "group_share") return SweepAxis::kGroupShare;
  throw ConfigError("unknown sweep axis '" + name + "' (expected budget, burnin, error_gap or group_share)");
}

namespace {

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

[[noreturn]] void out_of_domain(SweepAxis axis, double value, const std::string& why) {
  throw ConfigError("sweep " + to_string(axis) + " value " + format_value(value) + " out of domain: " + why);
}

}  // namespace

std::vector<SweepPoint> make_sweep_grid(SweepAxis axis, const std::vector<double>& values, const SweepBase& base) {
  if (values.empty()) throw ConfigError("sweep values must be nonempty");
  if (!std::is_sorted(values.begin(), values.end())) throw ConfigError("sweep values must be sorted");

  std::vector<SweepPoint> grid;
  for (double v : values) {
    SweepPoint p;
    p.axis = axis;
    p.value = v;
    p.label = to_string(axis) + "=" + format_value(v);
    p.synth = base.synth;
    p.sampling = base.sampling;
    p.trials = base.trials;
    switch (axis) {
      case SweepAxis::kBudget:
        if (!(v > 0.0 && v <= 100.0)) out_of_domain(axis, v, "percent of N must lie in (0, 100]");
        p.sampling.n_human = v / 100.0 * static_cast<double>(base.synth.N);
        if (p.sampling.n_burnin > p.sampling.n_human) out_of_domain(axis, v, "budget below burn-in size");
        break;
      case SweepAxis::kBurnin:
        if (!(v >= 0.0) || v > base.sampling.n_human) out_of_domain(axis, v, "burn-in must lie in [0, budget]");
        p.sampling.n_burnin = v;
        break;
      case SweepAxis::kErrorGap:
        p.synth.err_g2 = base.synth.err_g1 + v;
        if (!(v >= 0.0) || p.synth.err_g2 > 0.5) out_of_domain(axis, v, "err_g1 + gap must lie in [err_g1, 0.5]");
        break;
      case SweepAxis::kGroupShare:
        p.synth.small_group_share = v;
        break;
    }
    try {
      p.synth.validate();
    } catch (const ConfigError& e) {
      out_of_domain(axis, v, e.what());
    }
    grid.push_back(std::move(p));
  }
  return grid;
}

}  // namespace pdi
