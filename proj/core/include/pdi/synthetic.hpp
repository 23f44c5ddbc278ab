#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pdi/dataset.hpp"
#include "pdi/sampling.hpp"

namespace pdi {

/// Two-group binary annotation world: a large group g1 and a small group
/// g2, each with its own label base rate and LLM flip rate.
struct SynthConfig {
  std::size_t N = 10000;
  double small_group_share = 0.10;
  double base_rate_g1 = 0.44;
  double base_rate_g2 = 0.32;
  double err_g1 = 0.10;
  double err_g2 = 0.30;
  std::uint64_t seed = 0;

  std::size_t small_group_size() const;
  void validate() const;
};

inline constexpr const char* kSyntheticAxis = "group";
inline constexpr const char* kSyntheticVariant = "zero_shot";

/// N binary records: g1 first, then g2. Y ~ Bernoulli(base rate), and the
/// LLM label is Y flipped with the group's error rate.
Dataset generate_synthetic(const SynthConfig& config);

enum class SweepAxis { kBudget, kBurnin, kErrorGap, kGroupShare };

std::string to_string(SweepAxis axis);
SweepAxis parse_sweep_axis(const std::string& name);

struct SweepBase {
  SynthConfig synth;
  SamplingConfig sampling;
  int trials = 200;
};

struct SweepPoint {
  SweepAxis axis = SweepAxis::kBudget;
  double value = 0.0;
  std::string label;  // "axis=value"
  SynthConfig synth;
  SamplingConfig sampling;
  int trials = 0;
};

/// One resolved configuration per value. Budget values are percentages of
/// N, burn-in values are label counts, error gaps set err_g2 = err_g1 + gap,
/// group shares set the small group's share. Throws ConfigError naming the
/// first value outside its domain, or when values are empty or unsorted.
std::vector<SweepPoint> make_sweep_grid(SweepAxis axis, const std::vector<double>& values, const SweepBase& base);

}  // namespace pdi
