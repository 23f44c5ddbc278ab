#include "pdi/error_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "pdi/errors.hpp"

namespace pdi {

std::size_t FeatureSchema::width() const {
  std::size_t w = 0;
  for (const auto& v : vocabularies) w += v.size();
  return w;
}

FeatureSchema FeatureSchema::from_pairs(std::span<const TrainingPair> pairs) {
  FeatureSchema schema;
  if (pairs.empty()) return schema;
  std::map<std::string, std::set<std::string>> seen;
  for (const auto& [axis, _] : pairs.front().demographics.attributes) seen[axis];
  for (const auto& p : pairs) {
    for (auto& [axis, cats] : seen) {
      const auto* c = p.demographics.find(axis);
      if (c == nullptr) throw SchemaError("training pair lacks demographic axis '" + axis + "'");
      cats.insert(*c);
    }
  }
  for (auto& [axis, cats] : seen) {
    schema.axes.push_back(axis);
    schema.vocabularies.emplace_back(cats.begin(), cats.end());
  }
  return schema;
}

EncodedFeatures encode_features(const DemographicProfile& profile, const FeatureSchema& schema) {
  EncodedFeatures out;
  out.values.assign(schema.width(), 0.0);
  std::size_t offset = 0;
  for (std::size_t a = 0; a < schema.axes.size(); ++a) {
    const auto* c = profile.find(schema.axes[a]);
    if (c == nullptr) throw SchemaError("profile lacks demographic axis '" + schema.axes[a] + "'");
    const auto& vocab = schema.vocabularies[a];
    auto it = std::lower_bound(vocab.begin(), vocab.end(), *c);
    if (it != vocab.end() && *it == *c)
      out.values[offset + static_cast<std::size_t>(it - vocab.begin())] = 1.0;
    else
      out.unseen = true;
    offset += vocab.size();
  }
  return out;
}

std::string to_string(ErrorModelKind kind) {
  return kind == ErrorModelKind::kCellMean ? "cell_mean" : "boosted_stumps";
}

ErrorModelKind parse_error_model_kind(const std::string& name) {
  if (name == "cell_mean") return ErrorModelKind::kCellMean;
  if (name == "boosted_stumps") return ErrorModelKind::kBoostedStumps;
  throw ConfigError("unknown error model '" + name + "' (expected cell_mean or boosted_stumps)");
}

namespace {

std::string cell_key(const DemographicProfile& profile, const FeatureSchema& schema) {
  std::string key;
  for (const auto& axis : schema.axes) {
    const auto* c = profile.find(axis);
    if (c == nullptr) throw SchemaError("profile lacks demographic axis '" + axis + "'");
    key += *c;
    key += '\x1f';
  }
  return key;
}

// Sums sorted values so the result does not depend on training order.
double ordered_sum(std::vector<double>& values) {
  std::sort(values.begin(), values.end());
  double sum = 0;
  for (double v : values) sum += v;
  return sum;
}

CellMeanState fit_cell_mean(std::span<const TrainingPair> pairs, const FeatureSchema& schema, double kappa) {
  CellMeanState s;
  s.kappa = kappa;
  std::vector<double> all;
  std::map<std::string, std::vector<double>> by_cell;
  for (const auto& p : pairs) {
    all.push_back(p.target);
    by_cell[cell_key(p.demographics, schema)].push_back(p.target);
  }
  s.global_mean = ordered_sum(all) / static_cast<double>(pairs.size());
  for (auto& [key, targets] : by_cell) s.cells[key] = {ordered_sum(targets), targets.size()};

  s.marginals.resize(schema.axes.size());
  for (std::size_t a = 0; a < schema.axes.size(); ++a) {
    std::map<std::string, std::vector<double>> by_category;
    for (const auto& p : pairs) by_category[*p.demographics.find(schema.axes[a])].push_back(p.target);
    for (auto& [cat, targets] : by_category)
      s.marginals[a][cat] = ordered_sum(targets) / static_cast<double>(targets.size());
  }
  return s;
}

double predict_cell_mean(const CellMeanState& s, const FeatureSchema& schema, const DemographicProfile& profile) {
  auto it = s.cells.find(cell_key(profile, schema));
  if (it != s.cells.end()) {
    const auto [sum, count] = it->second;
    return (sum + s.kappa * s.global_mean) / (static_cast<double>(count) + s.kappa);
  }
  double acc = 0;
  int used = 0;
  for (std::size_t a = 0; a < schema.axes.size(); ++a) {
    auto m = s.marginals[a].find(*profile.find(schema.axes[a]));
    if (m != s.marginals[a].end()) {
      acc += m->second;
      ++used;
    }
  }
  return used > 0 ? acc / used : s.global_mean;
}

// Squared-loss gradient boosting with depth-1 trees on one-hot features.
// Each round picks the feature whose two-leaf split most reduces the
// residual sum of squares; ties go to the lowest feature index.
BoostedStumpsState fit_boosted(std::span<const TrainingPair> pairs, const FeatureSchema& schema,
                               const ErrorModelParams& params) {
  const std::size_t n = pairs.size();
  const std::size_t width = schema.width();
  std::vector<std::vector<double>> x;
  x.reserve(n);
  for (const auto& p : pairs) x.push_back(encode_features(p.demographics, schema).values);

  BoostedStumpsState s;
  s.learning_rate = params.learning_rate;
  double total = 0;
  for (const auto& p : pairs) total += p.target;
  s.base = total / static_cast<double>(n);

  std::vector<double> fitted(n, s.base);
  std::vector<double> residual(n);
  for (int round = 0; round < params.rounds; ++round) {
    double sum_all = 0;
    for (std::size_t i = 0; i < n; ++i) {
      residual[i] = pairs[i].target - fitted[i];
      sum_all += residual[i];
    }
    Stump best{0, sum_all / static_cast<double>(n), sum_all / static_cast<double>(n)};
    double best_gain = -1.0;
    for (std::size_t j = 0; j < width; ++j) {
      double sum_one = 0;
      std::size_t n_one = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (x[i][j] != 0.0) {
          sum_one += residual[i];
          ++n_one;
        }
      }
      const std::size_t n_zero = n - n_one;
      if (n_one == 0 || n_zero == 0) continue;
      const double sum_zero = sum_all - sum_one;
      const double gain = sum_one * sum_one / static_cast<double>(n_one) +
                          sum_zero * sum_zero / static_cast<double>(n_zero);
      if (gain > best_gain) {
        best_gain = gain;
        best = {j, sum_zero / static_cast<double>(n_zero), sum_one / static_cast<double>(n_one)};
      }
    }
    s.stumps.push_back(best);
    for (std::size_t i = 0; i < n; ++i)
      fitted[i] += s.learning_rate * (x[i][best.feature] != 0.0 ? best.when_one : best.when_zero);
  }
  return s;
}

double predict_boosted(const BoostedStumpsState& s, const FeatureSchema& schema, const DemographicProfile& profile) {
  const auto x = encode_features(profile, schema).values;
  double score = s.base;
  for (const auto& stump : s.stumps)
    score += s.learning_rate * (!x.empty() && x[stump.feature] != 0.0 ? stump.when_one : stump.when_zero);
  return std::max(score, 0.0);
}

}  // namespace

ErrorModelKind ErrorModel::kind() const {
  return std::holds_alternative<CellMeanState>(state_) ? ErrorModelKind::kCellMean : ErrorModelKind::kBoostedStumps;
}

double ErrorModel::predict(const DemographicProfile& profile) const {
  if (const auto* cm = std::get_if<CellMeanState>(&state_)) return std::max(predict_cell_mean(*cm, schema_, profile), 0.0);
  return predict_boosted(std::get<BoostedStumpsState>(state_), schema_, profile);
}

ErrorModel fit_error_model(std::span<const TrainingPair> pairs, const ErrorModelParams& params) {
  if (pairs.empty()) throw DataError("cannot fit an error model on an empty training set");
  for (const auto& p : pairs)
    if (!std::isfinite(p.target) || p.target < 0.0) throw DataError("error-model targets must be finite and >= 0");
  auto schema = FeatureSchema::from_pairs(pairs);
  if (params.kind == ErrorModelKind::kCellMean) {
    if (!(params.kappa >= 0.0)) throw ConfigError("kappa must be >= 0");
    auto state = fit_cell_mean(pairs, schema, params.kappa);
    return ErrorModel(std::move(schema), pairs.size(), std::move(state));
  }
  if (pairs.size() < 5) throw DataError("boosted_stumps needs at least 5 training pairs");
  if (params.rounds < 0 || !(params.learning_rate > 0.0)) throw ConfigError("invalid boosting hyperparameters");
  auto state = fit_boosted(pairs, schema, params);
  return ErrorModel(std::move(schema), pairs.size(), std::move(state));
}

}  // namespace pdi
