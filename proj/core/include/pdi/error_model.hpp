#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pdi/dataset.hpp"

namespace pdi {

/// Features: a demographic profile. Target: squared LLM error (proxy - H)^2.
struct TrainingPair {
  DemographicProfile demographics;
  double target = 0.0;
};

/// Ordered axes and their category vocabularies (sorted).
struct FeatureSchema {
  std::vector<std::string> axes;
  std::vector<std::vector<std::string>> vocabularies;

  std::size_t width() const;
  static FeatureSchema from_pairs(std::span<const TrainingPair> pairs);
};

struct EncodedFeatures {
  std::vector<double> values;
  bool unseen = false;  // at least one axis had a category outside the vocabulary
};

/// Concatenated one-hot blocks, one per schema axis. An unseen category
/// encodes as an all-zero block. Throws SchemaError on a missing axis.
EncodedFeatures encode_features(const DemographicProfile& profile, const FeatureSchema& schema);

enum class ErrorModelKind { kCellMean, kBoostedStumps };

std::string to_string(ErrorModelKind kind);
ErrorModelKind parse_error_model_kind(const std::string& name);

struct ErrorModelParams {
  ErrorModelKind kind = ErrorModelKind::kCellMean;
  double kappa = 1.0;  // cell_mean shrinkage toward the global mean
  int rounds = 50;
  double learning_rate = 0.1;
};

struct CellMeanState {
  double global_mean = 0.0;
  double kappa = 1.0;
  std::map<std::string, std::pair<double, std::size_t>> cells;       // key -> (sum, count)
  std::vector<std::map<std::string, double>> marginals;              // per axis: category -> mean
};

struct Stump {
  std::size_t feature = 0;
  double when_zero = 0.0;
  double when_one = 0.0;
};

struct BoostedStumpsState {
  double base = 0.0;
  double learning_rate = 0.1;
  std::vector<Stump> stumps;
};

/// Fitted, immutable predictor of the squared LLM error.
class ErrorModel {
 public:
  ErrorModel(FeatureSchema schema, std::size_t training_size, std::variant<CellMeanState, BoostedStumpsState> state)
      : schema_(std::move(schema)), training_size_(training_size), state_(std::move(state)) {}

  ErrorModelKind kind() const;
  const FeatureSchema& schema() const { return schema_; }
  std::size_t training_size() const { return training_size_; }
  const std::variant<CellMeanState, BoostedStumpsState>& state() const { return state_; }

  /// Nonnegative predicted squared error. Throws SchemaError on a profile
  /// missing one of the schema axes.
  double predict(const DemographicProfile& profile) const;

 private:
  FeatureSchema schema_;
  std::size_t training_size_ = 0;
  std::variant<CellMeanState, BoostedStumpsState> state_;
};

/// cell_mean needs >= 1 pair, boosted_stumps >= 5. Throws DataError otherwise.
ErrorModel fit_error_model(std::span<const TrainingPair> pairs, const ErrorModelParams& params = {});

inline double predict_error(const ErrorModel& model, const DemographicProfile& profile) {
  return model.predict(profile);
}

}  // namespace pdi
