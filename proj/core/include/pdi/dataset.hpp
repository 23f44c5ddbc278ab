#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pdi {

/// Demographic profile of an annotator: axis name -> category label.
struct DemographicProfile {
  std::map<std::string, std::string> attributes;

  const std::string* find(const std::string& axis) const {
    auto it = attributes.find(axis);
    return it == attributes.end() ? nullptr : &it->second;
  }
};

/// One (text, annotator) observation. Labels live on the unit scale.
struct AnnotationRecord {
  std::string instance_id;
  std::optional<std::string> text;
  std::optional<double> human_label;
  std::map<std::string, double> llm_labels;
  DemographicProfile demographics;
  // Sampling state. pi is recorded for every record offered to a collection
  // process; xi == 1 means the human label was collected.
  std::optional<double> pi;
  std::optional<int> xi;

  bool labeled() const { return xi.value_or(0) == 1; }
};

/// Original rating scale of the source data. Binary data is stored as-is.
struct RatingScale {
  bool binary = true;
  int min = 0;
  int max = 1;

  static RatingScale Binary() { return {}; }
  static RatingScale Likert(int lo, int hi) { return {false, lo, hi}; }
};

struct Dataset {
  std::vector<AnnotationRecord> records;
  RatingScale rating_scale;
  std::map<std::string, std::string> metadata;

  std::size_t size() const { return records.size(); }
};

/// Maps a raw rating to [0, 1] by (raw - min) / (max - min). Identity on
/// binary scales. Throws DataError when raw lies outside the scale.
double normalize_rating(double raw, const RatingScale& scale);
double denormalize_rating(double unit, const RatingScale& scale);

/// Grouping rule for one group: the set of category labels it claims.
struct GroupRule {
  std::string name;
  std::vector<std::string> categories;
};

/// Assignment of every record of a dataset to one of K disjoint groups
/// along a single demographic axis.
struct GroupPartition {
  std::string axis;
  std::vector<GroupRule> groups;
  std::vector<std::size_t> membership;  // record index -> group index
  std::vector<std::string> warnings;

  std::size_t K() const { return groups.size(); }
  std::vector<std::size_t> counts() const;
  std::vector<std::size_t> members(std::size_t group) const;
  std::optional<std::size_t> group_of_category(const std::string& category) const;
};

/// Builds a partition. Empty `rules` means one group per observed category,
/// in sorted order. Throws SchemaError if a record lacks the axis and
/// DataError listing every category that no rule claims.
GroupPartition partition_groups(const Dataset& dataset, const std::string& axis,
                                const std::vector<GroupRule>& rules = {});

struct ValidationCheck {
  std::string name;
  bool passed = true;
  bool hard = true;
  std::vector<std::string> messages;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;

  bool accepted() const;
  const ValidationCheck* find(const std::string& name) const;
  std::string summary() const;
};

/// Checks label ranges, xi/pi consistency, LLM variant completeness and
/// demographic completeness. Never throws.
ValidationReport validate_dataset(const Dataset& dataset);

/// LLM variant keys present on every record.
std::vector<std::string> common_variants(const Dataset& dataset);

}  // namespace pdi
