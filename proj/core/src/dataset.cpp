#include "pdi/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "pdi/errors.hpp"

namespace pdi {

double normalize_rating(double raw, const RatingScale& scale) {
  if (!std::isfinite(raw)) throw DataError("rating is not a finite number");
  if (scale.binary) {
    if (raw < 0.0 || raw > 1.0) {
      std::ostringstream os;
      os << "rating " << raw << " outside binary scale [0, 1]";
      throw DataError(os.str());
    }
    return raw;
  }
  if (scale.min >= scale.max) throw ConfigError("rating scale requires min < max");
  if (raw < scale.min || raw > scale.max) {
    std::ostringstream os;
    os << "rating " << raw << " outside scale [" << scale.min << ", " << scale.max << "]";
    throw DataError(os.str());
  }
  return (raw - scale.min) / static_cast<double>(scale.max - scale.min);
}

double denormalize_rating(double unit, const RatingScale& scale) {
  if (scale.binary) return unit;
  return scale.min + unit * static_cast<double>(scale.max - scale.min);
}

std::vector<std::size_t> GroupPartition::counts() const {
  std::vector<std::size_t> out(groups.size(), 0);
  for (auto g : membership) ++out[g];
  return out;
}

std::vector<std::size_t> GroupPartition::members(std::size_t group) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < membership.size(); ++i)
    if (membership[i] == group) out.push_back(i);
  return out;
}

std::optional<std::size_t> GroupPartition::group_of_category(const std::string& category) const {
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& cats = groups[g].categories;
    if (std::find(cats.begin(), cats.end(), category) != cats.end()) return g;
  }
  return std::nullopt;
}

GroupPartition partition_groups(const Dataset& dataset, const std::string& axis,
                                const std::vector<GroupRule>& rules) {
  GroupPartition partition;
  partition.axis = axis;

  std::set<std::string> observed;
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto* cat = dataset.records[i].demographics.find(axis);
    if (cat == nullptr) {
      throw SchemaError("record " + std::to_string(i) + " has no demographic axis '" + axis + "'");
    }
    observed.insert(*cat);
  }

  if (rules.empty()) {
    for (const auto& c : observed) partition.groups.push_back({c, {c}});
  } else {
    std::set<std::string> names;
    std::map<std::string, std::string> claimed;
    for (const auto& rule : rules) {
      if (rule.name.empty()) throw ConfigError("group name must be nonempty");
      if (!names.insert(rule.name).second) throw ConfigError("duplicate group name '" + rule.name + "'");
      for (const auto& c : rule.categories) {
        auto [it, inserted] = claimed.emplace(c, rule.name);
        if (!inserted) {
          throw ConfigError("category '" + c + "' claimed by groups '" + it->second + "' and '" +
                            rule.name + "'");
        }
      }
    }
    partition.groups = rules;
  }

  std::vector<std::string> unmapped;
  for (const auto& c : observed)
    if (!partition.group_of_category(c)) unmapped.push_back(c);
  if (!unmapped.empty()) {
    std::string msg = "unmapped categories on axis '" + axis + "':";
    for (const auto& c : unmapped) msg += " '" + c + "'";
    throw DataError(msg);
  }

  std::map<std::string, std::size_t> lookup;
  for (std::size_t g = 0; g < partition.groups.size(); ++g)
    for (const auto& c : partition.groups[g].categories) lookup[c] = g;

  partition.membership.reserve(dataset.records.size());
  for (const auto& r : dataset.records)
    partition.membership.push_back(lookup.at(*r.demographics.find(axis)));

  auto counts = partition.counts();
  for (std::size_t g = 0; g < counts.size(); ++g)
    if (counts[g] == 0) partition.warnings.push_back("group '" + partition.groups[g].name + "' is empty");
  return partition;
}

bool ValidationReport::accepted() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const ValidationCheck& c) { return c.passed || !c.hard; });
}

const ValidationCheck* ValidationReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (const auto& c : checks) {
    os << (c.passed ? "ok   " : (c.hard ? "FAIL " : "warn ")) << c.name << '\n';
    for (const auto& m : c.messages) os << "     " << m << '\n';
  }
  return os.str();
}

std::vector<std::string> common_variants(const Dataset& dataset) {
  if (dataset.records.empty()) return {};
  std::vector<std::string> out;
  for (const auto& [key, _] : dataset.records.front().llm_labels) {
    bool everywhere = std::all_of(dataset.records.begin(), dataset.records.end(),
                                  [&](const AnnotationRecord& r) { return r.llm_labels.count(key) > 0; });
    if (everywhere) out.push_back(key);
  }
  return out;
}

namespace {

bool in_unit(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

void fail(ValidationCheck& check, std::string message) {
  check.passed = false;
  // Cap message volume on large corpora.
  if (check.messages.size() < 20) check.messages.push_back(std::move(message));
}

}  // namespace

ValidationReport validate_dataset(const Dataset& dataset) {
  ValidationCheck nonempty{"nonempty", true, true, {}};
  ValidationCheck ranges{"label_range", true, true, {}};
  ValidationCheck sampling{"xi_pi_consistency", true, true, {}};
  ValidationCheck variants{"variant_completeness", true, true, {}};
  ValidationCheck demographics{"demographic_completeness", true, true, {}};

  if (dataset.records.empty()) fail(nonempty, "dataset has no records");

  std::set<std::string> axes;
  if (!dataset.records.empty())
    for (const auto& [axis, _] : dataset.records.front().demographics.attributes) axes.insert(axis);

  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& r = dataset.records[i];
    const std::string where = "record " + std::to_string(i);
    if (r.human_label && !in_unit(*r.human_label)) fail(ranges, where + ": human label outside [0, 1]");
    for (const auto& [variant, v] : r.llm_labels)
      if (!in_unit(v)) fail(ranges, where + ": llm label '" + variant + "' outside [0, 1]");

    if (r.pi && (!std::isfinite(*r.pi) || *r.pi < 0.0 || *r.pi > 1.0))
      fail(sampling, where + ": pi outside [0, 1]");
    if (r.xi && *r.xi != 0 && *r.xi != 1) fail(sampling, where + ": xi not in {0, 1}");
    if (r.xi && !r.pi) fail(sampling, where + ": xi recorded without pi");
    if (r.labeled()) {
      if (!r.human_label) fail(sampling, where + ": xi = 1 but human label missing");
      if (r.pi && *r.pi <= 0.0) fail(sampling, where + ": xi = 1 with pi = 0");
    }

    if (r.llm_labels.empty()) fail(variants, where + ": no llm labels");

    std::set<std::string> mine;
    for (const auto& [axis, cat] : r.demographics.attributes) {
      if (axis.empty()) fail(demographics, where + ": empty axis name");
      if (cat.empty()) fail(demographics, where + ": empty category on axis '" + axis + "'");
      mine.insert(axis);
    }
    if (mine != axes) fail(demographics, where + ": demographic axes differ from record 0");
  }
  if (!dataset.records.empty() && common_variants(dataset).empty())
    fail(variants, "no llm variant is shared by every record");

  ValidationReport report;
  report.checks = {nonempty, ranges, sampling, variants, demographics};
  return report;
}

}  // namespace pdi
