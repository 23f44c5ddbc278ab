#include <gtest/gtest.h>

#include <random>

#include "pdi/dataset.hpp"
#include "pdi/errors.hpp"
#include "test_helpers.hpp"

namespace pdi {
namespace {

using testing::make_record;

TEST(NormalizeRating, Endpoints) {
  const auto scale = RatingScale::Likert(1, 5);
  EXPECT_EQ(normalize_rating(1, scale), 0.0);
  EXPECT_EQ(normalize_rating(5, scale), 1.0);
  EXPECT_EQ(normalize_rating(3, scale), 0.5);
}

TEST(NormalizeRating, BinaryIsIdentity) {
  EXPECT_EQ(normalize_rating(0, RatingScale::Binary()), 0.0);
  EXPECT_EQ(normalize_rating(1, RatingScale::Binary()), 1.0);
  EXPECT_THROW(normalize_rating(2, RatingScale::Binary()), DataError);
}

TEST(NormalizeRating, OutOfRangeRejected) {
  EXPECT_THROW(normalize_rating(6, RatingScale::Likert(1, 5)), DataError);
  EXPECT_THROW(normalize_rating(0.5, RatingScale::Likert(1, 5)), DataError);
  EXPECT_THROW(normalize_rating(3, RatingScale::Likert(5, 5)), ConfigError);
}

TEST(NormalizeRating, RoundTripAndMonotone) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int lo = static_cast<int>(rng() % 10) - 5;
    const int hi = lo + 1 + static_cast<int>(rng() % 10);
    const auto scale = RatingScale::Likert(lo, hi);
    std::uniform_real_distribution<double> raw(lo, hi);
    const double a = raw(rng), b = raw(rng);
    EXPECT_NEAR(denormalize_rating(normalize_rating(a, scale), scale), a, 1e-12);
    if (a < b) EXPECT_LE(normalize_rating(a, scale), normalize_rating(b, scale));
  }
}

Dataset age_dataset() {
  Dataset d;
  d.rating_scale = RatingScale::Likert(1, 5);
  const char* ages[] = {"18-24", "25-29", "30-34", "35-39", "40-44", "45-49", "50-54", "60-64", "54-59", "18-24"};
  for (int i = 0; i < 10; ++i)
    d.records.push_back(make_record("t" + std::to_string(i), 0.5, 0.5, {{"age", ages[i]}, {"gender", "man"}}));
  return d;
}

std::vector<GroupRule> age_buckets() {
  return {{"18-34", {"18-24", "25-29", "30-34"}},
          {"35-49", {"35-39", "40-44", "45-49"}},
          {"50+", {"50-54", "54-59", "60-64", "65+"}}};
}

TEST(PartitionGroups, AgeBucketsGiveThreeGroups) {
  const auto d = age_dataset();
  const auto p = partition_groups(d, "age", age_buckets());
  ASSERT_EQ(p.K(), 3u);
  EXPECT_EQ(p.counts(), (std::vector<std::size_t>{4, 3, 3}));
  EXPECT_TRUE(p.warnings.empty());
}

TEST(PartitionGroups, EveryRecordInExactlyOneGroup) {
  const auto d = age_dataset();
  const auto p = partition_groups(d, "age", age_buckets());
  std::size_t total = 0;
  for (std::size_t g = 0; g < p.K(); ++g) total += p.members(g).size();
  EXPECT_EQ(total, d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    int hits = 0;
    for (std::size_t g = 0; g < p.K(); ++g) {
      const auto& cats = p.groups[g].categories;
      hits += std::count(cats.begin(), cats.end(), *d.records[i].demographics.find("age")) > 0;
    }
    EXPECT_EQ(hits, 1);
    EXPECT_EQ(*p.group_of_category(*d.records[i].demographics.find("age")), p.membership[i]);
  }
}

TEST(PartitionGroups, SingleBucket) {
  const auto d = age_dataset();
  std::vector<GroupRule> all{{"all", {"18-24", "25-29", "30-34", "35-39", "40-44", "45-49", "50-54", "54-59", "60-64"}}};
  const auto p = partition_groups(d, "age", all);
  EXPECT_EQ(p.K(), 1u);
  EXPECT_EQ(p.counts().front(), d.size());
}

TEST(PartitionGroups, DefaultIsOneGroupPerCategory) {
  const auto p = partition_groups(age_dataset(), "gender");
  ASSERT_EQ(p.K(), 1u);
  EXPECT_EQ(p.groups[0].name, "man");
}

TEST(PartitionGroups, UnmappedCategoriesListed) {
  const auto d = age_dataset();
  std::vector<GroupRule> rules{{"young", {"18-24", "25-29"}}};
  try {
    partition_groups(d, "age", rules);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'30-34'"), std::string::npos);
    EXPECT_NE(msg.find("'60-64'"), std::string::npos);
  }
}

TEST(PartitionGroups, EmptyGroupWarns) {
  const auto d = age_dataset();
  auto rules = age_buckets();
  rules.push_back({"unused", {"99+"}});
  const auto p = partition_groups(d, "age", rules);
  ASSERT_EQ(p.warnings.size(), 1u);
  EXPECT_NE(p.warnings[0].find("unused"), std::string::npos);
}

TEST(PartitionGroups, MissingAxisAndOverlap) {
  const auto d = age_dataset();
  EXPECT_THROW(partition_groups(d, "education"), SchemaError);
  std::vector<GroupRule> overlapping{{"a", {"18-24"}}, {"b", {"18-24"}}};
  EXPECT_THROW(partition_groups(d, "age", overlapping), ConfigError);
}

Dataset three_records() {
  Dataset d;
  d.records.push_back(make_record("a", 1.0, 0.8, {{"gender", "man"}}, 0.5, 1));
  d.records.push_back(make_record("b", std::nullopt, 0.2, {{"gender", "woman"}}, 0.5, 0));
  d.records.push_back(make_record("c", 0.0, 0.4, {{"gender", "woman"}}));
  return d;
}

TEST(ValidateDataset, WellFormedPasses) {
  const auto report = validate_dataset(three_records());
  EXPECT_TRUE(report.accepted()) << report.summary();
  for (const auto& c : report.checks) EXPECT_TRUE(c.passed) << c.name;
}

TEST(ValidateDataset, LabeledWithoutLabelFails) {
  auto d = three_records();
  d.records[1].xi = 1;
  const auto report = validate_dataset(d);
  EXPECT_FALSE(report.accepted());
  const auto* check = report.find("xi_pi_consistency");
  ASSERT_NE(check, nullptr);
  EXPECT_FALSE(check->passed);
  EXPECT_NE(check->messages.front().find("record 1"), std::string::npos);
}

TEST(ValidateDataset, RangeFailure) {
  auto d = three_records();
  d.records[2].llm_labels["zero_shot"] = 1.2;
  const auto report = validate_dataset(d);
  EXPECT_FALSE(report.accepted());
  EXPECT_FALSE(report.find("label_range")->passed);
}

TEST(ValidateDataset, MissingDemographicAndVariant) {
  auto d = three_records();
  d.records[2].demographics.attributes.clear();
  d.records[1].llm_labels = {{"few_shot", 0.3}};
  const auto report = validate_dataset(d);
  EXPECT_FALSE(report.find("demographic_completeness")->passed);
  EXPECT_FALSE(report.find("variant_completeness")->passed);
}

TEST(ValidateDataset, IsPure) {
  auto d = three_records();
  d.records[0].human_label = 3.0;
  EXPECT_EQ(validate_dataset(d).summary(), validate_dataset(d).summary());
}

TEST(ValidateDataset, EmptyDatasetRejected) { EXPECT_FALSE(validate_dataset(Dataset{}).accepted()); }

}  // namespace
}  // namespace pdi
