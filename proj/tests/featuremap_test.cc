#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "ctrkit/featuremap.h"

namespace ctrkit {
namespace {

RawRecord record(int label, std::vector<std::pair<std::string, std::string>> values) {
  return RawRecord{label, std::move(values)};
}

std::vector<RawRecord> table_one() {
  return {
      record(1, {{"WEEKDAY", "Tuesday"}, {"GENDER", "Male"}, {"CITY", "London"}}),
      record(0, {{"WEEKDAY", "Monday"}, {"GENDER", "Female"}, {"CITY", "New York"}}),
      record(1, {{"WEEKDAY", "Tuesday"}, {"GENDER", "Female"}, {"CITY", "Hong Kong"}}),
      record(0, {{"WEEKDAY", "Tuesday"}, {"GENDER", "Male"}, {"CITY", "Tokyo"}}),
  };
}

TEST(BuildMap, RareCategoriesFoldIntoOther) {
  std::vector<RawRecord> records;
  for (int i = 0; i < 50; ++i) records.push_back(record(i % 2, {{"GENDER", "Male"}}));
  for (int i = 0; i < 50; ++i) records.push_back(record(i % 2, {{"GENDER", "Female"}}));
  for (int i = 0; i < 3; ++i) records.push_back(record(0, {{"GENDER", "X"}}));
  MapOptions opts;
  opts.min_count = 20;
  const FeatureMap map = build_map(records, opts);
  ASSERT_EQ(map.num_fields(), 1u);
  EXPECT_EQ(map.field(0).categories, (std::vector<std::string>{"Female", "Male", "other"}));
  EXPECT_EQ(map.category_index(0, "X"), 2u);
}

TEST(BuildMap, ZeroThresholdKeepsEveryValue) {
  const FeatureMap map = build_map(table_one(), MapOptions{});
  EXPECT_EQ(map.field(2).categories,
            (std::vector<std::string>{"Hong Kong", "London", "New York", "Tokyo", "other"}));
  EXPECT_EQ(map.total_categories(), 3u + 3u + 5u);
  std::size_t sum = 0;
  for (auto s : map.field_sizes()) sum += s;
  EXPECT_EQ(sum, map.total_categories());
}

TEST(BuildMap, EqualFrequencyBuckets) {
  std::vector<RawRecord> records;
  for (const char* v : {"1", "2", "3", "4"}) records.push_back(record(0, {{"age", v}}));
  MapOptions opts;
  opts.bucket_count = 2;
  opts.numerical_fields = {"age"};
  const FeatureMap map = build_map(records, opts);
  ASSERT_EQ(map.field(0).bucket_edges, (std::vector<double>{2.5}));
  EXPECT_EQ(map.field(0).size(), 2u);
  for (const char* v : {"1", "2"}) EXPECT_EQ(encode(record(0, {{"age", v}}), map).fields[0][0], 0u);
  for (const char* v : {"3", "4"}) EXPECT_EQ(encode(record(0, {{"age", v}}), map).fields[0][0], 1u);
}

TEST(BuildMap, BucketPopulationsDifferByAtMostOne) {
  std::mt19937_64 rng(4);
  std::vector<RawRecord> records;
  std::vector<double> values;
  for (int i = 0; i < 997; ++i) {
    const double v = std::uniform_real_distribution<double>(0, 100)(rng);
    values.push_back(v);
    std::ostringstream s;
    s.precision(17);
    s << v;
    records.push_back(record(0, {{"x", s.str()}}));
  }
  MapOptions opts;
  opts.bucket_count = 7;
  opts.numerical_fields = {"x"};
  const FeatureMap map = build_map(records, opts);
  std::vector<int> counts(map.field(0).size());
  for (const auto& r : records) ++counts[encode(r, map).fields[0][0]];
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  EXPECT_EQ(counts.size(), 7u);
  EXPECT_LE(*hi - *lo, 1);
}

TEST(BuildMap, Errors) {
  EXPECT_THROW(build_map(std::vector<RawRecord>{}, MapOptions{}), Error);
  MapOptions opts;
  opts.min_count = 100;
  EXPECT_THROW(build_map(table_one(), opts), Error);
  MapOptions numeric;
  numeric.numerical_fields = {"CITY"};
  EXPECT_THROW(build_map(table_one(), numeric), Error);
}

TEST(Encode, WeekdayGenderCityLexicographic) {
  const FeatureMap map = build_map(table_one(), MapOptions{});
  const EncodedInstance e = encode(table_one()[0], map);
  ASSERT_EQ(e.fields.size(), 3u);
  EXPECT_EQ(e.fields[0][0], 1u);  // Monday, Tuesday, other
  EXPECT_EQ(e.fields[1][0], 1u);  // Female, Male, other
  EXPECT_EQ(e.fields[2][0], 1u);  // Hong Kong, London, ...
  EXPECT_EQ(e.label, 1);
  // Re-encoding is stable.
  EXPECT_EQ(encode(table_one()[0], map).fields, e.fields);
}

TEST(Encode, UnseenAndMissing) {
  const FeatureMap map = build_map(table_one(), MapOptions{});
  auto r = table_one()[0];
  r.values[2].second = "Atlantis";
  EXPECT_EQ(encode(r, map).fields[2][0], map.field(2).size() - 1);
  r.values.pop_back();
  try {
    encode(r, map);
    FAIL() << "missing field accepted";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("CITY"), std::string::npos);
  }
}

TEST(Encode, BucketBoundaries) {
  FieldSpec age;
  age.name = "age";
  age.kind = FieldKind::kNumerical;
  age.bucket_edges = {18, 28};
  age.categories = {"[-inf,18)", "[18,28)", "[28,inf)"};
  const FeatureMap map({age});
  EXPECT_EQ(map.bucket_index(0, 18), 1u);
  EXPECT_EQ(map.bucket_index(0, 17.9), 0u);
  EXPECT_EQ(map.bucket_index(0, 28), 2u);
  EXPECT_EQ(map.bucket_index(0, 1e9), 2u);
}

TEST(Encode, SetFields) {
  std::vector<RawRecord> records{record(1, {{"tags", "b|a"}}), record(0, {{"tags", "c"}})};
  MapOptions opts;
  opts.set_fields = {"tags"};
  const FeatureMap map = build_map(records, opts);
  EXPECT_EQ(map.field(0).kind, FieldKind::kSet);
  const auto e = encode(record(1, {{"tags", "c|a|zzz"}}), map);
  EXPECT_EQ(e.fields[0], (std::vector<std::uint32_t>{0, 2, 3}));
}

TEST(MapFile, RoundTrip) {
  std::vector<RawRecord> records = table_one();
  for (auto& r : records) r.values.emplace_back("age", std::to_string(20 + r.label * 10));
  records.push_back(record(0, {{"WEEKDAY", "Friday"}, {"GENDER", "Male"}, {"CITY", "Paris"}, {"age", "55.5"}}));
  MapOptions opts;
  opts.numerical_fields = {"age"};
  opts.bucket_count = 3;
  const FeatureMap map = build_map(records, opts);
  std::stringstream ss;
  map.save(ss);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), "FMAP v1 n=4 N=" + std::to_string(map.total_categories()));
  const FeatureMap back = FeatureMap::load(ss);
  ASSERT_EQ(back.num_fields(), map.num_fields());
  for (std::size_t i = 0; i < map.num_fields(); ++i) {
    EXPECT_EQ(back.field(i).name, map.field(i).name);
    EXPECT_EQ(back.field(i).categories, map.field(i).categories);
    EXPECT_EQ(back.field(i).kind, map.field(i).kind);
    EXPECT_EQ(back.field(i).bucket_edges, map.field(i).bucket_edges);
  }
  for (const auto& r : records) EXPECT_EQ(encode(r, back).fields, encode(r, map).fields);
}

TEST(DatasetFile, RoundTrip) {
  Dataset data(3);
  data.add(EncodedInstance{1, {{2}, {0, 3}, {1}}});
  data.add(EncodedInstance{0, {{0}, {1}, {0}}});
  std::stringstream ss;
  data.save(ss);
  EXPECT_EQ(ss.str(), "1 0:2 1:0,3 2:1\n0 0:0 1:1 2:0\n");
  const Dataset back = Dataset::load(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.instance(0).fields, data.instance(0).fields);
  EXPECT_EQ(back.label(0), 1);
  EXPECT_THROW(back.validate(std::vector<std::size_t>{3, 3, 2}), Error);
  std::stringstream bad("2 0:1\n");
  EXPECT_THROW(Dataset::load(bad), Error);
}

TEST(Downsample, KeepProbability) {
  EXPECT_NEAR(negative_keep_probability(0.1, 0.5), 1.0 / 9, 1e-15);
  EXPECT_NEAR(negative_keep_probability(0.3, 0.3), 1.0, 1e-15);
  EXPECT_NEAR(negative_keep_probability(0.03, 0.5), 0.0309, 1e-4);
  EXPECT_THROW(negative_keep_probability(0.0, 0.5), Error);
  EXPECT_THROW(negative_keep_probability(1.0, 0.5), Error);
}

TEST(Downsample, ReachesTargetAndIsReproducible) {
  Dataset data(1);
  std::mt19937_64 rng(8);
  for (int i = 0; i < 100000; ++i) {
    data.add_single(std::bernoulli_distribution(0.1)(rng) ? 1 : 0, std::vector<std::uint32_t>{0});
  }
  const Dataset a = downsample_negatives(data, 0.5, 3);
  const Dataset b = downsample_negatives(data, 0.5, 3);
  EXPECT_NEAR(a.positive_ratio(), 0.5, 0.02);
  std::stringstream sa, sb;
  a.save(sa);
  b.save(sb);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(RawCsv, ReadsHeaderAndRows) {
  std::stringstream in("label,WEEKDAY,GENDER\n1,Tuesday,Male\n0,Monday,Female\n");
  const auto records = read_raw_csv(in);
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[1].label, 0);
  EXPECT_EQ(*records[1].find("GENDER"), "Female");
}

}  // namespace
}  // namespace ctrkit
