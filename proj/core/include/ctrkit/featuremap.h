#pragma once

#include <cstdint>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ctrkit/tensor.h"

namespace ctrkit {

enum class FieldKind { kCategorical, kNumerical, kSet };

/// One field of the feature map. For categorical and set fields the last
/// category is always the reserved "other" bucket. Numerical fields hold
/// `bucket_edges.size() + 1` left-closed buckets.
struct FieldSpec {
  std::string name;
  FieldKind kind = FieldKind::kCategorical;
  std::size_t min_count = 0;
  std::vector<double> bucket_edges;
  std::vector<std::string> categories;

  std::size_t size() const { return categories.size(); }
};

/// One raw record: a label plus `(field name, raw value)` pairs. Set-field
/// values hold several members separated by '|'.
struct RawRecord {
  int label = 0;
  std::vector<std::pair<std::string, std::string>> values;

  const std::string* find(std::string_view field) const;
};

struct MapOptions {
  std::size_t min_count = 0;
  std::size_t bucket_count = 1;
  std::set<std::string> numerical_fields;
  std::set<std::string> set_fields;
};

/// Encoded instance: label plus per-field category indices.
struct EncodedInstance {
  int label = 0;
  std::vector<std::vector<std::uint32_t>> fields;
};

class FeatureMap {
 public:
  static constexpr std::string_view kOther = "other";
  static constexpr char kSetSeparator = '|';

  FeatureMap() = default;
  explicit FeatureMap(std::vector<FieldSpec> fields);

  /// Synthetic map with fields `f<i>` holding categories `c<j>` (no "other").
  static FeatureMap synthetic(std::span<const std::size_t> field_sizes);

  std::size_t num_fields() const { return fields_.size(); }
  std::size_t total_categories() const { return total_; }
  const FieldSpec& field(std::size_t i) const { return fields_.at(i); }
  const std::vector<FieldSpec>& fields() const { return fields_; }
  std::vector<std::size_t> field_sizes() const;
  /// Global index of the first category of field `i`.
  std::size_t offset(std::size_t i) const { return offsets_.at(i); }
  std::size_t field_index(std::string_view name) const;

  /// Index of `raw` inside field `i`; unseen values map to "other".
  std::uint32_t category_index(std::size_t i, std::string_view raw) const;
  std::uint32_t bucket_index(std::size_t i, double value) const;

  void save(std::ostream& out) const;
  /// Reads a map file. Field kinds are not stored in the file: fields whose
  /// categories are all bucket intervals become numerical, and names listed
  /// in `set_fields` become set fields.
  static FeatureMap load(std::istream& in, const std::set<std::string>& set_fields = {});

 private:
  void index();

  std::vector<FieldSpec> fields_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
  std::vector<std::unordered_map<std::string, std::uint32_t>> lookup_;
};

FeatureMap build_map(std::span<const RawRecord> records, const MapOptions& options);
EncodedInstance encode(const RawRecord& record, const FeatureMap& map);

/// Column-compressed collection of encoded instances sharing one field
/// layout.
class Dataset {
 public:
  explicit Dataset(std::size_t num_fields = 0) : num_fields_(num_fields) {}

  std::size_t num_fields() const { return num_fields_; }
  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }

  void add(const EncodedInstance& instance);
  /// Appends an instance whose fields each hold exactly one category.
  void add_single(int label, std::span<const std::uint32_t> categories);

  int label(std::size_t i) const { return labels_[i]; }
  std::span<const std::uint32_t> values(std::size_t i, std::size_t field) const;
  EncodedInstance instance(std::size_t i) const;
  double positive_ratio() const;

  /// Checks every index against `field_sizes`; throws naming the offender.
  void validate(std::span<const std::size_t> field_sizes) const;

  void save(std::ostream& out) const;
  /// `num_fields == 0` infers the field count from the first line.
  static Dataset load(std::istream& in, std::size_t num_fields = 0);

 private:
  std::size_t num_fields_;
  std::vector<std::uint8_t> labels_;
  std::vector<std::uint32_t> starts_{0};
  std::vector<std::uint32_t> values_;
};

/// Keeps all positives and each negative with probability
/// alpha(1-r)/(r(1-alpha)) clamped to [0, 1].
double negative_keep_probability(double positive_ratio, double target_ratio);
Dataset downsample_negatives(const Dataset& data, double target_ratio, std::uint64_t seed);

/// Reads raw CSV: header `label,<field>,...`, then one record per line.
std::vector<RawRecord> read_raw_csv(std::istream& in);

}  // namespace ctrkit
