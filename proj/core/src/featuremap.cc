#include "ctrkit/featuremap.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "ctrkit/textio.h"

namespace ctrkit {
namespace {

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.emplace_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::string bucket_label(double lo, double hi) {
  return "[" + format_double(lo) + "," + format_double(hi) + ")";
}

bool parse_bucket_label(std::string_view s, double& lo, double& hi) {
  if (s.size() < 5 || s.front() != '[' || s.back() != ')') return false;
  const auto comma = s.find(',');
  if (comma == std::string_view::npos) return false;
  return parse_double(s.substr(1, comma - 1), lo) &&
         parse_double(s.substr(comma + 1, s.size() - comma - 2), hi);
}

/// Equal-frequency edges over sorted values; ties are never split across
/// buckets, so heavily tied data may produce fewer buckets.
std::vector<double> equal_frequency_edges(std::vector<double> values, std::size_t buckets) {
  std::sort(values.begin(), values.end());
  std::vector<double> edges;
  const std::size_t m = values.size();
  for (std::size_t k = 1; k < buckets; ++k) {
    const std::size_t pos = k * m / buckets;
    if (pos == 0 || pos >= m) continue;
    if (values[pos - 1] == values[pos]) continue;
    const double edge = values[pos - 1] + (values[pos] - values[pos - 1]) / 2;
    if (edges.empty() || edge > edges.back()) edges.push_back(edge);
  }
  return edges;
}

}  // namespace

const std::string* RawRecord::find(std::string_view field) const {
  for (const auto& [name, value] : values) {
    if (name == field) return &value;
  }
  return nullptr;
}

FeatureMap::FeatureMap(std::vector<FieldSpec> fields) : fields_(std::move(fields)) { index(); }

FeatureMap FeatureMap::synthetic(std::span<const std::size_t> field_sizes) {
  std::vector<FieldSpec> fields;
  for (std::size_t i = 0; i < field_sizes.size(); ++i) {
    FieldSpec f;
    f.name = "f" + std::to_string(i);
    for (std::size_t c = 0; c < field_sizes[i]; ++c) f.categories.push_back("c" + std::to_string(c));
    fields.push_back(std::move(f));
  }
  return FeatureMap(std::move(fields));
}

void FeatureMap::index() {
  offsets_.clear();
  lookup_.clear();
  total_ = 0;
  for (const auto& f : fields_) {
    if (f.categories.empty()) throw Error("field '" + f.name + "' has no categories");
    if (f.kind == FieldKind::kNumerical && f.categories.size() != f.bucket_edges.size() + 1) {
      throw Error("numerical field '" + f.name + "' bucket count does not match its edges");
    }
    for (std::size_t e = 1; e < f.bucket_edges.size(); ++e) {
      if (!(f.bucket_edges[e - 1] < f.bucket_edges[e])) {
        throw Error("numerical field '" + f.name + "' has non-increasing bucket edges");
      }
    }
    offsets_.push_back(total_);
    total_ += f.categories.size();
    auto& table = lookup_.emplace_back();
    for (std::size_t c = 0; c < f.categories.size(); ++c) {
      table.emplace(f.categories[c], static_cast<std::uint32_t>(c));
    }
  }
}

std::vector<std::size_t> FeatureMap::field_sizes() const {
  std::vector<std::size_t> sizes;
  for (const auto& f : fields_) sizes.push_back(f.size());
  return sizes;
}

std::size_t FeatureMap::field_index(std::string_view name) const {
  for (std::size_t i = 0; i < fields_.size(); ++i) {
    if (fields_[i].name == name) return i;
  }
  throw Error("unknown field '" + std::string(name) + "'");
}

std::uint32_t FeatureMap::category_index(std::size_t i, std::string_view raw) const {
  const auto& table = lookup_.at(i);
  if (auto it = table.find(std::string(raw)); it != table.end()) return it->second;
  if (auto it = table.find(std::string(kOther)); it != table.end()) return it->second;
  throw Error("field '" + fields_[i].name + "' has no category '" + std::string(raw) + "'");
}

std::uint32_t FeatureMap::bucket_index(std::size_t i, double value) const {
  const auto& edges = fields_.at(i).bucket_edges;
  return static_cast<std::uint32_t>(std::upper_bound(edges.begin(), edges.end(), value) -
                                    edges.begin());
}

void FeatureMap::save(std::ostream& out) const {
  out << "FMAP v1 n=" << fields_.size() << " N=" << total_ << '\n';
  for (std::size_t i = 0; i < fields_.size(); ++i) {
    const auto& f = fields_[i];
    for (std::size_t c = 0; c < f.categories.size(); ++c) {
      out << f.name << '\t' << i << '\t' << f.categories[c] << '\t' << c << '\n';
    }
  }
}

FeatureMap FeatureMap::load(std::istream& in, const std::set<std::string>& set_fields) {
  std::string line;
  if (!std::getline(in, line)) throw Error("feature map: empty file");
  std::size_t n = 0, total = 0;
  {
    std::istringstream header(line);
    std::string magic, version, n_tok, total_tok;
    header >> magic >> version >> n_tok >> total_tok;
    if (magic != "FMAP" || version != "v1" || n_tok.rfind("n=", 0) != 0 ||
        total_tok.rfind("N=", 0) != 0) {
      throw Error("feature map: bad header '" + line + "'");
    }
    if (!parse_size(std::string_view(n_tok).substr(2), n) ||
        !parse_size(std::string_view(total_tok).substr(2), total)) {
      throw Error("feature map: bad header '" + line + "'");
    }
  }
  std::vector<FieldSpec> fields(n);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto parts = split(line, '\t');
    std::size_t fi = 0, ci = 0;
    if (parts.size() != 4 || !parse_size(parts[1], fi) || !parse_size(parts[3], ci) || fi >= n) {
      throw Error("feature map: malformed line " + std::to_string(line_no));
    }
    auto& f = fields[fi];
    if (f.categories.empty()) f.name = parts[0];
    if (f.name != parts[0] || ci != f.categories.size()) {
      throw Error("feature map: out-of-order entry at line " + std::to_string(line_no));
    }
    f.categories.push_back(parts[2]);
  }
  for (auto& f : fields) {
    if (f.categories.empty()) throw Error("feature map: field without categories");
    bool numerical = true;
    std::vector<double> edges;
    for (std::size_t c = 0; c < f.categories.size() && numerical; ++c) {
      double lo = 0, hi = 0;
      numerical = parse_bucket_label(f.categories[c], lo, hi);
      if (numerical && c > 0) edges.push_back(lo);
    }
    if (numerical) {
      f.kind = FieldKind::kNumerical;
      f.bucket_edges = std::move(edges);
    } else if (set_fields.contains(f.name)) {
      f.kind = FieldKind::kSet;
    }
  }
  FeatureMap map(std::move(fields));
  if (map.total_categories() != total) throw Error("feature map: N does not match entries");
  return map;
}

FeatureMap build_map(std::span<const RawRecord> records, const MapOptions& options) {
  if (records.empty()) throw Error("build_map: empty record stream");
  if (options.bucket_count < 1) throw Error("build_map: bucket_count must be >= 1");

  // Declaration order is the order of first appearance.
  std::vector<std::string> names;
  for (const auto& r : records) {
    for (const auto& [name, value] : r.values) {
      if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
    }
  }

  std::vector<FieldSpec> fields;
  for (const auto& name : names) {
    FieldSpec f;
    f.name = name;
    f.min_count = options.min_count;
    if (options.numerical_fields.contains(name)) {
      f.kind = FieldKind::kNumerical;
      std::vector<double> values;
      for (const auto& r : records) {
        const auto* raw = r.find(name);
        if (!raw) continue;
        double v = 0;
        if (!parse_double(*raw, v)) {
          throw Error("build_map: field '" + name + "' has non-numeric value '" + *raw + "'");
        }
        values.push_back(v);
      }
      if (values.empty()) throw Error("build_map: field '" + name + "' has no values");
      f.bucket_edges = equal_frequency_edges(std::move(values), options.bucket_count);
      const double inf = std::numeric_limits<double>::infinity();
      for (std::size_t b = 0; b <= f.bucket_edges.size(); ++b) {
        const double lo = b == 0 ? -inf : f.bucket_edges[b - 1];
        const double hi = b == f.bucket_edges.size() ? inf : f.bucket_edges[b];
        f.categories.push_back(bucket_label(lo, hi));
      }
    } else {
      f.kind = options.set_fields.contains(name) ? FieldKind::kSet : FieldKind::kCategorical;
      std::map<std::string, std::size_t> counts;
      for (const auto& r : records) {
        const auto* raw = r.find(name);
        if (!raw) continue;
        if (f.kind == FieldKind::kSet) {
          for (auto& member : split(*raw, FeatureMap::kSetSeparator)) {
            if (!member.empty()) ++counts[member];
          }
        } else {
          ++counts[*raw];
        }
      }
      for (const auto& [category, count] : counts) {
        if (count >= options.min_count && category != FeatureMap::kOther) {
          f.categories.push_back(category);
        }
      }
      if (f.categories.empty()) {
        throw Error("build_map: field '" + name + "' has no category with at least " +
                    std::to_string(options.min_count) + " occurrences");
      }
      f.categories.emplace_back(FeatureMap::kOther);
    }
    fields.push_back(std::move(f));
  }
  return FeatureMap(std::move(fields));
}

EncodedInstance encode(const RawRecord& record, const FeatureMap& map) {
  EncodedInstance out;
  out.label = record.label;
  out.fields.resize(map.num_fields());
  for (std::size_t i = 0; i < map.num_fields(); ++i) {
    const auto& f = map.field(i);
    const auto* raw = record.find(f.name);
    if (!raw) throw Error("encode: record is missing field '" + f.name + "'");
    auto& slot = out.fields[i];
    switch (f.kind) {
      case FieldKind::kNumerical: {
        double v = 0;
        if (!parse_double(*raw, v)) {
          throw Error("encode: field '" + f.name + "' has non-numeric value '" + *raw + "'");
        }
        slot.push_back(map.bucket_index(i, v));
        break;
      }
      case FieldKind::kSet: {
        for (auto& member : split(*raw, FeatureMap::kSetSeparator)) {
          if (!member.empty()) slot.push_back(map.category_index(i, member));
        }
        std::sort(slot.begin(), slot.end());
        slot.erase(std::unique(slot.begin(), slot.end()), slot.end());
        if (slot.empty()) slot.push_back(map.category_index(i, FeatureMap::kOther));
        break;
      }
      case FieldKind::kCategorical:
        slot.push_back(map.category_index(i, *raw));
        break;
    }
  }
  return out;
}

void Dataset::add(const EncodedInstance& instance) {
  if (num_fields_ == 0 && labels_.empty()) num_fields_ = instance.fields.size();
  if (instance.fields.size() != num_fields_) {
    throw Error("dataset: instance has " + std::to_string(instance.fields.size()) +
                " fields, expected " + std::to_string(num_fields_));
  }
  if (instance.label != 0 && instance.label != 1) throw Error("dataset: label must be 0 or 1");
  for (std::size_t f = 0; f < num_fields_; ++f) {
    if (instance.fields[f].empty()) {
      throw Error("dataset: field " + std::to_string(f) + " has no value");
    }
  }
  labels_.push_back(static_cast<std::uint8_t>(instance.label));
  for (const auto& values : instance.fields) {
    values_.insert(values_.end(), values.begin(), values.end());
    starts_.push_back(static_cast<std::uint32_t>(values_.size()));
  }
}

void Dataset::add_single(int label, std::span<const std::uint32_t> categories) {
  if (num_fields_ == 0 && labels_.empty()) num_fields_ = categories.size();
  if (categories.size() != num_fields_) throw Error("dataset: wrong field count");
  if (label != 0 && label != 1) throw Error("dataset: label must be 0 or 1");
  labels_.push_back(static_cast<std::uint8_t>(label));
  for (auto c : categories) {
    values_.push_back(c);
    starts_.push_back(static_cast<std::uint32_t>(values_.size()));
  }
}

std::span<const std::uint32_t> Dataset::values(std::size_t i, std::size_t field) const {
  const std::size_t slot = i * num_fields_ + field;
  return {values_.data() + starts_[slot], starts_[slot + 1] - starts_[slot]};
}

EncodedInstance Dataset::instance(std::size_t i) const {
  EncodedInstance out;
  out.label = labels_[i];
  for (std::size_t f = 0; f < num_fields_; ++f) {
    const auto v = values(i, f);
    out.fields.emplace_back(v.begin(), v.end());
  }
  return out;
}

double Dataset::positive_ratio() const {
  if (labels_.empty()) return 0.0;
  std::size_t positives = 0;
  for (auto l : labels_) positives += l;
  return static_cast<double>(positives) / static_cast<double>(labels_.size());
}

void Dataset::validate(std::span<const std::size_t> field_sizes) const {
  if (field_sizes.size() != num_fields_) {
    throw Error("dataset has " + std::to_string(num_fields_) + " fields but the model expects " +
                std::to_string(field_sizes.size()));
  }
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t f = 0; f < num_fields_; ++f) {
      for (auto c : values(i, f)) {
        if (c >= field_sizes[f]) {
          throw Error("instance " + std::to_string(i) + ": category " + std::to_string(c) +
                      " out of range for field " + std::to_string(f) + " of size " +
                      std::to_string(field_sizes[f]));
        }
      }
    }
  }
}

void Dataset::save(std::ostream& out) const {
  for (std::size_t i = 0; i < size(); ++i) {
    out << static_cast<int>(labels_[i]);
    for (std::size_t f = 0; f < num_fields_; ++f) {
      out << ' ' << f << ':';
      const auto v = values(i, f);
      for (std::size_t k = 0; k < v.size(); ++k) out << (k ? "," : "") << v[k];
    }
    out << '\n';
  }
}

Dataset Dataset::load(std::istream& in, std::size_t num_fields) {
  Dataset data(num_fields);
  std::string line;
  std::size_t line_no = 0;
  EncodedInstance inst;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tokens = split(line, ' ');
    const auto fail = [&](const std::string& why) {
      return Error("encoded data line " + std::to_string(line_no) + ": " + why);
    };
    if (tokens[0] != "0" && tokens[0] != "1") throw fail("label must be 0 or 1");
    inst.label = tokens[0] == "1";
    inst.fields.assign(tokens.size() - 1, {});
    for (std::size_t t = 1; t < tokens.size(); ++t) {
      const auto colon = tokens[t].find(':');
      std::size_t field = 0;
      if (colon == std::string::npos ||
          !parse_size(std::string_view(tokens[t]).substr(0, colon), field)) {
        throw fail("malformed token '" + tokens[t] + "'");
      }
      if (field != t - 1) throw fail("fields must appear in ascending order without gaps");
      for (const auto& c : split(std::string_view(tokens[t]).substr(colon + 1), ',')) {
        std::size_t cat = 0;
        if (!parse_size(c, cat)) throw fail("malformed category in '" + tokens[t] + "'");
        inst.fields[field].push_back(static_cast<std::uint32_t>(cat));
      }
    }
    data.add(inst);
  }
  return data;
}

double negative_keep_probability(double alpha, double target) {
  if (!(target > 0 && target < 1)) throw Error("downsample: target ratio must be in (0, 1)");
  if (!(alpha > 0 && alpha < 1)) {
    throw Error("downsample: positive ratio " + format_double(alpha) +
                " cannot be moved to the target");
  }
  const double p = alpha * (1 - target) / (target * (1 - alpha));
  return std::clamp(p, 0.0, 1.0);
}

Dataset downsample_negatives(const Dataset& data, double target, std::uint64_t seed) {
  const double keep = negative_keep_probability(data.positive_ratio(), target);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Dataset out(data.num_fields());
  for (std::size_t i = 0; i < data.size(); ++i) {
    // One draw per negative keeps the stream aligned for a given seed.
    if (data.label(i) == 1 || unit(rng) < keep) out.add(data.instance(i));
  }
  return out;
}

std::vector<RawRecord> read_raw_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("raw data: empty input");
  const auto header = split(line, ',');
  if (header.empty() || header[0] != "label") {
    throw Error("raw data: header must start with 'label'");
  }
  std::vector<RawRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) {
      throw Error("raw data line " + std::to_string(line_no) + ": expected " +
                  std::to_string(header.size()) + " columns");
    }
    RawRecord r;
    if (cells[0] != "0" && cells[0] != "1") {
      throw Error("raw data line " + std::to_string(line_no) + ": label must be 0 or 1");
    }
    r.label = cells[0] == "1";
    for (std::size_t c = 1; c < cells.size(); ++c) r.values.emplace_back(header[c], cells[c]);
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace ctrkit
