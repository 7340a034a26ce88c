#include "ctrkit/embedding.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ctrkit {

EncodedBatch::EncodedBatch(const Dataset& data) : data_(&data), rows_(data.size()) {
  std::iota(rows_.begin(), rows_.end(), std::size_t{0});
}

std::vector<double> EncodedBatch::labels() const {
  std::vector<double> y(rows_.size());
  for (std::size_t b = 0; b < rows_.size(); ++b) y[b] = data_->label(rows_[b]);
  return y;
}

std::size_t adaptive_embedding_size(std::size_t field_size, double c, std::size_t max_size) {
  const double raw = std::ceil(c * std::log(static_cast<double>(field_size)));
  const auto k = static_cast<std::size_t>(std::max(raw, 1.0));
  return std::min(k, max_size);
}

RowSelection field_selection(const EncodedBatch& batch, std::size_t field,
                             std::size_t row_offset) {
  RowSelection sel;
  sel.rows.reserve(batch.size());
  sel.weights.reserve(batch.size());
  sel.offsets.reserve(batch.size() + 1);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto values = batch.values(b, field);
    const double w = 1.0 / static_cast<double>(values.size());
    for (auto v : values) sel.add(static_cast<std::uint32_t>(v + row_offset), w);
    sel.end_instance();
  }
  return sel;
}

std::vector<NodeId> embed_lookup(Graph& g, const EncodedBatch& batch,
                                 std::span<Parameter* const> tables) {
  if (tables.size() != batch.num_fields()) {
    throw Error("embed_lookup: " + std::to_string(tables.size()) + " tables for " +
                std::to_string(batch.num_fields()) + " fields");
  }
  std::vector<NodeId> out;
  out.reserve(tables.size());
  for (std::size_t f = 0; f < tables.size(); ++f) {
    out.push_back(g.lookup(*tables[f], field_selection(batch, f)));
  }
  return out;
}

}  // namespace ctrkit
