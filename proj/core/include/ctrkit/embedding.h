#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ctrkit/featuremap.h"
#include "ctrkit/graph.h"

namespace ctrkit {

/// A view of selected rows of a Dataset.
class EncodedBatch {
 public:
  EncodedBatch(const Dataset& data, std::vector<std::size_t> rows)
      : data_(&data), rows_(std::move(rows)) {}
  /// Whole dataset as one batch.
  explicit EncodedBatch(const Dataset& data);

  std::size_t size() const { return rows_.size(); }
  std::size_t num_fields() const { return data_->num_fields(); }
  int label(std::size_t b) const { return data_->label(rows_[b]); }
  std::span<const std::uint32_t> values(std::size_t b, std::size_t field) const {
    return data_->values(rows_[b], field);
  }
  std::vector<double> labels() const;

 private:
  const Dataset* data_;
  std::vector<std::size_t> rows_;
};

/// k_i = min(ceil(c ln N_i), K), never below 1.
std::size_t adaptive_embedding_size(std::size_t field_size, double c, std::size_t max_size);

/// Selection of field `field`'s categories (shifted by `row_offset`); set
/// fields average their members.
RowSelection field_selection(const EncodedBatch& batch, std::size_t field,
                             std::size_t row_offset = 0);

/// Per-field `batch x k_i` embedding nodes, one table per field.
std::vector<NodeId> embed_lookup(Graph& g, const EncodedBatch& batch,
                                 std::span<Parameter* const> tables);

}  // namespace ctrkit
