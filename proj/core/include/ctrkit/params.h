#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ctrkit/tensor.h"

namespace ctrkit {

/// What a parameter is for. Embedding and linear tables are row-sparse: only
/// rows looked up in a forward pass receive gradient.
enum class ParamRole { kDense, kEmbedding, kLinear, kAttention };

struct Parameter {
  Parameter(std::string name, ParamRole role, Tensor init);

  std::string name;
  ParamRole role;
  Tensor value;
  Tensor grad;

  bool row_sparse() const { return role == ParamRole::kEmbedding || role == ParamRole::kLinear; }

  /// Records one occurrence of `row` in the current batch.
  void touch(std::uint32_t row);
  const std::vector<std::uint32_t>& touched_rows() const { return touched_rows_; }
  /// Occurrences of each touched row, aligned with touched_rows().
  const std::vector<std::uint32_t>& touch_counts() const { return touch_counts_; }

  /// Clears the gradient. Row-sparse tables only clear the touched rows.
  void zero_grad();

 private:
  std::vector<std::uint32_t> touched_rows_;
  std::vector<std::uint32_t> touch_counts_;
  std::vector<std::int32_t> touch_slot_;
};

/// Named parameter collection with insertion-ordered iteration. Parameter
/// addresses are stable for the lifetime of the store.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore& other);
  ParamStore& operator=(const ParamStore& other);
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  Parameter& add(std::string name, ParamRole role, Tensor init);
  bool contains(std::string_view name) const;
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t coordinate_count() const;
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.cbegin(); }
  auto end() const { return params_.cend(); }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace ctrkit
