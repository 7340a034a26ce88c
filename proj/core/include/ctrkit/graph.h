#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "ctrkit/ops.h"
#include "ctrkit/params.h"
#include "ctrkit/tensor.h"

namespace ctrkit {

using NodeId = std::size_t;

/// Per-instance weighted list of table rows. A lookup produces, for each
/// instance, the weighted sum of the selected rows.
struct RowSelection {
  std::vector<std::size_t> offsets{0};
  std::vector<std::uint32_t> rows;
  std::vector<double> weights;

  std::size_t batch_size() const { return offsets.size() - 1; }
  void add(std::uint32_t row, double weight = 1.0) {
    rows.push_back(row);
    weights.push_back(weight);
  }
  void end_instance() { offsets.push_back(rows.size()); }
};

/// Tape for reverse-mode differentiation over batched 2-D tensors. Every
/// node is `batch x width` unless stated otherwise; nodes are appended in
/// topological order and backward() replays them in reverse.
///
/// Parameter nodes alias their Parameter: gradients accumulate directly
/// into Parameter::grad, so callers zero gradients between steps.
class Graph {
 public:
  explicit Graph(bool training = false, std::uint64_t seed = 0);

  bool training() const { return training_; }
  std::size_t size() const { return nodes_.size(); }

  NodeId constant(Tensor value);
  NodeId parameter(Parameter& p);
  /// Weighted row gather; rows touched here are marked during backward.
  NodeId lookup(Parameter& table, RowSelection selection);

  NodeId matmul(NodeId x, NodeId w);
  NodeId add(NodeId a, NodeId b);
  NodeId add_row(NodeId x, NodeId row);
  NodeId mul(NodeId a, NodeId b);
  NodeId mul_row(NodeId x, NodeId row);
  NodeId scale(NodeId x, double factor);
  NodeId sum(std::span<const NodeId> parts);
  NodeId concat(std::span<const NodeId> parts);
  NodeId slice(NodeId x, std::size_t first_col, std::size_t width);
  NodeId sum_cols(NodeId x);
  NodeId activate(NodeId x, Activation act);
  /// Layer normalization over each row. With `groups > 1` the row holds
  /// `groups` blocks of width `cols/groups`, statistics are pooled over the
  /// whole row and the `1 x (cols/groups)` gain/shift are shared by blocks.
  NodeId layer_norm(NodeId x, std::size_t groups, NodeId gain, NodeId shift);
  NodeId dropout(NodeId x, double rate);
  NodeId softmax(NodeId x, double temperature);
  /// Mean sigmoid cross-entropy of a `batch x 1` logit column; `1 x 1`.
  NodeId logloss(NodeId logits, std::span<const double> labels);

  const Tensor& value(NodeId id) const;
  const Tensor& grad(NodeId id) const;

  /// Hash of the side of 0 every ReLU/SELU input fell on. Two evaluations
  /// with equal signatures lie in the same differentiable piece.
  std::uint64_t kink_signature() const { return kink_signature_; }

  /// Seeds d(root)/d(root) = 1 for a `1 x 1` root and propagates.
  void backward(NodeId root);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Parameter* param = nullptr;
    std::function<void(Graph&, NodeId)> backward;
  };

  Tensor& mutable_value(NodeId id);
  Tensor& mutable_grad(NodeId id);
  NodeId push(Tensor value, std::function<void(Graph&, NodeId)> backward, const char* op);
  void check(NodeId id) const;

  bool training_;
  std::mt19937_64 rng_;
  std::vector<Node> nodes_;
  std::uint64_t kink_signature_ = 0xcbf29ce484222325ULL;
};

}  // namespace ctrkit
