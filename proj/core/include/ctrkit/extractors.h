#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "ctrkit/graph.h"
#include "ctrkit/ops.h"

namespace ctrkit {

/// All field pairs (i, j) with i < j in lexicographic order.
std::vector<std::pair<std::size_t, std::size_t>> pair_index(std::size_t num_fields);
inline std::size_t pair_count(std::size_t num_fields) {
  return num_fields * (num_fields - 1) / 2;
}

enum class KernelMode { kMatrix, kVector, kIdentity };
KernelMode parse_kernel_mode(std::string_view name);
std::string_view kernel_mode_name(KernelMode mode);

/// `batch x P` inner products <v_i, v_j>.
NodeId inner_products(Graph& g, std::span<const NodeId> fields);

/// `batch x P` kernel products. Matrix mode: v_i^T φ_ij v_j with φ_ij of
/// shape k_i x k_j. Vector mode: Σ_s v_i[s] φ_ij[s] v_j[s] with φ_ij `1 x k`.
/// Identity mode ignores `kernels` and equals inner_products().
NodeId kernel_products(Graph& g, std::span<const NodeId> fields, KernelMode mode,
                       std::span<const NodeId> kernels);

/// Matrix-mode kernel products over fields with different embedding sizes.
NodeId kernel_products_adaptive(Graph& g, std::span<const NodeId> fields,
                                std::span<const NodeId> kernels);

struct SubnetNodes {
  NodeId w1;
  NodeId b1;
  NodeId w2;
  std::optional<NodeId> b2;
};

struct FusedNormNodes {
  NodeId gain;
  NodeId shift;
};

/// Per-pair micro networks over [v_i, v_j, v_i ⊙ v_j]:
/// act(LN?(x w1 + b1)) w2 + b2. With `norm` set, the hidden pre-activations
/// of all pairs are normalized together (fused LN). Returns
/// `batch x (P * d2)` in pair order.
NodeId micro_net_products(Graph& g, std::span<const NodeId> fields,
                          std::span<const SubnetNodes> subnets, Activation act,
                          std::optional<FusedNormNodes> norm);

/// Per-pair scalar scores act([v_i, v_j] w1 + b1) w2, no output bias.
/// Returns `batch x P`.
NodeId nifm_pair_scores(Graph& g, std::span<const NodeId> fields,
                        std::span<const SubnetNodes> subnets, Activation act);

struct AttentionNodes {
  NodeId w;      // k x h
  NodeId b;      // 1 x h
  NodeId score;  // h x 1
};

/// Attention weights over pairs: softmax_pairs(a_ij / t) with
/// a_ij = score^T relu(W (v_i ⊙ v_j) + b). Returns `batch x P`.
NodeId attention_pair_weights(Graph& g, std::span<const NodeId> fields,
                              const AttentionNodes& attn, double temperature);

}  // namespace ctrkit
