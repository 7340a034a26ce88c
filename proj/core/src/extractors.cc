#include "ctrkit/extractors.h"

#include <string>

namespace ctrkit {
namespace {

void require_equal_widths(const Graph& g, std::span<const NodeId> fields, const char* op) {
  for (auto f : fields) {
    if (g.value(f).cols() != g.value(fields[0]).cols()) {
      throw Error(std::string(op) + ": embedding sizes must be equal");
    }
  }
}

void require_pairs(std::span<const NodeId> fields, std::size_t given, const char* op) {
  if (fields.size() < 2) throw Error(std::string(op) + ": need at least two fields");
  if (given != pair_count(fields.size())) {
    throw Error(std::string(op) + ": expected " + std::to_string(pair_count(fields.size())) +
                " pair parameters, got " + std::to_string(given));
  }
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> pair_index(std::size_t num_fields) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(pair_count(num_fields));
  for (std::size_t i = 0; i < num_fields; ++i) {
    for (std::size_t j = i + 1; j < num_fields; ++j) pairs.emplace_back(i, j);
  }
  return pairs;
}

KernelMode parse_kernel_mode(std::string_view name) {
  if (name == "matrix") return KernelMode::kMatrix;
  if (name == "vector") return KernelMode::kVector;
  if (name == "identity") return KernelMode::kIdentity;
  throw Error("unknown kernel mode '" + std::string(name) + "'");
}

std::string_view kernel_mode_name(KernelMode mode) {
  switch (mode) {
    case KernelMode::kMatrix: return "matrix";
    case KernelMode::kVector: return "vector";
    case KernelMode::kIdentity: return "identity";
  }
  return "matrix";
}

NodeId inner_products(Graph& g, std::span<const NodeId> fields) {
  if (fields.size() < 2) throw Error("inner_products: need at least two fields");
  require_equal_widths(g, fields, "inner_products");
  std::vector<NodeId> cols;
  for (auto [i, j] : pair_index(fields.size())) {
    cols.push_back(g.sum_cols(g.mul(fields[i], fields[j])));
  }
  return g.concat(cols);
}

NodeId kernel_products(Graph& g, std::span<const NodeId> fields, KernelMode mode,
                       std::span<const NodeId> kernels) {
  if (mode == KernelMode::kIdentity) return inner_products(g, fields);
  require_pairs(fields, kernels.size(), "kernel_products");
  const auto pairs = pair_index(fields.size());
  std::vector<NodeId> cols;
  cols.reserve(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [i, j] = pairs[p];
    const Tensor& ki = g.value(kernels[p]);
    if (mode == KernelMode::kMatrix) {
      if (ki.rows() != g.value(fields[i]).cols() || ki.cols() != g.value(fields[j]).cols()) {
        throw Error("kernel_products: kernel " + std::to_string(i) + "," + std::to_string(j) +
                    " has shape " + ki.shape_string());
      }
      cols.push_back(g.sum_cols(g.mul(g.matmul(fields[i], kernels[p]), fields[j])));
    } else {
      if (g.value(fields[i]).cols() != g.value(fields[j]).cols()) {
        throw Error("kernel_products: vector kernels need equal embedding sizes");
      }
      if (ki.rows() != 1 || ki.cols() != g.value(fields[i]).cols()) {
        throw Error("kernel_products: vector kernel has shape " + ki.shape_string());
      }
      cols.push_back(g.sum_cols(g.mul(g.mul_row(fields[i], kernels[p]), fields[j])));
    }
  }
  return g.concat(cols);
}

NodeId kernel_products_adaptive(Graph& g, std::span<const NodeId> fields,
                                std::span<const NodeId> kernels) {
  return kernel_products(g, fields, KernelMode::kMatrix, kernels);
}

NodeId micro_net_products(Graph& g, std::span<const NodeId> fields,
                          std::span<const SubnetNodes> subnets, Activation act,
                          std::optional<FusedNormNodes> norm) {
  require_pairs(fields, subnets.size(), "micro_net_products");
  require_equal_widths(g, fields, "micro_net_products");
  const auto pairs = pair_index(fields.size());
  std::vector<NodeId> hidden;
  hidden.reserve(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [i, j] = pairs[p];
    const NodeId parts[] = {fields[i], fields[j], g.mul(fields[i], fields[j])};
    const NodeId input = g.concat(parts);
    hidden.push_back(g.add_row(g.matmul(input, subnets[p].w1), subnets[p].b1));
  }
  std::vector<NodeId> activated;
  activated.reserve(pairs.size());
  if (norm) {
    const std::size_t width = g.value(hidden[0]).cols();
    const NodeId fused = g.layer_norm(g.concat(hidden), pairs.size(), norm->gain, norm->shift);
    const NodeId act_all = g.activate(fused, act);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      activated.push_back(g.slice(act_all, p * width, width));
    }
  } else {
    for (auto h : hidden) activated.push_back(g.activate(h, act));
  }
  std::vector<NodeId> outputs;
  outputs.reserve(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    NodeId out = g.matmul(activated[p], subnets[p].w2);
    if (subnets[p].b2) out = g.add_row(out, *subnets[p].b2);
    outputs.push_back(out);
  }
  return g.concat(outputs);
}

NodeId nifm_pair_scores(Graph& g, std::span<const NodeId> fields,
                        std::span<const SubnetNodes> subnets, Activation act) {
  require_pairs(fields, subnets.size(), "nifm_pair_scores");
  require_equal_widths(g, fields, "nifm_pair_scores");
  const auto pairs = pair_index(fields.size());
  std::vector<NodeId> cols;
  cols.reserve(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [i, j] = pairs[p];
    const NodeId parts[] = {fields[i], fields[j]};
    const NodeId hidden =
        g.activate(g.add_row(g.matmul(g.concat(parts), subnets[p].w1), subnets[p].b1), act);
    NodeId score = g.matmul(hidden, subnets[p].w2);
    if (g.value(score).cols() != 1) throw Error("nifm_pair_scores: subnet output must be scalar");
    cols.push_back(score);
  }
  return g.concat(cols);
}

NodeId attention_pair_weights(Graph& g, std::span<const NodeId> fields,
                              const AttentionNodes& attn, double temperature) {
  if (!(temperature > 0)) throw Error("attention_pair_weights: temperature must be positive");
  if (fields.size() < 2) throw Error("attention_pair_weights: need at least two fields");
  require_equal_widths(g, fields, "attention_pair_weights");
  std::vector<NodeId> scores;
  for (auto [i, j] : pair_index(fields.size())) {
    const NodeId hidden =
        g.activate(g.add_row(g.matmul(g.mul(fields[i], fields[j]), attn.w), attn.b),
                   Activation::kRelu);
    scores.push_back(g.matmul(hidden, attn.score));
  }
  return g.softmax(g.concat(scores), temperature);
}

}  // namespace ctrkit
