#include "ctrkit/models.h"

#include <cmath>
#include <numeric>
#include <random>

namespace ctrkit {
namespace {

Tensor uniform(std::size_t rows, std::size_t cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(rows, cols);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

Tensor xavier(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  return uniform(fan_in, fan_out, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

Tensor rectangular_identity(std::size_t rows, std::size_t cols) {
  Tensor t(rows, cols);
  for (std::size_t i = 0; i < std::min(rows, cols); ++i) t(i, i) = 1.0;
  return t;
}

std::string subnet_name(std::size_t i, std::size_t j, const char* part) {
  return "subnet." + std::to_string(i) + "." + std::to_string(j) + "." + part;
}

std::string dnn_name(std::size_t layer, const char* part) {
  return "dnn." + std::to_string(layer) + "." + part;
}

}  // namespace

std::vector<double> Network::logits(const EncodedBatch& batch) {
  Graph g(false);
  const Tensor& out = g.value(forward(g, batch));
  return {out.values().begin(), out.values().end()};
}

Family parse_family(std::string_view name) {
  for (auto f : all_families()) {
    if (family_name(f) == name) return f;
  }
  throw Error("unknown model family '" + std::string(name) + "'");
}

std::string_view family_name(Family family) {
  switch (family) {
    case Family::kLr: return "lr";
    case Family::kFm: return "fm";
    case Family::kFfm: return "ffm";
    case Family::kAfm: return "afm";
    case Family::kKfm: return "kfm";
    case Family::kNifm: return "nifm";
    case Family::kFnn: return "fnn";
    case Family::kDeepFm: return "deepfm";
    case Family::kIpnn: return "ipnn";
    case Family::kKpnn: return "kpnn";
    case Family::kPin: return "pin";
  }
  return "lr";
}

const std::vector<Family>& all_families() {
  static const std::vector<Family> families = {
      Family::kLr,   Family::kFm,     Family::kFfm,  Family::kAfm,  Family::kKfm, Family::kNifm,
      Family::kFnn,  Family::kDeepFm, Family::kIpnn, Family::kKpnn, Family::kPin};
  return families;
}

EmbeddingInit parse_embedding_init(std::string_view name) {
  if (name == "Nk") return EmbeddingInit::kTotal;
  if (name == "nk") return EmbeddingInit::kFields;
  if (name == "k") return EmbeddingInit::kSize;
  throw Error("unknown embedding init '" + std::string(name) + "' (expected Nk, nk or k)");
}

std::string_view embedding_init_name(EmbeddingInit init) {
  switch (init) {
    case EmbeddingInit::kTotal: return "Nk";
    case EmbeddingInit::kFields: return "nk";
    case EmbeddingInit::kSize: return "k";
  }
  return "nk";
}

bool uses_embeddings(Family f) { return f != Family::kLr && f != Family::kFfm; }
bool uses_linear(Family f) {
  return f == Family::kLr || f == Family::kFm || f == Family::kFfm || f == Family::kAfm ||
         f == Family::kKfm || f == Family::kNifm || f == Family::kDeepFm;
}
bool uses_dnn(Family f) {
  return f == Family::kFnn || f == Family::kDeepFm || f == Family::kIpnn ||
         f == Family::kKpnn || f == Family::kPin;
}
bool uses_kernels(Family f) { return f == Family::kKfm || f == Family::kKpnn; }

void ModelSpec::validate(std::size_t num_fields) const {
  const auto name = std::string(family_name(family));
  if (num_fields < 1) throw Error(name + ": need at least one field");
  if (family != Family::kLr && family != Family::kFnn && num_fields < 2) {
    throw Error(name + ": pairwise interactions need at least two fields");
  }
  if (k == 0 && !adaptive) throw Error(name + ": embedding size k must be positive");
  if (adaptive && (adaptive_c <= 0 || adaptive_max == 0)) {
    throw Error(name + ": adaptive embedding needs c > 0 and K > 0");
  }
  if (adaptive) {
    const bool ok = family == Family::kFnn ||
                    (uses_kernels(family) && kernel == KernelMode::kMatrix);
    if (!ok) throw Error(name + ": adaptive embedding sizes need fnn or matrix kernels");
  }
  if (uses_dnn(family) && net.empty()) throw Error(name + ": net widths are required");
  for (auto w : net) {
    if (w == 0) throw Error(name + ": net widths must be positive");
  }
  if ((family == Family::kPin || family == Family::kNifm) &&
      (subnet_hidden == 0 || subnet_out == 0)) {
    throw Error(name + ": sub_net widths must be positive");
  }
  if (family == Family::kNifm && subnet_out != 1) {
    throw Error("nifm: sub_net output width must be 1");
  }
  if (family == Family::kAfm && (attention_t <= 0 || attention_h == 0)) {
    throw Error("afm: attention needs t > 0 and h > 0");
  }
  if (dropout < 0 || dropout >= 1) throw Error(name + ": dropout must be in [0, 1)");
}

std::string Model::kernel_name(std::size_t i, std::size_t j) {
  return "kernel." + std::to_string(i) + "." + std::to_string(j);
}
std::string Model::embedding_name(std::size_t i) { return "embed." + std::to_string(i); }
std::string Model::ffm_name(std::size_t i) { return "ffm." + std::to_string(i); }

Model::Model(ModelSpec spec, std::vector<std::size_t> field_sizes, std::uint64_t seed)
    : spec_(std::move(spec)), field_sizes_(std::move(field_sizes)) {
  spec_.validate(field_sizes_.size());
  for (auto s : field_sizes_) {
    if (s == 0) throw Error("model: every field needs at least one category");
  }
  field_offsets_.resize(field_sizes_.size());
  std::exclusive_scan(field_sizes_.begin(), field_sizes_.end(), field_offsets_.begin(),
                      std::size_t{0});
  for (auto s : field_sizes_) {
    embedding_sizes_.push_back(spec_.adaptive
                                   ? adaptive_embedding_size(s, spec_.adaptive_c, spec_.adaptive_max)
                                   : spec_.k);
  }
  init_parameters(seed);
}

std::size_t Model::dnn_input_width() const {
  const std::size_t n = field_sizes_.size();
  const std::size_t concat = std::accumulate(embedding_sizes_.begin(), embedding_sizes_.end(),
                                             std::size_t{0});
  switch (spec_.family) {
    case Family::kFnn:
    case Family::kDeepFm: return concat;
    case Family::kIpnn:
    case Family::kKpnn: return concat + pair_count(n);
    case Family::kPin: return pair_count(n) * spec_.subnet_out;
    default: return 0;
  }
}

void Model::init_parameters(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t n = field_sizes_.size();
  const std::size_t total = std::accumulate(field_sizes_.begin(), field_sizes_.end(),
                                            std::size_t{0});
  const Family f = spec_.family;
  const auto embed_bound = [&](std::size_t k) {
    double denom = static_cast<double>(k);
    if (spec_.init == EmbeddingInit::kTotal) denom *= static_cast<double>(total);
    if (spec_.init == EmbeddingInit::kFields) denom *= static_cast<double>(n);
    return std::sqrt(spec_.init_c / denom);
  };

  if (uses_linear(f)) {
    params_.add("linear.w", ParamRole::kLinear, Tensor(total, 1));
    params_.add("linear.b", ParamRole::kDense, Tensor(1, 1));
  }
  if (uses_embeddings(f)) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = embedding_sizes_[i];
      params_.add(embedding_name(i), ParamRole::kEmbedding,
                  uniform(field_sizes_[i], k, embed_bound(k), rng));
    }
  }
  if (f == Family::kFfm) {
    for (std::size_t i = 0; i < n; ++i) {
      params_.add(ffm_name(i), ParamRole::kEmbedding,
                  uniform(field_sizes_[i], (n - 1) * spec_.k, embed_bound(spec_.k), rng));
    }
  }
  if (uses_kernels(f)) {
    for (auto [i, j] : pair_index(n)) {
      Tensor init = spec_.kernel == KernelMode::kVector
                        ? Tensor(1, embedding_sizes_[i], 1.0)
                        : rectangular_identity(embedding_sizes_[i], embedding_sizes_[j]);
      if (spec_.kernel != KernelMode::kIdentity) {
        params_.add(kernel_name(i, j), ParamRole::kDense, std::move(init));
      }
    }
  }
  if (f == Family::kAfm) {
    params_.add("attn.w", ParamRole::kAttention, xavier(spec_.k, spec_.attention_h, rng));
    params_.add("attn.b", ParamRole::kAttention, Tensor(1, spec_.attention_h));
    params_.add("attn.score", ParamRole::kAttention, xavier(spec_.attention_h, 1, rng));
  }
  if (f == Family::kNifm || f == Family::kPin) {
    const std::size_t in = (f == Family::kPin ? 3 : 2) * spec_.k;
    for (auto [i, j] : pair_index(n)) {
      params_.add(subnet_name(i, j, "w1"), ParamRole::kDense,
                  xavier(in, spec_.subnet_hidden, rng));
      params_.add(subnet_name(i, j, "b1"), ParamRole::kDense, Tensor(1, spec_.subnet_hidden));
      params_.add(subnet_name(i, j, "w2"), ParamRole::kDense,
                  xavier(spec_.subnet_hidden, spec_.subnet_out, rng));
      if (f == Family::kPin) {
        params_.add(subnet_name(i, j, "b2"), ParamRole::kDense, Tensor(1, spec_.subnet_out));
      }
    }
    if (f == Family::kPin && spec_.subnet_ln) {
      params_.add("subnet.ln.gain", ParamRole::kDense, Tensor(1, spec_.subnet_hidden, 1.0));
      params_.add("subnet.ln.shift", ParamRole::kDense, Tensor(1, spec_.subnet_hidden));
    }
  }
  if ((f == Family::kIpnn || f == Family::kKpnn) && spec_.ln) {
    params_.add("product.ln.gain", ParamRole::kDense, Tensor(1, pair_count(n), 1.0));
    params_.add("product.ln.shift", ParamRole::kDense, Tensor(1, pair_count(n)));
  }
  if (uses_dnn(f)) {
    std::size_t in = dnn_input_width();
    for (std::size_t l = 0; l < spec_.net.size(); ++l) {
      const std::size_t out = spec_.net[l];
      params_.add(dnn_name(l, "w"), ParamRole::kDense, xavier(in, out, rng));
      params_.add(dnn_name(l, "b"), ParamRole::kDense, Tensor(1, out));
      if (spec_.ln) {
        params_.add(dnn_name(l, "ln.gain"), ParamRole::kDense, Tensor(1, out, 1.0));
        params_.add(dnn_name(l, "ln.shift"), ParamRole::kDense, Tensor(1, out));
      }
      in = out;
    }
    params_.add("dnn.out.w", ParamRole::kDense, xavier(in, 1, rng));
    params_.add("dnn.out.b", ParamRole::kDense, Tensor(1, 1));
  }
}

NodeId Model::linear_term(Graph& g, const EncodedBatch& batch) {
  RowSelection sel;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (std::size_t f = 0; f < batch.num_fields(); ++f) {
      const auto values = batch.values(b, f);
      const double w = 1.0 / static_cast<double>(values.size());
      for (auto v : values) sel.add(static_cast<std::uint32_t>(field_offsets_[f] + v), w);
    }
    sel.end_instance();
  }
  const NodeId sum = g.lookup(params_.at("linear.w"), std::move(sel));
  return g.add_row(sum, g.parameter(params_.at("linear.b")));
}

std::vector<NodeId> Model::embeddings(Graph& g, const EncodedBatch& batch) {
  std::vector<Parameter*> tables;
  for (std::size_t i = 0; i < field_sizes_.size(); ++i) {
    tables.push_back(&params_.at(embedding_name(i)));
  }
  return embed_lookup(g, batch, tables);
}

std::vector<NodeId> Model::kernel_nodes(Graph& g) {
  std::vector<NodeId> nodes;
  if (spec_.kernel == KernelMode::kIdentity) return nodes;
  for (auto [i, j] : pair_index(field_sizes_.size())) {
    nodes.push_back(g.parameter(params_.at(kernel_name(i, j))));
  }
  return nodes;
}

std::vector<SubnetNodes> Model::subnet_nodes(Graph& g, bool output_bias) {
  std::vector<SubnetNodes> nodes;
  for (auto [i, j] : pair_index(field_sizes_.size())) {
    SubnetNodes s{g.parameter(params_.at(subnet_name(i, j, "w1"))),
                  g.parameter(params_.at(subnet_name(i, j, "b1"))),
                  g.parameter(params_.at(subnet_name(i, j, "w2"))), std::nullopt};
    if (output_bias) s.b2 = g.parameter(params_.at(subnet_name(i, j, "b2")));
    nodes.push_back(s);
  }
  return nodes;
}

NodeId Model::dnn(Graph& g, NodeId input) {
  NodeId x = input;
  for (std::size_t l = 0; l < spec_.net.size(); ++l) {
    x = g.add_row(g.matmul(x, g.parameter(params_.at(dnn_name(l, "w")))),
                  g.parameter(params_.at(dnn_name(l, "b"))));
    if (spec_.ln) {
      x = g.layer_norm(x, 1, g.parameter(params_.at(dnn_name(l, "ln.gain"))),
                       g.parameter(params_.at(dnn_name(l, "ln.shift"))));
    }
    x = g.dropout(g.activate(x, spec_.act), spec_.dropout);
  }
  return g.add_row(g.matmul(x, g.parameter(params_.at("dnn.out.w"))),
                   g.parameter(params_.at("dnn.out.b")));
}

NodeId Model::product_norm(Graph& g, NodeId products) {
  if (!spec_.ln) return products;
  return g.layer_norm(products, 1, g.parameter(params_.at("product.ln.gain")),
                      g.parameter(params_.at("product.ln.shift")));
}

NodeId Model::forward(Graph& g, const EncodedBatch& batch) {
  if (batch.num_fields() != field_sizes_.size()) {
    throw Error(name() + ": batch has " + std::to_string(batch.num_fields()) +
                " fields, model expects " + std::to_string(field_sizes_.size()));
  }
  switch (spec_.family) {
    case Family::kLr: return logit_lr(g, batch);
    case Family::kFm: return logit_fm(g, batch);
    case Family::kFfm: return logit_ffm(g, batch);
    case Family::kAfm: return logit_afm(g, batch);
    case Family::kKfm: return logit_kfm(g, batch);
    case Family::kNifm: return logit_nifm(g, batch);
    case Family::kFnn: return logit_fnn(g, batch);
    case Family::kDeepFm: return logit_deepfm(g, batch);
    case Family::kIpnn: return logit_ipnn(g, batch);
    case Family::kKpnn: return logit_kpnn(g, batch);
    case Family::kPin: return logit_pin(g, batch);
  }
  throw Error("unsupported model family");
}

NodeId Model::logit_lr(Graph& g, const EncodedBatch& batch) { return linear_term(g, batch); }

NodeId Model::logit_fm(Graph& g, const EncodedBatch& batch) {
  const auto v = embeddings(g, batch);
  return g.add(linear_term(g, batch), g.sum_cols(inner_products(g, v)));
}

NodeId Model::logit_ffm(Graph& g, const EncodedBatch& batch) {
  const std::size_t n = field_sizes_.size();
  const std::size_t k = spec_.k;
  std::vector<NodeId> tables;
  for (std::size_t i = 0; i < n; ++i) {
    tables.push_back(g.lookup(params_.at(ffm_name(i)), field_selection(batch, i)));
  }
  // Field i keeps one block per other field; block index skips i itself.
  const auto block = [&](std::size_t i, std::size_t target) {
    const std::size_t idx = target < i ? target : target - 1;
    return g.slice(tables[i], idx * k, k);
  };
  std::vector<NodeId> cols;
  for (auto [i, j] : pair_index(n)) cols.push_back(g.sum_cols(g.mul(block(i, j), block(j, i))));
  return g.add(linear_term(g, batch), g.sum_cols(g.concat(cols)));
}

NodeId Model::logit_afm(Graph& g, const EncodedBatch& batch) {
  const auto v = embeddings(g, batch);
  const AttentionNodes attn{g.parameter(params_.at("attn.w")), g.parameter(params_.at("attn.b")),
                            g.parameter(params_.at("attn.score"))};
  const NodeId weights = attention_pair_weights(g, v, attn, spec_.attention_t);
  const NodeId interactions = g.sum_cols(g.mul(weights, inner_products(g, v)));
  return g.add(linear_term(g, batch), interactions);
}

NodeId Model::logit_kfm(Graph& g, const EncodedBatch& batch) {
  const auto v = embeddings(g, batch);
  const auto kernels = kernel_nodes(g);
  return g.add(linear_term(g, batch), g.sum_cols(kernel_products(g, v, spec_.kernel, kernels)));
}

NodeId Model::logit_nifm(Graph& g, const EncodedBatch& batch) {
  const auto v = embeddings(g, batch);
  const auto subnets = subnet_nodes(g, false);
  return g.add(linear_term(g, batch),
               g.sum_cols(nifm_pair_scores(g, v, subnets, spec_.subnet_act)));
}

NodeId Model::logit_fnn(Graph& g, const EncodedBatch& batch) {
  return dnn(g, g.concat(embeddings(g, batch)));
}

NodeId Model::logit_deepfm(Graph& g, const EncodedBatch& batch) {
  const auto v = embeddings(g, batch);
  const NodeId fm = g.add(linear_term(g, batch), g.sum_cols(inner_products(g, v)));
  return g.add(fm, dnn(g, g.concat(v)));
}

NodeId Model::logit_ipnn(Graph& g, const EncodedBatch& batch) {
  auto parts = embeddings(g, batch);
  parts.push_back(product_norm(g, inner_products(g, parts)));
  return dnn(g, g.concat(parts));
}

NodeId Model::logit_kpnn(Graph& g, const EncodedBatch& batch) {
  auto parts = embeddings(g, batch);
  const auto kernels = kernel_nodes(g);
  parts.push_back(product_norm(g, kernel_products(g, parts, spec_.kernel, kernels)));
  return dnn(g, g.concat(parts));
}

NodeId Model::logit_pin(Graph& g, const EncodedBatch& batch) {
  const auto v = embeddings(g, batch);
  const auto subnets = subnet_nodes(g, true);
  std::optional<FusedNormNodes> norm;
  if (spec_.subnet_ln) {
    norm = FusedNormNodes{g.parameter(params_.at("subnet.ln.gain")),
                          g.parameter(params_.at("subnet.ln.shift"))};
  }
  return dnn(g, micro_net_products(g, v, subnets, spec_.subnet_act, norm));
}

void pretrain_embeddings(const Checkpoint& fm, Model& target) {
  if (fm.model != "fm") throw Error("pretrain: checkpoint holds '" + fm.model + "', expected fm");
  if (!uses_embeddings(target.spec().family)) {
    throw Error("pretrain: " + target.name() + " has no shared embedding tables");
  }
  if (fm.num_fields != target.num_fields()) {
    throw Error("pretrain: FM has " + std::to_string(fm.num_fields) + " fields, target has " +
                std::to_string(target.num_fields()));
  }
  for (std::size_t i = 0; i < target.num_fields(); ++i) {
    const auto name = Model::embedding_name(i);
    const Tensor* src = fm.find(name);
    if (!src) throw Error("pretrain: FM checkpoint lacks '" + name + "'");
    Parameter& dst = target.params().at(name);
    if (!dst.value.same_shape(*src)) {
      throw Error("pretrain: '" + name + "' is " + src->shape_string() + " in the FM but " +
                  dst.value.shape_string() + " in the target");
    }
    dst.value = *src;
  }
}

}  // namespace ctrkit
