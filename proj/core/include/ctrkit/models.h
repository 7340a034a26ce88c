#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ctrkit/checkpoint.h"
#include "ctrkit/embedding.h"
#include "ctrkit/extractors.h"
#include "ctrkit/graph.h"
#include "ctrkit/params.h"

namespace ctrkit {

/// Anything trainable that maps a batch to a `batch x 1` logit column.
class Network {
 public:
  virtual ~Network() = default;

  virtual NodeId forward(Graph& g, const EncodedBatch& batch) = 0;
  virtual ParamStore& params() = 0;
  virtual const ParamStore& params() const = 0;
  virtual std::string name() const = 0;
  virtual std::size_t num_fields() const = 0;

  /// Evaluation-mode logits.
  std::vector<double> logits(const EncodedBatch& batch);
};

enum class Family { kLr, kFm, kFfm, kAfm, kKfm, kNifm, kFnn, kDeepFm, kIpnn, kKpnn, kPin };

Family parse_family(std::string_view name);
std::string_view family_name(Family family);
const std::vector<Family>& all_families();

/// Uniform embedding initialization bound: sqrt(c/(N k)), sqrt(c/(n k)) or
/// sqrt(c/k).
enum class EmbeddingInit { kTotal, kFields, kSize };
EmbeddingInit parse_embedding_init(std::string_view name);
std::string_view embedding_init_name(EmbeddingInit init);

struct ModelSpec {
  Family family = Family::kFm;
  std::size_t k = 10;
  bool adaptive = false;
  double adaptive_c = 4.0;
  std::size_t adaptive_max = 40;
  std::vector<std::size_t> net;  // hidden widths; output unit is implicit
  Activation act = Activation::kRelu;
  bool ln = false;
  double dropout = 0.0;
  std::size_t subnet_hidden = 40;
  std::size_t subnet_out = 5;
  Activation subnet_act = Activation::kTanh;
  bool subnet_ln = true;
  KernelMode kernel = KernelMode::kMatrix;
  double attention_t = 1.0;
  std::size_t attention_h = 32;
  EmbeddingInit init = EmbeddingInit::kFields;
  double init_c = 1.0;

  /// Throws when the family is missing a component it needs.
  void validate(std::size_t num_fields) const;
};

bool uses_embeddings(Family f);
bool uses_linear(Family f);
bool uses_dnn(Family f);
bool uses_kernels(Family f);

class Model : public Network {
 public:
  Model(ModelSpec spec, std::vector<std::size_t> field_sizes, std::uint64_t seed);

  NodeId forward(Graph& g, const EncodedBatch& batch) override;
  ParamStore& params() override { return params_; }
  const ParamStore& params() const override { return params_; }
  std::string name() const override { return std::string(family_name(spec_.family)); }
  std::size_t num_fields() const override { return field_sizes_.size(); }

  const ModelSpec& spec() const { return spec_; }
  const std::vector<std::size_t>& field_sizes() const { return field_sizes_; }
  const std::vector<std::size_t>& embedding_sizes() const { return embedding_sizes_; }
  std::size_t dnn_input_width() const;

  // Checkpoint tensor names.
  static std::string kernel_name(std::size_t i, std::size_t j);
  static std::string embedding_name(std::size_t i);
  static std::string ffm_name(std::size_t i);

 private:
  void init_parameters(std::uint64_t seed);

  NodeId linear_term(Graph& g, const EncodedBatch& batch);
  std::vector<NodeId> embeddings(Graph& g, const EncodedBatch& batch);
  std::vector<NodeId> kernel_nodes(Graph& g);
  std::vector<SubnetNodes> subnet_nodes(Graph& g, bool output_bias);
  NodeId dnn(Graph& g, NodeId input);
  NodeId product_norm(Graph& g, NodeId products);

  NodeId logit_lr(Graph& g, const EncodedBatch& batch);
  NodeId logit_fm(Graph& g, const EncodedBatch& batch);
  NodeId logit_ffm(Graph& g, const EncodedBatch& batch);
  NodeId logit_afm(Graph& g, const EncodedBatch& batch);
  NodeId logit_kfm(Graph& g, const EncodedBatch& batch);
  NodeId logit_nifm(Graph& g, const EncodedBatch& batch);
  NodeId logit_fnn(Graph& g, const EncodedBatch& batch);
  NodeId logit_deepfm(Graph& g, const EncodedBatch& batch);
  NodeId logit_ipnn(Graph& g, const EncodedBatch& batch);
  NodeId logit_kpnn(Graph& g, const EncodedBatch& batch);
  NodeId logit_pin(Graph& g, const EncodedBatch& batch);

  ModelSpec spec_;
  std::vector<std::size_t> field_sizes_;
  std::vector<std::size_t> embedding_sizes_;
  std::vector<std::size_t> field_offsets_;
  ParamStore params_;
};

/// Copies the embedding tables of a trained FM checkpoint into `target`;
/// every other parameter keeps its fresh initialization.
void pretrain_embeddings(const Checkpoint& fm, Model& target);

}  // namespace ctrkit
