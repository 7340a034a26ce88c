#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ctrkit/featuremap.h"
#include "ctrkit/metrics.h"
#include "ctrkit/models.h"

namespace ctrkit {

// ---- Mean-embedding heatmaps ----

/// Column means of an `N_i x k` table.
std::vector<double> mean_embedding(const Tensor& table);

struct Heatmap {
  std::string family;
  std::vector<std::string> field_names;
  Tensor values;  // n x n, zero diagonal
};

/// Interaction strength between field centers for fm, ffm and kfm models.
/// `field_names` may be empty, in which case fields are named f0, f1, ...
Heatmap heatmap(const Model& model, std::vector<std::string> field_names = {});

/// Header row of field names, then n rows of values.
void write_heatmap_csv(std::ostream& out, const Heatmap& map);
/// Binary PGM (P5) scaled from [min, max] to [0, 255]; returns {min, max}.
std::pair<double, double> write_heatmap_pgm(std::ostream& out, const Heatmap& map);

// ---- Mini-batch dropout bias ----

struct DropoutBiasConfig {
  std::size_t categories = 1000;
  std::vector<std::size_t> batch_sizes{100, 200, 500, 1000};
  std::vector<double> rates{0.0, 0.5};
  std::size_t trials = 100;
  std::size_t values_per_sample = 10;
  std::uint64_t seed = 1;
};

struct DropoutBiasRow {
  std::size_t batch_size = 0;
  double rate = 0.0;
  double mean_kl = 0.0;
};

/// KL(p || q) after adding `smoothing` to every entry and renormalizing.
double smoothed_kl(std::span<const double> p, std::span<const double> q,
                   double smoothing = 1e-8);

/// Mean KL between a random categorical Q and the frequency estimate from a
/// dropout-masked batch, per (batch size, rate).
std::vector<DropoutBiasRow> dropout_bias_experiment(const DropoutBiasConfig& config);

// ---- Poly-2 synthetic data ----

struct Poly2Options {
  std::size_t num_fields = 10;
  /// Field sizes are drawn uniformly from [1, 2N/n] unless `field_size` is set.
  std::size_t total_categories = 200;
  std::size_t field_size = 0;
  double noise_scale = 0.01;  // relative to the score standard deviation
  /// Target share of positives; the threshold is the matching quantile of
  /// noiseless calibration scores (0.5 gives the median).
  double positive_ratio = 0.5;
  std::optional<double> threshold;  // overrides positive_ratio
  std::size_t calibration_samples = 20000;
};

struct Poly2Spec {
  std::vector<std::size_t> field_sizes;
  std::vector<std::vector<double>> category_probs;  // per field
  std::vector<double> w;                            // per global category
  std::vector<Tensor> v;                            // per field pair, N_i x N_j
  double b = 0.0;
  double threshold = 0.0;
  double noise_std = 0.0;

  std::size_t num_fields() const { return field_sizes.size(); }
  double score(std::span<const std::uint32_t> categories) const;
};

Poly2Spec make_poly2(const Poly2Options& options, std::uint64_t seed);
/// Throws if every label comes out the same.
Dataset poly2_generate(const Poly2Spec& spec, std::size_t count, std::uint64_t seed);

/// DNN over one-hot input: the first hidden layer is a sum of per-category
/// rows plus a bias; remaining layers are dense.
class OneHotDnn : public Network {
 public:
  OneHotDnn(std::vector<std::size_t> field_sizes, std::vector<std::size_t> hidden,
            Activation act, std::uint64_t seed);

  NodeId forward(Graph& g, const EncodedBatch& batch) override;
  ParamStore& params() override { return params_; }
  const ParamStore& params() const override { return params_; }
  std::string name() const override { return "onehot-dnn"; }
  std::size_t num_fields() const override { return field_sizes_.size(); }

 private:
  std::vector<std::size_t> field_sizes_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> hidden_;
  Activation act_;
  ParamStore params_;
};

/// Logistic regression on one-hot categories and all cross-field category
/// pairs: the model family that generated poly-2 data.
class Poly2Regressor : public Network {
 public:
  explicit Poly2Regressor(std::vector<std::size_t> field_sizes);

  NodeId forward(Graph& g, const EncodedBatch& batch) override;
  ParamStore& params() override { return params_; }
  const ParamStore& params() const override { return params_; }
  std::string name() const override { return "poly2"; }
  std::size_t num_fields() const override { return field_sizes_.size(); }

 private:
  std::vector<std::size_t> field_sizes_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> pair_offsets_;
  ParamStore params_;
};

struct Poly2Curve {
  std::string name;
  std::vector<std::pair<std::size_t, double>> auc;  // (step, validation AUC)
  double final_auc = 0.0;
};

struct Poly2ExperimentConfig {
  Poly2Options data;
  std::size_t train_size = 100000;
  std::size_t valid_size = 20000;
  std::vector<std::vector<std::size_t>> dnn_shapes{{128, 128, 128}};
  bool include_poly2 = true;
  TrainConfig train;
  std::uint64_t seed = 1;
};

/// Trains each DNN shape and the poly-2 regressor on the same data and
/// records validation AUC along the way.
std::vector<Poly2Curve> poly2_experiment(const Poly2ExperimentConfig& config);

void write_curve_csv(std::ostream& out, const Poly2Curve& curve);

}  // namespace ctrkit
