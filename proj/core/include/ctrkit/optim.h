#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ctrkit/params.h"

namespace ctrkit {

enum class OptimizerKind { kSgd, kAdam };
OptimizerKind parse_optimizer(std::string_view name);
std::string_view optimizer_name(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  /// Only rows read by the forward pass are updated; their moments decay
  /// lazily by beta^Δt at the next touch.
  bool sparse_update = true;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double l2 = 0.0;         // sparse L2 on embedding rows
  double l2_attention = 0.0;
  double l2_global = 0.0;  // every dense parameter

  void validate() const;
};

/// Adds λ·(count_r / batch_size)·v_r to each touched row r of `table`.
void sparse_l2_gradient(Parameter& table, double lambda, std::size_t batch_size);

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  /// Applies regularization, then one update from the accumulated gradients.
  void step(ParamStore& params, std::size_t batch_size);

  const OptimizerConfig& config() const { return config_; }
  std::uint64_t steps() const { return t_; }

  // Moment access for tests and diagnostics.
  const Tensor& first_moment(const std::string& name) const;
  const Tensor& second_moment(const std::string& name) const;

 private:
  struct Slot {
    Tensor m;
    Tensor v;
    std::vector<std::uint64_t> last_step;  // per row, row-sparse tables only
  };

  Slot& slot(const Parameter& p);
  void update_row(Parameter& p, Slot& s, std::size_t row, double decay1, double decay2,
                  double step_size, double bias2);

  OptimizerConfig config_;
  std::uint64_t t_ = 0;
  std::unordered_map<std::string, Slot> slots_;
};

// Analytic Adam diagnostics.

/// g* = ε / sqrt((1-β2)/(1-β2^t)): the gradient magnitude where Adam's
/// estimate changes fastest.
double gstar(double epsilon, double beta2, double t);

/// Adam's estimate for a single gradient g_t at its first appearance at step t.
double adam_estimate(double g, double t, double beta1, double beta2, double epsilon);

/// Estimate T steps after a single gradient g_t observed at step t.
double long_tail_gradient(double g, double t, double window, double beta1, double beta2,
                          double epsilon);

/// E[σ(ŷ) − y] = α(mean_sigma/α − 1).
double unbalance_gradient_expectation(double alpha, double mean_sigma);

}  // namespace ctrkit
