#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "ctrkit/featuremap.h"
#include "ctrkit/models.h"
#include "ctrkit/optim.h"

namespace ctrkit {

/// Mann-Whitney AUC with average ranks for ties. Labels are 0/1.
double auc(std::span<const double> scores, std::span<const double> labels);
double mean_logloss(std::span<const double> logits, std::span<const double> labels);

struct MetricsReport {
  double auc = 0.5;
  double logloss = 0.0;
  std::size_t count = 0;
  double positive_ratio = 0.0;
};

MetricsReport evaluate(Network& net, const Dataset& data, std::size_t batch_size);

struct TrainConfig {
  OptimizerConfig optimizer;
  std::size_t epochs = 1;
  std::size_t batch_size = 2000;
  std::uint64_t seed = 1;
  /// Evaluate every this many steps; 0 evaluates only at the end of each epoch.
  std::size_t eval_every = 0;
  /// Restore the parameters with the best eval AUC at the end.
  bool keep_best = true;
};

struct StepLog {
  std::size_t step = 0;
  std::optional<double> mean_logit_grad;  // mean |σ(ŷ) − y| over the batch
  std::optional<double> train_loss;
  std::optional<double> eval_auc;
  std::optional<double> eval_logloss;
};

struct TrainResult {
  std::vector<StepLog> log;
  std::size_t steps = 0;
  std::optional<MetricsReport> best_eval;
  std::size_t best_step = 0;
};

/// Mini-batch training with a seeded per-epoch shuffle. When the best
/// snapshot is restored, a final log row with its eval metrics is appended.
/// Throws with the step index if the loss or a gradient becomes non-finite.
TrainResult train(Network& net, const Dataset& train_data, const Dataset* eval_data,
                  const TrainConfig& config);

/// CSV: `# seed=<s>` then `step,mean_logit_grad,train_loss,eval_auc,eval_logloss`;
/// absent values are empty cells.
void write_training_log(std::ostream& out, const TrainResult& result, std::uint64_t seed);

}  // namespace ctrkit
