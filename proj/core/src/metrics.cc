#include "ctrkit/metrics.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

#include "ctrkit/textio.h"

namespace ctrkit {

double auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw Error("auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positives = 0, rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] > 0.5) {
        positives += 1;
        rank_sum += rank;
      }
    }
    i = j;
  }
  const double negatives = static_cast<double>(scores.size()) - positives;
  if (positives == 0 || negatives == 0) throw Error("auc: needs both positive and negative labels");
  return (rank_sum - positives * (positives + 1) / 2) / (positives * negatives);
}

double mean_logloss(std::span<const double> logits, std::span<const double> labels) {
  if (logits.size() != labels.size()) throw Error("logloss: logits and labels differ in length");
  if (logits.empty()) throw Error("logloss: empty input");
  double total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += logloss(logits[i], labels[i]);
  return total / static_cast<double>(logits.size());
}

MetricsReport evaluate(Network& net, const Dataset& data, std::size_t batch_size) {
  if (data.empty()) throw Error("evaluate: empty dataset");
  if (batch_size == 0) throw Error("evaluate: batch size must be positive");
  std::vector<double> logits, labels;
  logits.reserve(data.size());
  labels.reserve(data.size());
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<std::size_t> rows(std::min(batch_size, data.size() - start));
    std::iota(rows.begin(), rows.end(), start);
    EncodedBatch batch(data, std::move(rows));
    const auto out = net.logits(batch);
    logits.insert(logits.end(), out.begin(), out.end());
    const auto y = batch.labels();
    labels.insert(labels.end(), y.begin(), y.end());
  }
  MetricsReport report;
  report.count = data.size();
  report.positive_ratio = data.positive_ratio();
  report.logloss = mean_logloss(logits, labels);
  const bool both = report.positive_ratio > 0 && report.positive_ratio < 1;
  report.auc = both ? auc(logits, labels) : 0.5;
  return report;
}

TrainResult train(Network& net, const Dataset& train_data, const Dataset* eval_data,
                  const TrainConfig& config) {
  if (config.batch_size == 0) throw Error("train: batch size must be positive");
  if (config.epochs > 0 && train_data.empty()) throw Error("train: empty training set");
  if (train_data.num_fields() != net.num_fields()) {
    throw Error("train: data has " + std::to_string(train_data.num_fields()) +
                " fields, model expects " + std::to_string(net.num_fields()));
  }
  Optimizer optimizer(config.optimizer);
  std::mt19937_64 shuffle_rng(config.seed);
  TrainResult result;
  std::optional<ParamStore> best_params;

  auto run_eval = [&](StepLog& row) {
    if (!eval_data) return;
    const MetricsReport report = evaluate(net, *eval_data, config.batch_size);
    row.eval_auc = report.auc;
    row.eval_logloss = report.logloss;
    if (!result.best_eval || report.auc > result.best_eval->auc) {
      result.best_eval = report;
      result.best_step = result.steps;
      if (config.keep_best) best_params = net.params();
    }
  };

  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      EncodedBatch batch(train_data, {order.begin() + start, order.begin() + end});
      const auto labels = batch.labels();
      const std::size_t step = result.steps + 1;
      StepLog row;
      row.step = step;
      try {
        net.params().zero_grad();
        Graph g(true, config.seed * 0x9E3779B97F4A7C15ULL + step);
        const NodeId logits = net.forward(g, batch);
        const NodeId loss = g.logloss(logits, labels);
        const double loss_value = g.value(loss)(0, 0);
        if (!std::isfinite(loss_value)) throw Error("non-finite loss");
        double grad_sum = 0;
        for (std::size_t b = 0; b < labels.size(); ++b) {
          grad_sum += std::abs(sigmoid(g.value(logits)(b, 0)) - labels[b]);
        }
        row.mean_logit_grad = grad_sum / static_cast<double>(labels.size());
        row.train_loss = loss_value;
        g.backward(loss);
        optimizer.step(net.params(), labels.size());
      } catch (const Error& e) {
        throw Error("training diverged at step " + std::to_string(step) + ": " + e.what());
      }
      result.steps = step;
      if (config.eval_every > 0 && step % config.eval_every == 0) run_eval(row);
      result.log.push_back(row);
    }
    if (config.eval_every == 0 && eval_data) run_eval(result.log.back());
  }

  if (eval_data && result.steps > 0 && config.eval_every > 0 &&
      result.steps % config.eval_every != 0) {
    StepLog row;
    row.step = result.steps;
    run_eval(row);
    result.log.push_back(row);
  }
  if (best_params && result.best_step != result.steps) {
    net.params() = *best_params;
    StepLog row;
    row.step = result.best_step;
    row.eval_auc = result.best_eval->auc;
    row.eval_logloss = result.best_eval->logloss;
    result.log.push_back(row);
  }
  return result;
}


namespace {

void write_cell(std::ostream& out, const std::optional<double>& v) {
  out << ',';
  if (v) out << format_double(*v);
}

}  // namespace

void write_training_log(std::ostream& out, const TrainResult& result, std::uint64_t seed) {
  out << "# seed=" << seed << "\n";
  out << "step,mean_logit_grad,train_loss,eval_auc,eval_logloss\n";
  for (const auto& row : result.log) {
    out << row.step;
    write_cell(out, row.mean_logit_grad);
    write_cell(out, row.train_loss);
    write_cell(out, row.eval_auc);
    write_cell(out, row.eval_logloss);
    out << "\n";
  }
}

}  // namespace ctrkit
