#include "ctrkit/optim.h"

#include <cmath>

namespace ctrkit {

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw Error("unknown optimizer '" + std::string(name) + "'");
}

std::string_view optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::kSgd ? "sgd" : "adam";
}

void OptimizerConfig::validate() const {
  if (!(lr > 0)) throw Error("optimizer: lr must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw Error("optimizer: beta1 and beta2 must be in [0, 1)");
  }
  if (!(epsilon > 0)) throw Error("optimizer: epsilon must be positive");
  if (l2 < 0 || l2_attention < 0 || l2_global < 0) {
    throw Error("optimizer: regularization coefficients must be non-negative");
  }
}

void sparse_l2_gradient(Parameter& table, double lambda, std::size_t batch_size) {
  if (lambda == 0 || batch_size == 0) return;
  const auto& rows = table.touched_rows();
  const auto& counts = table.touch_counts();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const double scale = lambda * counts[k] / static_cast<double>(batch_size);
    auto g = table.grad.row_span(rows[k]);
    const auto v = table.value.row_span(rows[k]);
    for (std::size_t c = 0; c < g.size(); ++c) g[c] += scale * v[c];
  }
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) { config_.validate(); }

Optimizer::Slot& Optimizer::slot(const Parameter& p) {
  auto it = slots_.find(p.name);
  if (it != slots_.end()) return it->second;
  Slot s;
  if (config_.kind == OptimizerKind::kAdam) {
    s.m = Tensor(p.value.rows(), p.value.cols());
    s.v = Tensor(p.value.rows(), p.value.cols());
  }
  if (p.row_sparse()) s.last_step.assign(p.value.rows(), 0);
  return slots_.emplace(p.name, std::move(s)).first->second;
}

const Tensor& Optimizer::first_moment(const std::string& name) const {
  auto it = slots_.find(name);
  if (it == slots_.end()) throw Error("optimizer: no state for '" + name + "'");
  return it->second.m;
}

const Tensor& Optimizer::second_moment(const std::string& name) const {
  auto it = slots_.find(name);
  if (it == slots_.end()) throw Error("optimizer: no state for '" + name + "'");
  return it->second.v;
}

void Optimizer::update_row(Parameter& p, Slot& s, std::size_t row, double decay1,
                           double decay2, double step_size, double bias2) {
  auto value = p.value.row_span(row);
  const auto grad = p.grad.row_span(row);
  auto m = s.m.row_span(row);
  auto v = s.v.row_span(row);
  const double b1 = config_.beta1, b2 = config_.beta2;
  for (std::size_t c = 0; c < value.size(); ++c) {
    m[c] = decay1 * m[c] + (1 - b1) * grad[c];
    v[c] = decay2 * v[c] + (1 - b2) * grad[c] * grad[c];
    value[c] -= step_size * m[c] / (std::sqrt(v[c] / bias2) + config_.epsilon);
  }
}

void Optimizer::step(ParamStore& params, std::size_t batch_size) {
  ++t_;
  for (auto& pp : params) {
    Parameter& p = *pp;
    if (p.role == ParamRole::kEmbedding) sparse_l2_gradient(p, config_.l2, batch_size);
    double weight_decay = 0;
    if (p.role == ParamRole::kAttention) weight_decay = config_.l2_attention;
    if (p.role == ParamRole::kDense) weight_decay = config_.l2_global;
    if (weight_decay > 0) {
      auto g = p.grad.values();
      const auto v = p.value.values();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += weight_decay * v[i];
    }
    if (!p.grad.all_finite()) throw Error("non-finite gradient for '" + p.name + "'");
  }

  const double t = static_cast<double>(t_);
  const double bias1 = 1 - std::pow(config_.beta1, t);
  const double bias2 = 1 - std::pow(config_.beta2, t);
  const double step_size = config_.lr / bias1;

  for (auto& pp : params) {
    Parameter& p = *pp;
    Slot& s = slot(p);
    const bool sparse = config_.sparse_update && p.row_sparse();
    if (config_.kind == OptimizerKind::kSgd) {
      if (sparse) {
        for (auto row : p.touched_rows()) {
          auto value = p.value.row_span(row);
          const auto grad = p.grad.row_span(row);
          for (std::size_t c = 0; c < value.size(); ++c) value[c] -= config_.lr * grad[c];
        }
      } else {
        auto value = p.value.values();
        const auto grad = p.grad.values();
        for (std::size_t i = 0; i < value.size(); ++i) value[i] -= config_.lr * grad[i];
      }
      continue;
    }
    if (sparse) {
      for (auto row : p.touched_rows()) {
        const double gap = static_cast<double>(t_ - s.last_step[row]);
        update_row(p, s, row, std::pow(config_.beta1, gap), std::pow(config_.beta2, gap),
                   step_size, bias2);
        s.last_step[row] = t_;
      }
    } else {
      for (std::size_t row = 0; row < p.value.rows(); ++row) {
        update_row(p, s, row, config_.beta1, config_.beta2, step_size, bias2);
      }
      for (auto& last : s.last_step) last = t_;
    }
  }
}

double gstar(double epsilon, double beta2, double t) {
  return epsilon / std::sqrt((1 - beta2) / (1 - std::pow(beta2, t)));
}

double adam_estimate(double g, double t, double beta1, double beta2, double epsilon) {
  const double a = (1 - beta1) / (1 - std::pow(beta1, t));
  const double b = std::sqrt((1 - beta2) / (1 - std::pow(beta2, t)));
  return g * a / (g * b + epsilon);
}

double long_tail_gradient(double g, double t, double window, double beta1, double beta2,
                          double epsilon) {
  const double num = (1 - beta1) * std::pow(beta1, window) / (1 - std::pow(beta1, t + window));
  const double den =
      std::sqrt((1 - beta2) * std::pow(beta2, window) / (1 - std::pow(beta2, t + window)));
  return num / (den + epsilon / g);
}

double unbalance_gradient_expectation(double alpha, double mean_sigma) {
  if (!(alpha > 0 && alpha < 1)) throw Error("positive ratio must be in (0, 1)");
  return alpha * (mean_sigma / alpha - 1);
}

}  // namespace ctrkit
