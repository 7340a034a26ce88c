#include "ctrkit/ops.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace ctrkit {

Activation parse_activation(std::string_view name) {
  if (name == "identity" || name == "linear") return Activation::kIdentity;
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "elu") return Activation::kElu;
  if (name == "selu") return Activation::kSelu;
  if (name == "sigmoid") return Activation::kSigmoid;
  throw Error("unknown activation '" + std::string(name) + "'");
}

std::string_view activation_name(Activation act) {
  switch (act) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kElu: return "elu";
    case Activation::kSelu: return "selu";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "identity";
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double selu(double x) {
  return x > 0 ? kSeluLambda * x : kSeluLambda * (kSeluAlpha * std::exp(x) - kSeluAlpha);
}

double activate(Activation act, double x) {
  switch (act) {
    case Activation::kIdentity: return x;
    case Activation::kRelu: return x > 0 ? x : 0.0;
    case Activation::kTanh: return std::tanh(x);
    case Activation::kElu: return x > 0 ? x : std::expm1(x);
    case Activation::kSelu: return selu(x);
    case Activation::kSigmoid: return sigmoid(x);
  }
  return x;
}

double activation_derivative(Activation act, double x, double y) {
  switch (act) {
    case Activation::kIdentity: return 1.0;
    case Activation::kRelu: return x > 0 ? 1.0 : 0.0;
    case Activation::kTanh: return 1.0 - y * y;
    case Activation::kElu: return x > 0 ? 1.0 : y + 1.0;
    case Activation::kSelu: return x > 0 ? kSeluLambda : y + kSeluLambda * kSeluAlpha;
    case Activation::kSigmoid: return y * (1.0 - y);
  }
  return 1.0;
}

double logloss(double logit, double label) {
  return std::max(logit, 0.0) - logit * label + std::log1p(std::exp(-std::abs(logit)));
}

std::vector<double> layer_norm(std::span<const double> x, std::span<const double> gain,
                               std::span<const double> shift, double epsilon) {
  if (x.empty()) throw Error("layer_norm: empty input");
  if (gain.size() != x.size() || shift.size() != x.size()) {
    throw Error("layer_norm: gain/shift width does not match input width");
  }
  double mean = 0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  const double denom = std::sqrt(var + epsilon);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) / denom * gain[i] + shift[i];
  return out;
}

Tensor fused_layer_norm(const Tensor& subnet_outputs, std::span<const double> gain,
                        std::span<const double> shift, double epsilon) {
  const std::size_t m = subnet_outputs.rows();
  const std::size_t d = subnet_outputs.cols();
  if (m == 0 || d == 0) throw Error("fused_layer_norm: empty input");
  if (gain.size() != d || shift.size() != d) {
    throw Error("fused_layer_norm: gain/shift width does not match subnet width");
  }
  const auto values = subnet_outputs.values();
  double mean = 0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  const double denom = std::sqrt(var + epsilon);
  Tensor out(m, d);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      out(r, c) = (subnet_outputs(r, c) - mean) / denom * gain[c] + shift[c];
    }
  }
  return out;
}

Tensor dropout(const Tensor& input, double rate, std::uint64_t seed, bool training) {
  if (rate < 0 || rate >= 1) throw Error("dropout: rate must be in [0, 1)");
  if (!training || rate == 0) return input;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution drop(rate);
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor out = input;
  for (auto& v : out.values()) v = drop(rng) ? 0.0 : v * keep_scale;
  return out;
}

}  // namespace ctrkit
