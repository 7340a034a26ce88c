#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "ctrkit/tensor.h"

namespace ctrkit {

enum class Activation { kIdentity, kRelu, kTanh, kElu, kSelu, kSigmoid };

Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation act);

// Self-normalizing constants.
inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;
inline constexpr double kLayerNormEpsilon = 1e-8;

double sigmoid(double x);
double selu(double x);
double activate(Activation act, double x);
/// Derivative expressed through the pre-activation `x` and output `y`.
double activation_derivative(Activation act, double x, double y);

/// Numerically stable sigmoid cross-entropy on a logit.
double logloss(double logit, double label);

/// Normalizes one instance over its full width, then applies gain and shift.
std::vector<double> layer_norm(std::span<const double> x, std::span<const double> gain,
                               std::span<const double> shift,
                               double epsilon = kLayerNormEpsilon);

/// Normalizes an `m x d` block of subnet outputs with statistics pooled over
/// all `m*d` entries; gain and shift have length `d` and are shared across
/// subnets.
Tensor fused_layer_norm(const Tensor& subnet_outputs, std::span<const double> gain,
                        std::span<const double> shift, double epsilon = kLayerNormEpsilon);

/// Inverted dropout on a copy of `input`. Identity when not training.
Tensor dropout(const Tensor& input, double rate, std::uint64_t seed, bool training);

}  // namespace ctrkit
