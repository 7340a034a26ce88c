#pragma once

#include <functional>
#include <string>

#include "ctrkit/graph.h"
#include "ctrkit/params.h"

namespace ctrkit {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_coordinate = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
  /// Coordinates whose ±h probes crossed a ReLU/SELU kink; not compared.
  std::size_t skipped_kinks = 0;
  bool passed = true;
};

/// Builds the scalar loss on a fresh graph.
using LossBuilder = std::function<NodeId(Graph&)>;

/// Compares backward() against central differences (L(θ+h) − L(θ−h)) / 2h
/// for every coordinate of `params`. Relative error per coordinate is
/// |g_a − g_fd| / max(|g_a|, |g_fd|, min_scale); coordinates whose gradient
/// is below `min_scale` are effectively compared with absolute tolerance
/// `tolerance * min_scale`. Probes that land on different sides of a
/// ReLU/SELU kink than the base point are skipped and counted.
GradCheckReport grad_check(const LossBuilder& loss, ParamStore& params, double h,
                           double tolerance, double min_scale = 1e-4);

}  // namespace ctrkit
