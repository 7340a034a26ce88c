#include "ctrkit/gradcheck.h"

#include <algorithm>
#include <cmath>

namespace ctrkit {
namespace {

struct Probe {
  double loss;
  std::uint64_t signature;
};

Probe evaluate(const LossBuilder& loss) {
  Graph g(false);
  const double value = g.value(loss(g))[0];
  if (!std::isfinite(value)) throw Error("grad_check: non-finite loss");
  return {value, g.kink_signature()};
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& loss, ParamStore& params, double h,
                           double tolerance, double min_scale) {
  if (!(h > 0)) throw Error("grad_check: step must be positive");
  params.zero_grad();
  std::uint64_t base_signature;
  {
    Graph g(false);
    const NodeId root = loss(g);
    if (!std::isfinite(g.value(root)[0])) throw Error("grad_check: non-finite loss");
    base_signature = g.kink_signature();
    g.backward(root);
  }
  GradCheckReport report;
  for (auto& p : params) {
    const Tensor analytic = p->grad;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const Probe up = evaluate(loss);
      p->value[i] = saved - h;
      const Probe down = evaluate(loss);
      p->value[i] = saved;
      ++report.coordinates;
      if (up.signature != base_signature || down.signature != base_signature) {
        ++report.skipped_kinks;
        continue;
      }
      const double numeric = (up.loss - down.loss) / (2 * h);
      const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), min_scale});
      const double err = std::abs(analytic[i] - numeric) / scale;
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_parameter = p->name;
        report.worst_coordinate = i;
        report.worst_analytic = analytic[i];
        report.worst_numeric = numeric;
      }
    }
  }
  params.zero_grad();
  report.passed = report.max_relative_error < tolerance;
  return report;
}

}  // namespace ctrkit
