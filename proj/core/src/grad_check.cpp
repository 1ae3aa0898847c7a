#include "lim/grad_check.hpp"

#include <cmath>

#include "lim/error.hpp"

namespace lim {

GradCheckReport grad_check(const ScalarComputation& computation, std::vector<Tensor> params,
                           double h) {
  if (!(h >= 1e-6 && h <= 1e-4)) {
    throw DomainError("grad_check: step " + std::to_string(h) + " outside [1e-6, 1e-4]");
  }
  if (params.empty()) throw DomainError("grad_check: no parameters");

  std::vector<Tensor> grads;
  const double base = computation(params, &grads);
  if (!std::isfinite(base)) throw NumericError("grad_check: non-finite loss at the base point");
  if (grads.size() != params.size()) {
    throw ContractError("grad_check: computation returned " + std::to_string(grads.size()) +
                        " gradients for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!grads[p].same_shape(params[p])) {
      throw ContractError("grad_check: gradient " + std::to_string(p) + " has shape " +
                          shape_to_string(grads[p].shape()) + ", parameter has " +
                          shape_to_string(params[p].shape()));
    }
  }

  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto coords = params[p].data();
    for (std::size_t i = 0; i < coords.size(); ++i) {
      const double saved = coords[i];
      coords[i] = saved + h;
      const double up = computation(params, nullptr);
      coords[i] = saved - h;
      const double down = computation(params, nullptr);
      coords[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("grad_check: non-finite loss at a perturbed point (param " +
                           std::to_string(p) + ", coord " + std::to_string(i) + ")");
      }
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = grads[p].data()[i];
      const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(analytic - numeric) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = p;
        report.worst_coord = i;
        report.analytic = analytic;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace lim
