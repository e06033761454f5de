#pragma once

#include <cmath>
#include <functional>

#include "ser/tensor.hpp"

namespace ser::nn {

// A differentiable scalar function of a tensor. When want_grad is true the
// function must fill x.grad with the analytic gradient of its return value.
using ScalarFn = std::function<double(Tensor<double>&, bool want_grad)>;

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central-difference check of f's analytic gradient at x. Returns the max
// over coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
inline GradCheckResult grad_check(const ScalarFn& f, Tensor<double>& x,
                                  double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3))
    throw std::domain_error("grad_check: eps must be in [1e-7, 1e-3]");

  x.alloc_grad();
  const double f0 = f(x, true);
  if (!std::isfinite(f0)) throw numeric_error("grad_check: non-finite value");
  std::vector<double> analytic = x.grad;

  GradCheckResult res;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double saved = x.values[i];
    x.values[i] = saved + eps;
    const double fp = f(x, false);
    x.values[i] = saved - eps;
    const double fm = f(x, false);
    x.values[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw numeric_error("grad_check: non-finite value during perturbation");
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic[i];
    const double rel =
        std::fabs(a - numeric) / std::max(1e-8, std::fabs(a) + std::fabs(numeric));
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_index = i;
      res.worst_analytic = a;
      res.worst_numeric = numeric;
    }
  }
  return res;
}

}  // namespace ser::nn
