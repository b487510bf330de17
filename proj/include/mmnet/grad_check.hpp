#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

#include "mmnet/tensor.hpp"

namespace mmnet {

// Central-difference verification of the recorded backward rules.
//
// f must be a deterministic scalar-valued function of x that rebuilds its
// graph on every call (parameters it closes over are fine). Returns the
// maximum over entries of |analytic - numeric| / max(1, |analytic|, |numeric|).
inline double grad_check(const std::function<Tensor(Tensor&)>& f, Tensor x, double eps = 1e-5) {
  if (!x.all_finite()) throw std::invalid_argument("grad_check: input has non-finite entries");

  const double probe0 = f(x).item();
  const double probe1 = f(x).item();
  if (probe0 != probe1) {
    throw std::runtime_error("grad_check: function is not deterministic (two forward passes disagree)");
  }

  const bool had_grad_flag = x.requires_grad();
  x.set_requires_grad(true);
  x.zero_grad();
  Tensor loss = f(x);
  backward(loss);
  std::vector<double> analytic = x.grad();
  x.zero_grad();
  x.set_requires_grad(had_grad_flag);

  double max_rel = 0.0;
  auto& data = x.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double saved = data[i];
    data[i] = saved - eps;
    const double fm = f(x).item();
    data[i] = saved + eps;
    const double fp = f(x).item();
    data[i] = saved;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double denom = std::max({1.0, std::fabs(analytic[i]), std::fabs(numeric)});
    max_rel = std::max(max_rel, std::fabs(analytic[i] - numeric) / denom);
  }
  return max_rel;
}

}  // namespace mmnet
