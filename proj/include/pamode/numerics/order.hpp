#pragma once

/// Empirical convergence-order estimation by step halving. Validates the
/// Butcher tableaus: Tsit5 should report p ≈ 5, RK4 p ≈ 4 on smooth
/// problems with analytic solutions.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "pamode/numerics/rk.hpp"

namespace pamode {

struct OrderEstimate {
  double order = 0.0;
  bool saturated = false;           // errors at rounding level; order undefined
  std::vector<double> errors;       // final-time error per step size
  std::vector<double> steps;
};

/// Integrates to t1 at h0, h0/2, ... and fits p from log2 error ratios.
/// `exact` maps t to the true state.
template <OdeField F, class Exact>
OrderEstimate estimate_order(const F& field, const Exact& exact,
                             const std::array<double, F::kDim>& x0, double t0, double t1,
                             double h0, OdeMethod method, int halvings = 3) {
  constexpr std::size_t N = F::kDim;
  OrderEstimate est;

  double scale = 1.0;
  {
    const std::array<double, N> ref = exact(t1);
    for (std::size_t d = 0; d < N; ++d) scale = std::max(scale, std::abs(ref[d]));
  }

  double h = h0;
  for (int i = 0; i <= halvings; ++i) {
    OdeSolveSpec spec;
    spec.t0 = t0;
    spec.t1 = t1;
    spec.step = h;
    spec.method = method;
    spec.sample_times = {t1};
    const SolveResult<N> sol = integrate(field, x0, spec);
    const std::array<double, N> ref = exact(t1);
    double err = 0.0;
    for (std::size_t d = 0; d < N; ++d)
      err = std::max(err, std::abs(sol.states.back()[d] - ref[d]));
    est.errors.push_back(err);
    est.steps.push_back(h);
    h *= 0.5;
  }

  // Ratios where either error sits at the accumulated-rounding floor say
  // nothing about truncation order; drop them, then take the median ratio
  // (robust against error-coefficient cancellations at coarse steps).
  const double floor = 30.0 * 2.220446049250313e-16 * scale;
  std::vector<double> ratios;
  for (std::size_t i = 0; i + 1 < est.errors.size(); ++i) {
    if (est.errors[i] <= floor || est.errors[i + 1] <= floor) continue;
    ratios.push_back(std::log2(est.errors[i] / est.errors[i + 1]));
  }
  if (ratios.empty()) {
    est.saturated = true;
    return est;
  }
  std::sort(ratios.begin(), ratios.end());
  const std::size_t mid = ratios.size() / 2;
  est.order = ratios.size() % 2 == 1 ? ratios[mid] : 0.5 * (ratios[mid - 1] + ratios[mid]);
  return est;
}

}  // namespace pamode
