#pragma once

/// Deterministic fixed-step explicit Runge–Kutta integration with dense
/// output. Two methods are provided: the Tsitouras 5(4) pair's fifth-order
/// propagator (FSAL, 6 effective stages) and classic RK4. Sample times are
/// reported through cubic Hermite interpolation between steps, which is
/// exact at step boundaries.

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "pamode/common.hpp"

namespace pamode {

enum class OdeMethod { Tsit5, RK4 };

struct OdeSolveSpec {
  double t0 = 0.0;
  double t1 = 1.0;
  double step = 1e-3;
  std::vector<double> sample_times;
  OdeMethod method = OdeMethod::Tsit5;

  void validate() const {
    if (!(t1 > t0)) throw std::invalid_argument("OdeSolveSpec: t1 must exceed t0");
    if (!(step > 0.0)) throw std::invalid_argument("OdeSolveSpec: step must be positive");
    double prev = t0;
    bool first = true;
    for (double ts : sample_times) {
      if (ts < t0 || ts > t1) throw std::invalid_argument("OdeSolveSpec: sample outside [t0, t1]");
      if (!first && ts <= prev) throw std::invalid_argument("OdeSolveSpec: samples must be strictly increasing");
      prev = ts;
      first = false;
    }
  }
};

template <std::size_t N>
struct SolveResult {
  std::vector<double> sample_times;
  std::vector<std::array<double, N>> states;
  std::size_t steps_taken = 0;
};

namespace detail {

inline constexpr std::size_t kMaxStages = 7;

struct Tableau {
  std::size_t stages;
  bool fsal;  // last stage equals f(t+h, y_next)
  std::array<double, kMaxStages> c;
  std::array<double, kMaxStages> b;
  std::array<std::array<double, kMaxStages>, kMaxStages> a;
};

/// Tsitouras 5(4): fifth-order weights only (fixed-step use, no embedded
/// error estimate). The seventh stage input equals y_next, so its slope is
/// reused as the next step's first stage.
inline constexpr Tableau kTsit5{
    7,
    true,
    {0.0, 0.161, 0.327, 0.9, 0.9800255409045097, 1.0, 1.0},
    {0.09646076681806523, 0.01, 0.4798896504144996, 1.379008574103742,
     -3.290069515436081, 2.324710524099774, 0.0},
    {{{0, 0, 0, 0, 0, 0, 0},
      {0.161, 0, 0, 0, 0, 0, 0},
      {-0.008480655492356989, 0.335480655492357, 0, 0, 0, 0, 0},
      {2.8971530571054935, -6.359448489975075, 4.3622954328695815, 0, 0, 0, 0},
      {5.325864828439257, -11.748883564062828, 7.4955393428898365,
       -0.09249506636175525, 0, 0, 0},
      {5.86145544294642, -12.92096931784711, 8.159367898576159,
       -0.071584973281401, -0.028269050394068383, 0, 0},
      {0.09646076681806523, 0.01, 0.4798896504144996, 1.379008574103742,
       -3.290069515436081, 2.324710524099774, 0}}}};

inline constexpr Tableau kRk4{
    4,
    false,
    {0.0, 0.5, 0.5, 1.0, 0, 0, 0},
    {1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0, 0, 0, 0},
    {{{0, 0, 0, 0, 0, 0, 0},
      {0.5, 0, 0, 0, 0, 0, 0},
      {0.0, 0.5, 0, 0, 0, 0, 0},
      {0.0, 0.0, 1.0, 0, 0, 0, 0}}}};

[[nodiscard]] inline const Tableau& tableau_for(OdeMethod m) {
  return m == OdeMethod::Tsit5 ? kTsit5 : kRk4;
}

/// Cubic Hermite basis on [0, 1]; theta = 0 and 1 reproduce the endpoints
/// exactly (the q factor vanishes).
template <std::size_t N>
void hermite_eval(double theta, double h, const std::array<double, N>& y0,
                  const std::array<double, N>& y1, const std::array<double, N>& f0,
                  const std::array<double, N>& f1, std::array<double, N>& out) {
  const double q = theta * (theta - 1.0);
  const double w = 1.0 - 2.0 * theta;
  const double c0 = (1.0 - theta) - q * w;
  const double c1 = theta + q * w;
  const double cf0 = q * (theta - 1.0) * h;
  const double cf1 = q * theta * h;
  for (std::size_t i = 0; i < N; ++i)
    out[i] = c0 * y0[i] + c1 * y1[i] + cf0 * f0[i] + cf1 * f1[i];
}

/// One explicit RK step. `f_y` must hold field(t, y); stage inputs are
/// written to `z` (z[0] = y) and stage slopes to `k` for reuse by the
/// adjoint pass. Returns f(t+h, y_next) in `f_next`.
template <class F, std::size_t N>
void rk_step(const F& field, const Tableau& tb, double t, double h,
             const std::array<double, N>& y, const std::array<double, N>& f_y,
             std::array<double, N>& y_next, std::array<double, N>& f_next,
             std::array<std::array<double, N>, kMaxStages>& z,
             std::array<std::array<double, N>, kMaxStages>& k) {
  z[0] = y;
  k[0] = f_y;
  for (std::size_t i = 1; i < tb.stages; ++i) {
    std::array<double, N>& zi = z[i];
    zi = y;
    for (std::size_t j = 0; j < i; ++j) {
      const double w = h * tb.a[i][j];
      if (w == 0.0) continue;
      for (std::size_t d = 0; d < N; ++d) zi[d] += w * k[j][d];
    }
    field.eval(t + tb.c[i] * h, zi, k[i]);
  }
  y_next = y;
  for (std::size_t i = 0; i < tb.stages; ++i) {
    const double w = h * tb.b[i];
    if (w == 0.0) continue;
    for (std::size_t d = 0; d < N; ++d) y_next[d] += w * k[i][d];
  }
  if (tb.fsal) {
    f_next = k[tb.stages - 1];
  } else {
    field.eval(t + h, y_next, f_next);
  }
}

/// Snap near-integer interpolation parameters so that samples intended to
/// lie on the step grid use node states exactly.
[[nodiscard]] inline double snap_theta(double theta) {
  if (std::abs(theta) < 1e-9) return 0.0;
  if (std::abs(theta - 1.0) < 1e-9) return 1.0;
  return theta;
}

}  // namespace detail

template <class F>
concept OdeField = requires(const F& f, double t, const std::array<double, F::kDim>& y,
                            std::array<double, F::kDim>& dy) {
  { F::kDim } -> std::convertible_to<std::size_t>;
  f.eval(t, y, dy);
};

/// Integrates `field` from x0 over spec's span, reporting the solution at
/// spec.sample_times. Fixed step; the final step is clipped to land on t1.
template <OdeField F>
SolveResult<F::kDim> integrate(const F& field, const std::array<double, F::kDim>& x0,
                               const OdeSolveSpec& spec) {
  constexpr std::size_t N = F::kDim;
  spec.validate();
  if (!all_finite(x0)) throw NonFiniteState("integrate: x0 not finite");

  const detail::Tableau& tb = detail::tableau_for(spec.method);
  SolveResult<N> result;
  result.sample_times = spec.sample_times;
  result.states.resize(spec.sample_times.size());

  std::array<double, N> y = x0;
  std::array<double, N> f_y{};
  field.eval(spec.t0, y, f_y);
  if (!all_finite(f_y)) throw NonFiniteState("integrate: field not finite at t0");

  std::size_t si = 0;
  const std::size_t ns = spec.sample_times.size();
  while (si < ns && spec.sample_times[si] <= spec.t0) {
    result.states[si++] = y;
  }

  std::array<std::array<double, N>, detail::kMaxStages> z{};
  std::array<std::array<double, N>, detail::kMaxStages> k{};
  std::array<double, N> y_next{};
  std::array<double, N> f_next{};

  double t = spec.t0;
  std::size_t step_index = 0;
  while (t < spec.t1) {
    const double t_target = spec.t0 + static_cast<double>(step_index + 1) * spec.step;
    const double t_next = std::min(t_target, spec.t1);
    const double h = t_next - t;
    if (h <= 0.0) break;

    detail::rk_step(field, tb, t, h, y, f_y, y_next, f_next, z, k);
    if (!all_finite(y_next) || !all_finite(f_next))
      throw NonFiniteState("integrate: state became non-finite");

    while (si < ns && spec.sample_times[si] <= t_next + 1e-12 * spec.step) {
      const double theta = detail::snap_theta((spec.sample_times[si] - t) / h);
      if (theta == 1.0) {
        result.states[si] = y_next;
      } else {
        detail::hermite_eval(theta, h, y, y_next, f_y, f_next, result.states[si]);
      }
      ++si;
    }

    y = y_next;
    f_y = f_next;
    t = t_next;
    ++step_index;
  }
  // Samples at (or within rounding of) t1 that the loop did not consume.
  while (si < ns) result.states[si++] = y;

  result.steps_taken = step_index;
  return result;
}

}  // namespace pamode
