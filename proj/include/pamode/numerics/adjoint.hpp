#pragma once

/// Gradient propagation through the fixed-step solver, discretize-then-
/// optimize style: the forward pass tapes every stage input, the backward
/// pass walks the step arithmetic in exact reverse using the field's
/// vector-Jacobian products. Gradients therefore match finite differences
/// of the same discrete solve, not of the continuous flow.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "pamode/common.hpp"
#include "pamode/numerics/rk.hpp"

namespace pamode {

struct NonFiniteGradient : NonFiniteState {
  using NonFiniteState::NonFiniteState;
};

template <class F>
concept GradOdeField =
    OdeField<F> && requires(F& f, const F& cf, std::span<const double> p, double t,
                            const std::array<double, F::kDim>& y,
                            const std::array<double, F::kDim>& kbar,
                            std::array<double, F::kDim>& ybar, std::span<double> pbar) {
      f.load_params(p);
      { cf.param_count() } -> std::convertible_to<std::size_t>;
      cf.vjp(t, y, kbar, ybar, pbar);
    };

template <class L, std::size_t N>
concept SampleLoss = requires(const L& l, const std::vector<std::array<double, N>>& s,
                              std::vector<std::array<double, N>>& g) {
  { l.eval(s) } -> std::convertible_to<double>;
  l.grad(s, g);
};

/// Record of one forward solve: node states, step sizes, stage inputs, and
/// where each sample fell. Replaying the steps reproduces the forward
/// output bit-identically (same arithmetic, same order).
template <std::size_t N>
struct GradTape {
  static constexpr std::size_t kNoStep = static_cast<std::size_t>(-1);

  struct SampleRef {
    std::size_t step;  // kNoStep for samples consumed at t0
    double theta;
  };

  std::vector<double> node_t;                  // steps + 1 entries
  std::vector<std::array<double, N>> node_y;   // steps + 1 entries
  std::vector<double> step_h;
  std::vector<std::array<std::array<double, N>, detail::kMaxStages>> stage_inputs;
  std::vector<SampleRef> samples;
};

template <std::size_t N>
struct GradResult {
  double value = 0.0;
  std::vector<double> grad_params;
  std::array<double, N> grad_x0{};
  std::vector<std::array<double, N>> samples;
  GradTape<N> tape;
};

/// Solves the ODE, evaluates `loss` on the sampled trajectory, and returns
/// d(loss)/d(params) and d(loss)/d(x0) for the discrete solve.
template <class F, class L>
  requires GradOdeField<F> && SampleLoss<L, F::kDim>
GradResult<F::kDim> integrate_with_grad(F& field, std::span<const double> params,
                                        const std::array<double, F::kDim>& x0,
                                        const OdeSolveSpec& spec, const L& loss) {
  constexpr std::size_t N = F::kDim;
  spec.validate();
  if (params.size() != field.param_count())
    throw std::invalid_argument("integrate_with_grad: parameter count mismatch");
  if (!all_finite(x0)) throw NonFiniteState("integrate_with_grad: x0 not finite");

  field.load_params(params);
  const detail::Tableau& tb = detail::tableau_for(spec.method);

  GradResult<N> result;
  GradTape<N>& tape = result.tape;
  result.samples.resize(spec.sample_times.size());

  const std::size_t est_steps =
      static_cast<std::size_t>((spec.t1 - spec.t0) / spec.step) + 2;
  tape.node_t.reserve(est_steps + 1);
  tape.node_y.reserve(est_steps + 1);
  tape.step_h.reserve(est_steps);
  tape.stage_inputs.reserve(est_steps);
  tape.samples.resize(spec.sample_times.size());

  // --- Forward pass -------------------------------------------------------
  std::array<double, N> y = x0;
  std::array<double, N> f_y{};
  field.eval(spec.t0, y, f_y);
  if (!all_finite(f_y)) throw NonFiniteState("integrate_with_grad: field not finite at t0");
  tape.node_t.push_back(spec.t0);
  tape.node_y.push_back(y);

  std::size_t si = 0;
  const std::size_t ns = spec.sample_times.size();
  while (si < ns && spec.sample_times[si] <= spec.t0) {
    result.samples[si] = y;
    tape.samples[si] = {GradTape<N>::kNoStep, 0.0};
    ++si;
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
      throw NonFiniteState("integrate_with_grad: state became non-finite");

    tape.step_h.push_back(h);
    tape.stage_inputs.push_back(z);

    while (si < ns && spec.sample_times[si] <= t_next + 1e-12 * spec.step) {
      const double theta = detail::snap_theta((spec.sample_times[si] - t) / h);
      if (theta == 1.0) {
        result.samples[si] = y_next;
      } else {
        detail::hermite_eval(theta, h, y, y_next, f_y, f_next, result.samples[si]);
      }
      tape.samples[si] = {step_index, theta};
      ++si;
    }

    y = y_next;
    f_y = f_next;
    t = t_next;
    tape.node_t.push_back(t);
    tape.node_y.push_back(y);
    ++step_index;
  }
  while (si < ns) {
    result.samples[si] = y;
    tape.samples[si] = {step_index == 0 ? GradTape<N>::kNoStep : step_index - 1, 1.0};
    ++si;
  }

  result.value = loss.eval(result.samples);

  // --- Backward pass ------------------------------------------------------
  std::vector<std::array<double, N>> sample_bar(ns);
  for (auto& g : sample_bar) g.fill(0.0);
  loss.grad(result.samples, sample_bar);

  result.grad_params.assign(field.param_count(), 0.0);
  std::span<double> pbar(result.grad_params);

  std::array<double, N> abar{};  // adjoint of the node at the step's right end
  abar.fill(0.0);

  std::array<std::array<double, N>, detail::kMaxStages> g{};
  std::array<double, N> kbar{};
  std::array<double, N> extra0{};

  std::size_t sref = ns;  // walk samples from the back, grouped by step
  const std::size_t n_steps = tape.step_h.size();
  for (std::size_t sn = n_steps; sn-- > 0;) {
    const double h = tape.step_h[sn];
    const double tn = tape.node_t[sn];
    const std::array<double, N>& yn = tape.node_y[sn];
    const std::array<double, N>& yn1 = tape.node_y[sn + 1];
    const auto& zin = tape.stage_inputs[sn];

    extra0.fill(0.0);
    while (sref > 0 && tape.samples[sref - 1].step == sn) {
      --sref;
      const double theta = tape.samples[sref].theta;
      const std::array<double, N>& ybar = sample_bar[sref];
      if (theta == 1.0) {
        for (std::size_t d = 0; d < N; ++d) abar[d] += ybar[d];
        continue;
      }
      const double q = theta * (theta - 1.0);
      const double w = 1.0 - 2.0 * theta;
      const double c1 = theta + q * w;
      const double c0 = (1.0 - theta) - q * w;
      const double cf1 = q * theta * h;
      const double cf0 = q * (theta - 1.0) * h;
      for (std::size_t d = 0; d < N; ++d) abar[d] += c1 * ybar[d];
      for (std::size_t d = 0; d < N; ++d) kbar[d] = cf1 * ybar[d];
      field.vjp(tape.node_t[sn + 1], yn1, kbar, abar, pbar);
      for (std::size_t d = 0; d < N; ++d) extra0[d] += c0 * ybar[d];
      for (std::size_t d = 0; d < N; ++d) kbar[d] = cf0 * ybar[d];
      field.vjp(tn, yn, kbar, extra0, pbar);
    }

    for (std::size_t i = tb.stages; i-- > 0;) {
      bool nonzero = false;
      for (std::size_t d = 0; d < N; ++d) {
        double acc = h * tb.b[i] * abar[d];
        for (std::size_t m = i + 1; m < tb.stages; ++m) {
          const double w = tb.a[m][i];
          if (w != 0.0) acc += h * w * g[m][d];
        }
        kbar[d] = acc;
        nonzero = nonzero || (acc != 0.0);
      }
      g[i].fill(0.0);
      if (nonzero) field.vjp(tn + tb.c[i] * h, zin[i], kbar, g[i], pbar);
    }
    for (std::size_t i = 0; i < tb.stages; ++i)
      for (std::size_t d = 0; d < N; ++d) abar[d] += g[i][d];
    for (std::size_t d = 0; d < N; ++d) abar[d] += extra0[d];
  }

  while (sref > 0 && tape.samples[sref - 1].step == GradTape<N>::kNoStep) {
    --sref;
    for (std::size_t d = 0; d < N; ++d) abar[d] += sample_bar[sref][d];
  }

  result.grad_x0 = abar;
  if (!all_finite(result.grad_params) || !all_finite(result.grad_x0))
    throw NonFiniteGradient("integrate_with_grad: gradient not finite");
  return result;
}

}  // namespace pamode
