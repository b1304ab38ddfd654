#pragma once
// Offline feedforward synthesis on the learned force map: finite-difference
// stiffness evaluation, per-timestep constrained mass optimization with warm
// starting, gas-law pressure lookup generation, and the equilibrium-point
// baseline used for comparison.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pamode/common.hpp"
#include "pamode/hybrid_model.hpp"
#include "pamode/numerics/optim.hpp"
#include "pamode/physics.hpp"

namespace pamode {

// Force map abstraction: net force in N as a function of displacement (mm),
// velocity (mm/s), and chamber air masses (g). The learned net is one
// instance; tests substitute analytic maps with known stiffness.
using ForceMap = std::function<double(double x_mm, double xdot_mm_s, double mf_g, double me_g)>;

[[nodiscard]] inline ForceMap force_map(const HybridModel& model) {
  return [&model](double x_mm, double xdot_mm_s, double mf_g, double me_g) {
    return model.net.forward(x_mm, xdot_mm_s, mf_g, me_g);
  };
}

inline constexpr double kStencilDefaultMm = 0.1;   // bridges activation kinks
inline constexpr double kForceTolN = 1e-6;         // epsilon in the penalty
inline constexpr double kPenaltyLambda = 1e6;      // exact-penalty weight
inline constexpr double kFeasibleResidualN = 0.1;  // Infeasible flag threshold
inline constexpr double kFeasibleKRel = 0.02;      // Khat must meet K_d this closely
inline constexpr double kMaxGaugeKpa = pa_to_kpa(psi_to_pa(80.0));

// Four-point slope stencil (f(x+2h) + f(x+h) - f(x-h) - f(x-2h)) / (6h).
// Exact on affine and quadratic maps; bias is 3h^2 f''' on cubics. Wider than
// plain central differences so activation kinks inside the stencil average
// out instead of dominating.
template <class F>
[[nodiscard]] double stiffness_fd(const F& f, double x, double h) {
  if (!(h > 0.0)) throw OutOfRange("stiffness_fd: h must be positive");
  return (f(x + 2.0 * h) + f(x + h) - f(x - h) - f(x - 2.0 * h)) / (6.0 * h);
}

// Restoring stiffness of a force map at an operating point: K = -dF/dx, so a
// stabilizing force map (force decreasing in x) reports positive N/mm.
[[nodiscard]] inline double stiffness_fd(const ForceMap& f, double x_mm, double xdot_mm_s,
                                         double mf_g, double me_g,
                                         double h_mm = kStencilDefaultMm) {
  const auto slice = [&](double x) { return f(x, xdot_mm_s, mf_g, me_g); };
  return -stiffness_fd(slice, x_mm, h_mm);
}

[[nodiscard]] inline double stiffness_fd(const HybridModel& model, double x_mm, double xdot_mm_s,
                                         double mf_g, double me_g,
                                         double h_mm = kStencilDefaultMm) {
  return stiffness_fd(force_map(model), x_mm, xdot_mm_s, mf_g, me_g, h_mm);
}

// Translational-to-rotational stiffness through the pulley: N/mm -> N*m/rad.
[[nodiscard]] inline double convert_stiffness(double k_n_mm, double r_p_m) {
  if (!(r_p_m > 0.0)) throw OutOfRange("convert_stiffness: r_p must be positive");
  return k_n_mm * 1e3 * r_p_m * r_p_m;
}

// Axis-aligned box of admissible chamber masses (g). Defaults come from the
// training grid's coverage; the model is untrustworthy outside it.
struct MassBounds {
  double mf_lo_g = 0.0, mf_hi_g = 0.0;
  double me_lo_g = 0.0, me_hi_g = 0.0;

  void validate() const {
    if (!(mf_lo_g > 0.0) || !(me_lo_g > 0.0) || !(mf_hi_g > mf_lo_g) || !(me_hi_g > me_lo_g))
      throw ConfigError("MassBounds: require 0 < lo < hi on both chambers");
  }
};

// Bounding box of observed mass pairs, padded by pad_frac on each side.
[[nodiscard]] inline MassBounds mass_hull_bounds(const std::vector<std::array<double, 2>>& pairs_g,
                                                 double pad_frac = 0.1) {
  if (pairs_g.empty()) throw ConfigError("mass_hull_bounds: no mass pairs");
  MassBounds b{pairs_g[0][0], pairs_g[0][0], pairs_g[0][1], pairs_g[0][1]};
  for (const auto& p : pairs_g) {
    b.mf_lo_g = std::min(b.mf_lo_g, p[0]);
    b.mf_hi_g = std::max(b.mf_hi_g, p[0]);
    b.me_lo_g = std::min(b.me_lo_g, p[1]);
    b.me_hi_g = std::max(b.me_hi_g, p[1]);
  }
  b.mf_lo_g *= 1.0 - pad_frac;
  b.mf_hi_g *= 1.0 + pad_frac;
  b.me_lo_g *= 1.0 - pad_frac;
  b.me_hi_g *= 1.0 + pad_frac;
  b.validate();
  return b;
}

struct SynthesisConfig {
  double h_mm = kStencilDefaultMm;
  double force_tol_n = kForceTolN;
  double lambda = kPenaltyLambda;
  int multistart_per_dim = 6;  // cold-start grid density; warm steps skip it
};

struct StepPlan {
  double mf_g = 0.0, me_g = 0.0;
  double khat_n_mm = 0.0;  // achieved stiffness at the desired state
  double residual_n = 0.0;
  bool feasible = true;  // residual within kFeasibleResidualN
};

// One timestep of feedforward synthesis: pick sealed masses so the force map
// balances the desired inertial force and its local slope matches K_d.
// Solved as the exact-penalty problem
//   min (Khat - K_d)^2 + lambda * max(0, |m*xddot_d - f| - eps)^2
// warm-started from the previous timestep when a seed is given.
[[nodiscard]] inline StepPlan synthesize_step(const ForceMap& f, double mass_kg, double xd_mm,
                                              double xdotd_mm_s, double xddotd_mm_s2,
                                              double kd_n_mm, const MassBounds& bounds,
                                              std::optional<std::array<double, 2>> warm = {},
                                              const SynthesisConfig& cfg = {}) {
  bounds.validate();
  if (!std::isfinite(kd_n_mm)) throw ConfigError("synthesize_step: K_d must be finite");
  const double target_n = mass_kg * xddotd_mm_s2 * 1e-3;

  const auto objective = [&](const std::vector<double>& z) {
    const double khat = stiffness_fd(f, xd_mm, xdotd_mm_s, z[0], z[1], cfg.h_mm);
    const double force = f(xd_mm, xdotd_mm_s, z[0], z[1]);
    const double viol = std::max(0.0, std::abs(target_n - force) - cfg.force_tol_n);
    return sqr(khat - kd_n_mm) + cfg.lambda * sqr(viol);
  };

  SearchBounds box{{bounds.mf_lo_g, bounds.me_lo_g}, {bounds.mf_hi_g, bounds.me_hi_g}};
  SearchOptions opt;
  if (warm) {
    opt.warm_start = std::vector<double>{(*warm)[0], (*warm)[1]};
    opt.multistart_per_dim = 0;
    opt.pattern_init_frac = 0.05;  // stay local: continuity of the plan
  } else {
    opt.multistart_per_dim = cfg.multistart_per_dim;
  }
  const SearchResult res = direct_search_then_refine(objective, box, opt);

  StepPlan step;
  step.mf_g = res.x[0];
  step.me_g = res.x[1];
  step.khat_n_mm = stiffness_fd(f, xd_mm, xdotd_mm_s, step.mf_g, step.me_g, cfg.h_mm);
  step.residual_n = std::abs(target_n - f(xd_mm, xdotd_mm_s, step.mf_g, step.me_g));
  // Feasible means the step realizes the request: force balance within the
  // residual threshold and the stiffness target met to kFeasibleKRel.
  step.feasible = step.residual_n <= kFeasibleResidualN &&
                  std::abs(step.khat_n_mm - kd_n_mm) <= kFeasibleKRel * std::max(std::abs(kd_n_mm), 1.0);
  return step;
}

[[nodiscard]] inline StepPlan synthesize_step(const HybridModel& model, double xd_mm,
                                              double xdotd_mm_s, double xddotd_mm_s2,
                                              double kd_n_mm, const MassBounds& bounds,
                                              std::optional<std::array<double, 2>> warm = {},
                                              const SynthesisConfig& cfg = {}) {
  return synthesize_step(force_map(model), model.params.m(), xd_mm, xdotd_mm_s, xddotd_mm_s2,
                         kd_n_mm, bounds, warm, cfg);
}

// Desired joint trajectory plus target stiffness, uniformly typed in mm.
struct DesiredProfile {
  std::vector<double> t_s, xd_mm, xdotd_mm_s, xddotd_mm_s2, kd_n_mm;

  [[nodiscard]] std::size_t size() const { return t_s.size(); }

  void validate() const {
    const std::size_t n = t_s.size();
    if (n == 0) throw ConfigError("DesiredProfile: empty");
    if (xd_mm.size() != n || xdotd_mm_s.size() != n || xddotd_mm_s2.size() != n ||
        kd_n_mm.size() != n)
      throw ConfigError("DesiredProfile: channel lengths differ");
    for (std::size_t k = 1; k < n; ++k)
      if (!(t_s[k] > t_s[k - 1])) throw ConfigError("DesiredProfile: times must increase");
  }
};

// x_d = A sin(2 pi f t) with analytic derivatives; each stiffness level is
// held for cycles_per_level full periods.
[[nodiscard]] inline DesiredProfile sinusoid_profile(double amp_mm, double freq_hz,
                                                     const std::vector<double>& kd_levels_n_mm,
                                                     double cycles_per_level, double rate_hz) {
  if (!(freq_hz > 0.0) || !(rate_hz > 0.0) || !(cycles_per_level > 0.0) || kd_levels_n_mm.empty())
    throw ConfigError("sinusoid_profile: positive freq/rate/cycles and >= 1 level required");
  const double level_s = cycles_per_level / freq_hz;
  const double total_s = level_s * static_cast<double>(kd_levels_n_mm.size());
  const auto n = static_cast<std::size_t>(std::llround(total_s * rate_hz)) + 1;
  const double w = 2.0 * kPi * freq_hz;

  DesiredProfile p;
  p.t_s.resize(n);
  p.xd_mm.resize(n);
  p.xdotd_mm_s.resize(n);
  p.xddotd_mm_s2.resize(n);
  p.kd_n_mm.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / rate_hz;
    p.t_s[k] = t;
    p.xd_mm[k] = amp_mm * std::sin(w * t);
    p.xdotd_mm_s[k] = amp_mm * w * std::cos(w * t);
    p.xddotd_mm_s2[k] = -amp_mm * w * w * std::sin(w * t);
    const auto level = std::min(static_cast<std::size_t>(t / level_s), kd_levels_n_mm.size() - 1);
    p.kd_n_mm[k] = kd_levels_n_mm[level];
  }
  return p;
}

// Per-timestep synthesis output plus gas-law pressure commands at x_d.
struct PlanResult {
  DesiredProfile profile;
  std::vector<double> mf_g, me_g, khat_n_mm, residual_n;
  std::vector<double> pf_kpa, pe_kpa;  // gauge commands
  std::vector<bool> feasible;

  [[nodiscard]] std::size_t size() const { return mf_g.size(); }

  [[nodiscard]] std::size_t infeasible_count() const {
    std::size_t c = 0;
    for (const bool ok : feasible) c += ok ? 0 : 1;
    return c;
  }
};

// Gauge pressure command that realizes mass m (g) at displacement x (mm).
[[nodiscard]] inline double mass_to_gauge_kpa(const PhysicalParams& params, Side side, double m_g,
                                              double x_mm) {
  return pa_to_kpa(pressure_from_mass(params, side, m_g * 1e-3, x_mm * 1e-3) - kAtmospherePa);
}

[[nodiscard]] inline PlanResult synthesize_profile(const ForceMap& f, const PhysicalParams& params,
                                                   const DesiredProfile& profile,
                                                   const MassBounds& bounds,
                                                   const SynthesisConfig& cfg = {}) {
  profile.validate();
  PlanResult plan;
  plan.profile = profile;
  const std::size_t n = profile.size();
  plan.mf_g.reserve(n);
  plan.me_g.reserve(n);
  plan.khat_n_mm.reserve(n);
  plan.residual_n.reserve(n);
  plan.pf_kpa.reserve(n);
  plan.pe_kpa.reserve(n);
  plan.feasible.reserve(n);

  std::optional<std::array<double, 2>> warm;
  for (std::size_t k = 0; k < n; ++k) {
    const StepPlan step =
        synthesize_step(f, params.m(), profile.xd_mm[k], profile.xdotd_mm_s[k],
                        profile.xddotd_mm_s2[k], profile.kd_n_mm[k], bounds, warm, cfg);
    warm = std::array<double, 2>{step.mf_g, step.me_g};
    plan.mf_g.push_back(step.mf_g);
    plan.me_g.push_back(step.me_g);
    plan.khat_n_mm.push_back(step.khat_n_mm);
    plan.residual_n.push_back(step.residual_n);
    plan.pf_kpa.push_back(mass_to_gauge_kpa(params, Side::flexor, step.mf_g, profile.xd_mm[k]));
    plan.pe_kpa.push_back(mass_to_gauge_kpa(params, Side::extensor, step.me_g, profile.xd_mm[k]));
    plan.feasible.push_back(step.feasible);
  }
  return plan;
}

[[nodiscard]] inline PlanResult synthesize_profile(const HybridModel& model,
                                                   const DesiredProfile& profile,
                                                   const MassBounds& bounds,
                                                   const SynthesisConfig& cfg = {}) {
  return synthesize_profile(force_map(model), model.params, profile, bounds, cfg);
}

// Sealed-mass schedule for forward simulation of a plan (SI kg signals).
[[nodiscard]] inline ControlInput plan_control_input(const PlanResult& plan) {
  ControlInput input;
  std::vector<double> mf_kg(plan.size()), me_kg(plan.size());
  for (std::size_t k = 0; k < plan.size(); ++k) {
    mf_kg[k] = plan.mf_g[k] * 1e-3;
    me_kg[k] = plan.me_g[k] * 1e-3;
  }
  input.m_f_sched = SampledSignal(plan.profile.t_s, mf_kg);
  input.m_e_sched = SampledSignal(plan.profile.t_s, me_kg);
  return input;
}

// Equilibrium displacement (mm) of the force map at rest for sealed masses:
// bracket a sign change on a uniform scan, then bisect.
[[nodiscard]] inline double equilibrium_mm(const ForceMap& f, double mf_g, double me_g,
                                           double x_lo_mm = -20.0, double x_hi_mm = 20.0) {
  if (!(x_hi_mm > x_lo_mm)) throw ConfigError("equilibrium_mm: bad bracket");
  constexpr std::size_t kScan = 80;
  const auto at = [&](double x) { return f(x, 0.0, mf_g, me_g); };
  double a = x_lo_mm, fa = at(a);
  if (fa == 0.0) return a;
  double b = a, fb = fa;
  bool found = false;
  for (std::size_t k = 1; k <= kScan; ++k) {
    b = x_lo_mm + (x_hi_mm - x_lo_mm) * static_cast<double>(k) / kScan;
    fb = at(b);
    if (fb == 0.0) return b;
    if (fa * fb < 0.0) {
      found = true;
      break;
    }
    a = b;
    fa = fb;
  }
  if (!found) throw NoCrossings("equilibrium_mm: no sign change in range");
  for (int it = 0; it < 80; ++it) {
    const double m = 0.5 * (a + b);
    const double fm = at(m);
    if (fm == 0.0) return m;
    if (fa * fm < 0.0) {
      b = m;
    } else {
      a = m;
      fa = fm;
    }
  }
  return 0.5 * (a + b);
}

// Equilibrium-point baseline: x0 = a1*(Pf - Pe) + a0, K = b1*(Pf + Pe) + b0,
// with gauge pressures in kPa. b1 > 0 for any physical antagonistic pair.
struct EpModel {
  double alpha1_mm_kpa = 0.0;
  double alpha0_mm = 0.0;
  double beta1_n_mm_kpa = 0.0;
  double beta0_n_mm = 0.0;

  [[nodiscard]] bool physical() const { return beta1_n_mm_kpa > 0.0; }
  [[nodiscard]] double x0_mm(double pf_kpa, double pe_kpa) const {
    return alpha1_mm_kpa * (pf_kpa - pe_kpa) + alpha0_mm;
  }
  [[nodiscard]] double k_n_mm(double pf_kpa, double pe_kpa) const {
    return beta1_n_mm_kpa * (pf_kpa + pe_kpa) + beta0_n_mm;
  }
};

struct EpSample {
  double x0_mm = 0.0, k_n_mm = 0.0;
  double pf_kpa = 0.0, pe_kpa = 0.0;  // gauge, at the equilibrium pose
};

struct EpFit {
  EpModel model;
  double r2_x0 = 0.0, r2_k = 0.0;
  std::size_t n = 0;
};

namespace detail {

// Simple-regression slope/intercept of y against u; throws when u carries no
// information (rank-deficient design).
inline void fit_line(const std::vector<double>& u, const std::vector<double>& y, double& slope,
                     double& intercept, double& r2_out) {
  const auto n = static_cast<double>(u.size());
  double mu = 0.0, my = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    mu += u[i];
    my += y[i];
  }
  mu /= n;
  my /= n;
  double suu = 0.0, suy = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    suu += sqr(u[i] - mu);
    suy += (u[i] - mu) * (y[i] - my);
  }
  if (!(suu > 0.0)) throw RankDeficient("fit_ep: rank-deficient sample grid");
  slope = suy / suu;
  intercept = my - slope * mu;
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    ss_res += sqr(y[i] - (slope * u[i] + intercept));
    ss_tot += sqr(y[i] - my);
  }
  r2_out = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
}

}  // namespace detail

[[nodiscard]] inline EpFit ep_least_squares(const std::vector<EpSample>& samples) {
  if (samples.size() < 2) throw RankDeficient("fit_ep: rank-deficient sample grid");
  std::vector<double> diff, total, x0, k;
  diff.reserve(samples.size());
  total.reserve(samples.size());
  x0.reserve(samples.size());
  k.reserve(samples.size());
  for (const EpSample& s : samples) {
    diff.push_back(s.pf_kpa - s.pe_kpa);
    total.push_back(s.pf_kpa + s.pe_kpa);
    x0.push_back(s.x0_mm);
    k.push_back(s.k_n_mm);
  }
  EpFit fit;
  fit.n = samples.size();
  detail::fit_line(diff, x0, fit.model.alpha1_mm_kpa, fit.model.alpha0_mm, fit.r2_x0);
  detail::fit_line(total, k, fit.model.beta1_n_mm_kpa, fit.model.beta0_n_mm, fit.r2_k);
  return fit;
}

// Extract (equilibrium, stiffness, pressures) tuples from a force map over a
// grid of sealed mass pairs (g).
[[nodiscard]] inline std::vector<EpSample> ep_samples(
    const ForceMap& f, const PhysicalParams& params,
    const std::vector<std::array<double, 2>>& mass_pairs_g, const SynthesisConfig& cfg = {}) {
  std::vector<EpSample> out;
  out.reserve(mass_pairs_g.size());
  for (const auto& mp : mass_pairs_g) {
    EpSample s;
    s.x0_mm = equilibrium_mm(f, mp[0], mp[1]);
    s.k_n_mm = stiffness_fd(f, s.x0_mm, 0.0, mp[0], mp[1], cfg.h_mm);
    s.pf_kpa = mass_to_gauge_kpa(params, Side::flexor, mp[0], s.x0_mm);
    s.pe_kpa = mass_to_gauge_kpa(params, Side::extensor, mp[1], s.x0_mm);
    out.push_back(s);
  }
  return out;
}

[[nodiscard]] inline EpFit fit_ep(const HybridModel& model,
                                  const std::vector<std::array<double, 2>>& mass_pairs_g,
                                  const SynthesisConfig& cfg = {}) {
  return ep_least_squares(ep_samples(force_map(model), model.params, mass_pairs_g, cfg));
}

struct EpCommand {
  double pf_kpa = 0.0, pe_kpa = 0.0;  // gauge
  bool clamped = false;
};

// Invert the EP law for desired (x0, K): a 2x2 linear solve in the pressure
// difference and total, clamped to the feasible gauge range.
[[nodiscard]] inline EpCommand ep_inverse(const EpModel& ep, double x0_mm, double kd_n_mm,
                                          double pmax_kpa = kMaxGaugeKpa) {
  if (ep.alpha1_mm_kpa == 0.0 || ep.beta1_n_mm_kpa == 0.0)
    throw RankDeficient("ep_inverse: singular coefficients");
  const double diff = (x0_mm - ep.alpha0_mm) / ep.alpha1_mm_kpa;
  const double total = (kd_n_mm - ep.beta0_n_mm) / ep.beta1_n_mm_kpa;
  EpCommand cmd;
  cmd.pf_kpa = 0.5 * (total + diff);
  cmd.pe_kpa = 0.5 * (total - diff);
  const double pf = std::clamp(cmd.pf_kpa, 0.0, pmax_kpa);
  const double pe = std::clamp(cmd.pe_kpa, 0.0, pmax_kpa);
  cmd.clamped = pf != cmd.pf_kpa || pe != cmd.pe_kpa;
  cmd.pf_kpa = pf;
  cmd.pe_kpa = pe;
  return cmd;
}

// Sealed masses (g) realizing an EP pressure command at its own predicted
// equilibrium pose, for forward simulation of the EP baseline.
[[nodiscard]] inline std::array<double, 2> ep_masses_g(const EpModel& ep,
                                                       const PhysicalParams& params,
                                                       const EpCommand& cmd) {
  const double x0_m = ep.x0_mm(cmd.pf_kpa, cmd.pe_kpa) * 1e-3;
  const double pf_abs = cmd.pf_kpa * 1e3 + kAtmospherePa;
  const double pe_abs = cmd.pe_kpa * 1e3 + kAtmospherePa;
  const double mf = pf_abs * volume(params, Side::flexor, x0_m) / params.C();
  const double me = pe_abs * volume(params, Side::extensor, x0_m) / params.C();
  return {mf * 1e3, me * 1e3};
}

}  // namespace pamode
