#pragma once
// Perturbation-based system identification: sealed-chamber pulse experiments,
// spring-mass-damper fits with the joint mass held fixed, the peak/center/
// trough perturbation protocol over a feedforward plan, and the per-level
// stiffness-consistency comparison.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pamode/common.hpp"
#include "pamode/hybrid_model.hpp"
#include "pamode/metrics.hpp"
#include "pamode/numerics/optim.hpp"
#include "pamode/numerics/rk.hpp"
#include "pamode/planner.hpp"
#include "pamode/plant.hpp"

namespace pamode {

// A sealed-chamber pulse experiment: integrate the system from mechanical
// state (x0, xdot0) with frozen chamber masses under an external force signal
// and report displacement (mm) at the given relative times (s).
using SealedSim = std::function<std::vector<double>(
    double x0_mm, double xdot0_mm_s, double mf_g, double me_g, const SampledSignal& fe_n,
    const std::vector<double>& t_s)>;

namespace detail {

struct SealedPlantField {
  static constexpr std::size_t kDim = 2;
  const SyntheticPlant* plant;
  double m_f, m_e;  // kg
  const SampledSignal* fe;

  void eval(double t, const std::array<double, 2>& y, std::array<double, 2>& dy) const {
    dy[0] = y[1];
    dy[1] = plant_net_force(*plant, y[0], y[1], m_f, m_e, fe->value(t)) / plant->mass;
  }
};

}  // namespace detail

[[nodiscard]] inline SealedSim plant_sealed_sim(const SyntheticPlant& plant, double step_s = 1e-3) {
  return [&plant, step_s](double x0_mm, double xdot0_mm_s, double mf_g, double me_g,
                          const SampledSignal& fe_n, const std::vector<double>& t_s) {
    detail::SealedPlantField field{&plant, mf_g * 1e-3, me_g * 1e-3, &fe_n};
    OdeSolveSpec spec;
    spec.t0 = t_s.front();
    spec.t1 = t_s.back();
    spec.step = step_s;
    spec.sample_times = t_s;
    spec.method = OdeMethod::RK4;
    const auto res = integrate(field, {x0_mm * 1e-3, xdot0_mm_s * 1e-3}, spec);
    std::vector<double> x_mm(res.states.size());
    for (std::size_t k = 0; k < res.states.size(); ++k) x_mm[k] = res.states[k][0] * 1e3;
    return x_mm;
  };
}

[[nodiscard]] inline SealedSim model_sealed_sim(const HybridModel& model, double step_s = 1e-3) {
  return [model = model, step_s](double x0_mm, double xdot0_mm_s, double mf_g, double me_g,
                                 const SampledSignal& fe_n,
                                 const std::vector<double>& t_s) mutable {
    ControlInput input;
    input.m_f = mf_g * 1e-3;
    input.m_e = me_g * 1e-3;
    input.F_e = fe_n;
    OdeSolveSpec spec;
    spec.t0 = t_s.front();
    spec.t1 = t_s.back();
    spec.step = step_s;
    spec.sample_times = t_s;
    spec.method = OdeMethod::RK4;
    const JointState x0 =
        consistent_state(model, x0_mm * 1e-3, xdot0_mm_s * 1e-3, input.m_f, input.m_e);
    const auto res = simulate(model, x0, input, spec);
    std::vector<double> x_mm(res.states.size());
    for (std::size_t k = 0; k < res.states.size(); ++k) x_mm[k] = res.states[k][0] * 1e3;
    return x_mm;
  };
}

// Spring-mass-damper identification around an operating point. The reference
// values anchor the unperturbed motion: M(xdd - xdd0) + B(xd - xd0) +
// K(x - x_d) = F_e, all taken from the pre-pulse desired sample.
struct SmdReference {
  double xd_mm = 0.0;
  double xdot0_mm_s = 0.0;
  double xddot0_mm_s2 = 0.0;
};

struct SmdBounds {
  double k_lo_n_mm = 50.0, k_hi_n_mm = 300.0;
  double b_lo_ns_mm = 0.0, b_hi_ns_mm = 5.0;
};

struct SmdFit {
  double k_n_mm = 0.0;
  double b_ns_mm = 0.0;
  double m_kg = 0.0;  // fixed during the fit, echoed for the record
  double rms_mm = 0.0;
  bool poor_fit = false;
};

inline constexpr double kPoorFitRel = 0.2;       // RMS above this fraction of amplitude
inline constexpr double kMinResponseMm = 0.01;   // below this the window is unexcited
inline constexpr double kMinIdentifySpanS = 0.5;

namespace detail {

// Closed-form state transition of xdd + 2 mu xd + kappa x = 0 over step h:
// phi11/phi12/phi21/phi22 with the under-, over-, and critically-damped
// branches. Unconditionally stable for mu, kappa >= 0, so the fit objective
// stays finite anywhere inside the search box regardless of the step size.
struct SmdTransition {
  double p11, p12, p21, p22;

  static SmdTransition make(double mu, double kappa, double h) {
    const double disc = mu * mu - kappa;
    const double e = std::exp(-mu * h);
    SmdTransition t{};
    if (std::abs(disc) < 1e-12 * std::max(mu * mu, kappa)) {
      t.p11 = e * (1.0 + mu * h);
      t.p12 = e * h;
    } else if (disc < 0.0) {
      const double w = std::sqrt(-disc);
      const double c = std::cos(w * h), s = std::sin(w * h) / w;
      t.p11 = e * (c + mu * s);
      t.p12 = e * s;
    } else {
      const double w = std::sqrt(disc);
      const double c = std::cosh(w * h), s = std::sinh(w * h) / w;
      t.p11 = e * (c + mu * s);
      t.p12 = e * s;
    }
    t.p21 = -kappa * t.p12;
    t.p22 = t.p11 - 2.0 * mu * t.p12;
    return t;
  }
};

// Exact LTI response of the anchored spring-mass-damper. The force signal is
// taken piecewise constant at interval midpoints, which preserves the total
// impulse of an interpolated square pulse exactly.
inline std::vector<double> smd_response_mm(double k_n_mm, double b_ns_mm, double m_kg,
                                           const SmdReference& ref, const SampledSignal& fe_n,
                                           double x0_mm, double xdot0_mm_s,
                                           const std::vector<double>& t_s) {
  const double k_si = k_n_mm * 1e3, b_si = b_ns_mm * 1e3;
  const double kappa = k_si / m_kg, mu = 0.5 * b_si / m_kg;
  const double xd_m = ref.xd_mm * 1e-3;
  // Constant part of the forcing: reference acceleration plus the damper's
  // reference-velocity bias, folded into the per-interval equilibrium.
  const double bias_n = m_kg * ref.xddot0_mm_s2 * 1e-3 + b_si * ref.xdot0_mm_s * 1e-3;

  std::vector<double> x_mm(t_s.size());
  double x = x0_mm * 1e-3, v = xdot0_mm_s * 1e-3;
  x_mm[0] = x * 1e3;
  double h_prev = -1.0;
  SmdTransition tr{};
  for (std::size_t k = 1; k < t_s.size(); ++k) {
    const double h = t_s[k] - t_s[k - 1];
    if (!(h > 0.0)) throw ConfigError("identify_smd: times must be strictly increasing");
    if (h != h_prev) {
      tr = SmdTransition::make(mu, kappa, h);
      h_prev = h;
    }
    const double f = fe_n.value(0.5 * (t_s[k - 1] + t_s[k]));
    const double x_eq = xd_m + (bias_n + f) / k_si;
    const double dx = x - x_eq;
    const double nx = x_eq + tr.p11 * dx + tr.p12 * v;
    v = tr.p21 * dx + tr.p22 * v;
    x = nx;
    x_mm[k] = x * 1e3;
  }
  return x_mm;
}

}  // namespace detail

// Two-stage bounded search over (K, B) minimizing the sum of squared
// displacement errors; M stays fixed at the learned joint mass.
[[nodiscard]] inline SmdFit identify_smd(const std::vector<double>& t_s,
                                         const std::vector<double>& x_mm, double xdot0_mm_s,
                                         const SampledSignal& fe_n, double m_kg,
                                         const SmdReference& ref, const SmdBounds& bounds = {}) {
  if (t_s.size() != x_mm.size() || t_s.size() < 5)
    throw ConfigError("identify_smd: need matching series with >= 5 samples");
  if (!(t_s.back() - t_s.front() >= kMinIdentifySpanS))
    throw ConfigError("identify_smd: window shorter than the minimum span");
  if (!(m_kg > 0.0)) throw ConfigError("identify_smd: mass must be positive");
  if (!(bounds.k_lo_n_mm > 0.0) || bounds.b_lo_ns_mm < 0.0)
    throw ConfigError("identify_smd: stiffness bounds must be positive, damping nonnegative");

  const auto objective = [&](const std::vector<double>& z) {
    const auto sim =
        detail::smd_response_mm(z[0], z[1], m_kg, ref, fe_n, x_mm[0], xdot0_mm_s, t_s);
    double ss = 0.0;
    for (std::size_t k = 0; k < sim.size(); ++k) ss += sqr(sim[k] - x_mm[k]);
    return ss;
  };
  const SearchBounds box{{bounds.k_lo_n_mm, bounds.b_lo_ns_mm},
                         {bounds.k_hi_n_mm, bounds.b_hi_ns_mm}};
  const SearchResult res = direct_search_then_refine(objective, box);

  SmdFit fit;
  fit.k_n_mm = res.x[0];
  fit.b_ns_mm = res.x[1];
  fit.m_kg = m_kg;
  fit.rms_mm = std::sqrt(res.value / static_cast<double>(t_s.size()));
  double amplitude = 0.0;
  for (const double x : x_mm) amplitude = std::max(amplitude, std::abs(x - x_mm[0]));
  fit.poor_fit = amplitude < kMinResponseMm || fit.rms_mm > kPoorFitRel * amplitude;
  return fit;
}

// Protocol settings. The pulse torque converts to tendon force through the
// pulley radius at run time; 0.459 N*m is the 0.5 A command level.
struct PerturbationSpec {
  double pulse_width_s = 0.15;
  double pulse_torque_nm = 0.459;
  double window_s = 0.75;  // pulse plus 600 ms of free response
  double rate_hz = 1000.0;
  double noise_sigma_mm = 0.0;  // optional measurement noise on the window
  std::uint64_t seed = 0;

  void validate() const {
    if (!(pulse_width_s > 0.0)) throw ConfigError("perturbation: pulse width must be positive");
    if (!(window_s > pulse_width_s))
      throw ConfigError("perturbation: window must exceed the pulse");
    if (!(rate_hz > 0.0)) throw ConfigError("perturbation: rate must be positive");
    if (noise_sigma_mm < 0.0) throw ConfigError("perturbation: noise sigma must be >= 0");
  }
};

enum class PulsePhase { peak, center, trough };

[[nodiscard]] constexpr const char* phase_name(PulsePhase p) {
  switch (p) {
    case PulsePhase::peak: return "peak";
    case PulsePhase::center: return "center";
    case PulsePhase::trough: return "trough";
  }
  return "?";
}

struct PerturbationEvent {
  std::size_t level = 0;  // index of the stiffness level within the plan
  double kd_n_mm = 0.0;
  std::size_t cycle = 0;
  PulsePhase phase = PulsePhase::peak;
  int direction = +1;
  double onset_s = 0.0;
  double xd_mm = 0.0;
  double xdot_ref_mm_s = 0.0;
  double mf_g = 0.0, me_g = 0.0;
  SmdFit fit;
};

struct ProtocolResult {
  std::vector<PerturbationEvent> events;
};

namespace detail {

struct LevelRun {
  std::size_t begin = 0, end = 0;  // [begin, end) sample range of constant kd
  double kd = 0.0;
};

inline std::vector<LevelRun> level_runs(const DesiredProfile& p) {
  std::vector<LevelRun> runs;
  std::size_t start = 0;
  for (std::size_t k = 1; k <= p.size(); ++k) {
    if (k == p.size() || p.kd_n_mm[k] != p.kd_n_mm[start]) {
      runs.push_back({start, k, p.kd_n_mm[start]});
      start = k;
    }
  }
  return runs;
}

}  // namespace detail

// Runs the peak/center/trough pulse protocol along a feedforward plan.
// Events start on the desired trajectory state with the planned masses frozen
// for the whole identification window (the valves-closed regime); pulse
// direction alternates with the trajectory cycle. Events whose window would
// cross a stiffness-level boundary (a mass-schedule change) are skipped.
[[nodiscard]] inline ProtocolResult run_perturbation_protocol(const SealedSim& sim,
                                                              const PlanResult& plan,
                                                              const PerturbationSpec& spec,
                                                              double r_p_m, double m_kg) {
  spec.validate();
  if (!(r_p_m > 0.0) || !(m_kg > 0.0))
    throw ConfigError("perturbation protocol: r_p and mass must be positive");
  const DesiredProfile& prof = plan.profile;
  prof.validate();
  if (plan.size() != prof.size()) throw ConfigError("perturbation protocol: plan size mismatch");

  const double pulse_n = spec.pulse_torque_nm / r_p_m;
  const auto nwin = static_cast<std::size_t>(std::llround(spec.window_s * spec.rate_hz));
  std::vector<double> t_rel(nwin + 1);
  for (std::size_t k = 0; k <= nwin; ++k) t_rel[k] = static_cast<double>(k) / spec.rate_hz;

  Rng noise_rng(splitmix64(spec.seed ^ 0x5e5e5e5e5e5e5e5eull));

  ProtocolResult out;
  const auto runs = detail::level_runs(prof);
  for (std::size_t li = 0; li < runs.size(); ++li) {
    const detail::LevelRun& run = runs[li];
    const double level_t0 = prof.t_s[run.begin];
    const double level_t1 = prof.t_s[run.end - 1];

    // Peak events: desired velocity flips + -> -; troughs: - -> +; centers:
    // desired position crosses its level mean (velocity magnitude maximal).
    // Both detectors track which side of zero the signal last clearly sat on
    // (a 1% deadband) so rounding fuzz at exact crossings or level starts
    // cannot fire spurious events.
    double mean_xd = 0.0;
    for (std::size_t k = run.begin; k < run.end; ++k) mean_xd += prof.xd_mm[k];
    mean_xd /= static_cast<double>(run.end - run.begin);
    double max_d = 0.0, max_v = 0.0;
    for (std::size_t k = run.begin; k < run.end; ++k) {
      max_d = std::max(max_d, std::abs(prof.xd_mm[k] - mean_xd));
      max_v = std::max(max_v, std::abs(prof.xdotd_mm_s[k]));
    }
    const double band_d = 0.01 * max_d, band_v = 0.01 * max_v;

    double period_s = 0.0;  // estimated from successive peaks for cycle labels
    std::vector<std::size_t> onsets;
    std::vector<PulsePhase> phases;
    int side_v = 0, side_d = 0;
    for (std::size_t k = run.begin; k < run.end; ++k) {
      const double v = prof.xdotd_mm_s[k];
      const double d = prof.xd_mm[k] - mean_xd;
      const int sv = v > band_v ? +1 : v < -band_v ? -1 : 0;
      const int sd = d > band_d ? +1 : d < -band_d ? -1 : 0;
      if (sv != 0) {
        if (side_v != 0 && sv != side_v) {
          onsets.push_back(k);
          phases.push_back(sv < 0 ? PulsePhase::peak : PulsePhase::trough);
        }
        side_v = sv;
      }
      if (sd != 0) {
        if (side_d != 0 && sd != side_d) {
          onsets.push_back(k);
          phases.push_back(PulsePhase::center);
        }
        side_d = sd;
      }
    }
    // Cycle labels need a period; two successive peaks define it.
    std::optional<double> first_peak;
    for (std::size_t e = 0; e < onsets.size(); ++e) {
      if (phases[e] != PulsePhase::peak) continue;
      if (!first_peak) {
        first_peak = prof.t_s[onsets[e]];
      } else {
        period_s = prof.t_s[onsets[e]] - *first_peak;
        break;
      }
    }
    if (period_s <= 0.0) continue;  // fewer than two cycles: no usable events

    for (std::size_t e = 0; e < onsets.size(); ++e) {
      const std::size_t k = onsets[e];
      const double onset = prof.t_s[k];
      if (onset + spec.window_s > level_t1) continue;  // window would cross a mass change
      const auto cycle = static_cast<std::size_t>((onset - level_t0) / period_s);
      const int direction = cycle % 2 == 0 ? +1 : -1;

      std::vector<double> pulse(t_rel.size());
      for (std::size_t i = 0; i < t_rel.size(); ++i)
        pulse[i] = t_rel[i] < spec.pulse_width_s ? direction * pulse_n : 0.0;
      const SampledSignal fe(t_rel, pulse);

      std::vector<double> x_mm =
          sim(prof.xd_mm[k], prof.xdotd_mm_s[k], plan.mf_g[k], plan.me_g[k], fe, t_rel);
      if (spec.noise_sigma_mm > 0.0)
        for (double& x : x_mm) x += spec.noise_sigma_mm * noise_rng.normal();

      PerturbationEvent ev;
      ev.level = li;
      ev.kd_n_mm = run.kd;
      ev.cycle = cycle;
      ev.phase = phases[e];
      ev.direction = direction;
      ev.onset_s = onset;
      ev.xd_mm = prof.xd_mm[k];
      ev.xdot_ref_mm_s = prof.xdotd_mm_s[k];
      ev.mf_g = plan.mf_g[k];
      ev.me_g = plan.me_g[k];
      ev.fit = identify_smd(t_rel, x_mm, prof.xdotd_mm_s[k], fe, m_kg,
                            {prof.xd_mm[k], prof.xdotd_mm_s[k], prof.xddotd_mm_s2[k]});
      out.events.push_back(ev);
    }
  }
  return out;
}

// Mean +/- SD of identified stiffness per (level, phase, direction) cell.
struct PhaseStats {
  std::size_t level = 0;
  double kd_n_mm = 0.0;
  PulsePhase phase = PulsePhase::peak;
  int direction = +1;
  double mean_k_n_mm = 0.0, sd_k_n_mm = 0.0;
  double mean_b_ns_mm = 0.0;
  std::size_t n = 0;
};

[[nodiscard]] inline std::vector<PhaseStats> aggregate_events(const ProtocolResult& proto) {
  std::vector<PhaseStats> out;
  for (const auto& ev : proto.events) {
    if (ev.fit.poor_fit) continue;
    auto it = std::find_if(out.begin(), out.end(), [&](const PhaseStats& s) {
      return s.level == ev.level && s.phase == ev.phase && s.direction == ev.direction;
    });
    if (it == out.end()) {
      out.push_back({ev.level, ev.kd_n_mm, ev.phase, ev.direction, 0.0, 0.0, 0.0, 0});
      it = out.end() - 1;
    }
    // First pass accumulates sums; finalized below.
    it->mean_k_n_mm += ev.fit.k_n_mm;
    it->sd_k_n_mm += sqr(ev.fit.k_n_mm);
    it->mean_b_ns_mm += ev.fit.b_ns_mm;
    ++it->n;
  }
  for (PhaseStats& s : out) {
    const auto n = static_cast<double>(s.n);
    s.mean_k_n_mm /= n;
    s.mean_b_ns_mm /= n;
    const double var = s.n > 1 ? (s.sd_k_n_mm - n * sqr(s.mean_k_n_mm)) / (n - 1.0) : 0.0;
    s.sd_k_n_mm = std::sqrt(std::max(0.0, var));
  }
  std::sort(out.begin(), out.end(), [](const PhaseStats& a, const PhaseStats& b) {
    if (a.level != b.level) return a.level < b.level;
    if (a.phase != b.phase) return static_cast<int>(a.phase) < static_cast<int>(b.phase);
    return a.direction > b.direction;
  });
  return out;
}

// Tracking-error statistics of an executed trajectory against the desired
// profile, with a per-cycle breakdown (cycles delimited by rising crossings
// of the desired position through its level mean).
struct CycleError {
  std::size_t level = 0;
  std::size_t cycle = 0;
  double rms_mm = 0.0;
  double max_mm = 0.0;
};

struct TrackingMetrics {
  double rms_mm = 0.0;
  double max_mm = 0.0;
  std::vector<CycleError> cycles;
};

[[nodiscard]] inline TrackingMetrics tracking_metrics(const DesiredProfile& prof,
                                                      const std::vector<double>& x_mm) {
  prof.validate();
  if (x_mm.size() != prof.size())
    throw ConfigError("tracking_metrics: executed series must match the profile grid");

  TrackingMetrics out;
  double ss = 0.0;
  for (std::size_t k = 0; k < x_mm.size(); ++k) {
    const double e = x_mm[k] - prof.xd_mm[k];
    ss += sqr(e);
    out.max_mm = std::max(out.max_mm, std::abs(e));
  }
  out.rms_mm = std::sqrt(ss / static_cast<double>(x_mm.size()));

  for (std::size_t li = 0; const detail::LevelRun& run : detail::level_runs(prof)) {
    double mean_xd = 0.0, max_d = 0.0;
    for (std::size_t k = run.begin; k < run.end; ++k) mean_xd += prof.xd_mm[k];
    mean_xd /= static_cast<double>(run.end - run.begin);
    for (std::size_t k = run.begin; k < run.end; ++k)
      max_d = std::max(max_d, std::abs(prof.xd_mm[k] - mean_xd));
    const double band = 0.01 * max_d;

    std::vector<std::size_t> bounds{run.begin};
    int side = 0;
    for (std::size_t k = run.begin; k < run.end; ++k) {
      const double d = prof.xd_mm[k] - mean_xd;
      const int s = d > band ? +1 : d < -band ? -1 : 0;
      if (s != 0) {
        if (side == -1 && s == +1) bounds.push_back(k);
        side = s;
      }
    }
    bounds.push_back(run.end);
    for (std::size_t c = 0; c + 1 < bounds.size(); ++c) {
      CycleError ce{li, c, 0.0, 0.0};
      double css = 0.0;
      for (std::size_t k = bounds[c]; k < bounds[c + 1]; ++k) {
        const double e = x_mm[k] - prof.xd_mm[k];
        css += sqr(e);
        ce.max_mm = std::max(ce.max_mm, std::abs(e));
      }
      ce.rms_mm = std::sqrt(css / static_cast<double>(bounds[c + 1] - bounds[c]));
      out.cycles.push_back(ce);
    }
    ++li;
  }
  return out;
}

// Per-level aggregation of identified stiffness at zero and maximum desired
// velocity, with the fixed-range Delta metric and a per-cycle paired t-test.
struct LevelStats {
  double kd_n_mm = 0.0;
  double mean_k0 = 0.0, sd_k0 = 0.0;  // peak + trough events
  double mean_kv = 0.0, sd_kv = 0.0;  // center events
  double delta_pct = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;
  std::size_t n_pairs = 0;
  std::size_t n0 = 0, nv = 0;
};

struct StiffnessComparison {
  std::string tag;  // "NN" | "EP"
  std::vector<LevelStats> levels;
};

namespace detail {

inline void mean_sd(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0.0;
  sd = 0.0;
  if (v.empty()) return;
  for (const double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return;
  double ss = 0.0;
  for (const double x : v) ss += sqr(x - mean);
  sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace detail

[[nodiscard]] inline StiffnessComparison compare_stiffness(const ProtocolResult& proto,
                                                           std::string tag) {
  StiffnessComparison cmp;
  cmp.tag = std::move(tag);
  std::size_t max_level = 0;
  for (const auto& ev : proto.events) max_level = std::max(max_level, ev.level);
  for (std::size_t li = 0; li <= max_level; ++li) {
    LevelStats st;
    std::vector<double> k0, kv;
    // Per-cycle pairs: mean of zero-velocity fits vs mean of max-velocity
    // fits within one trajectory cycle.
    std::size_t max_cycle = 0;
    for (const auto& ev : proto.events)
      if (ev.level == li) max_cycle = std::max(max_cycle, ev.cycle);
    std::vector<double> pair0, pairv;
    for (std::size_t c = 0; c <= max_cycle; ++c) {
      std::vector<double> zero, vmax;
      for (const auto& ev : proto.events) {
        if (ev.level != li || ev.cycle != c || ev.fit.poor_fit) continue;
        st.kd_n_mm = ev.kd_n_mm;
        if (ev.phase == PulsePhase::center)
          vmax.push_back(ev.fit.k_n_mm);
        else
          zero.push_back(ev.fit.k_n_mm);
      }
      for (const double k : zero) k0.push_back(k);
      for (const double k : vmax) kv.push_back(k);
      if (!zero.empty() && !vmax.empty()) {
        double m0 = 0.0, mv = 0.0, unused = 0.0;
        detail::mean_sd(zero, m0, unused);
        detail::mean_sd(vmax, mv, unused);
        pair0.push_back(m0);
        pairv.push_back(mv);
      }
    }
    detail::mean_sd(k0, st.mean_k0, st.sd_k0);
    detail::mean_sd(kv, st.mean_kv, st.sd_kv);
    st.n0 = k0.size();
    st.nv = kv.size();
    st.n_pairs = pair0.size();
    st.delta_pct = delta_metric(st.mean_k0, st.mean_kv);
    if (st.n_pairs >= 2) {
      const TTestResult tt = paired_t_test(pair0, pairv);
      st.t_stat = tt.t;
      st.p_value = tt.p;
    }
    cmp.levels.push_back(st);
  }
  return cmp;
}

[[nodiscard]] inline nlohmann::json comparison_to_json(const StiffnessComparison& cmp) {
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& st : cmp.levels)
    levels.push_back({{"Kd_N_mm", st.kd_n_mm},
                      {"mean_K_at_v0_N_mm", st.mean_k0},
                      {"sd_K_at_v0_N_mm", st.sd_k0},
                      {"mean_K_at_vmax_N_mm", st.mean_kv},
                      {"sd_K_at_vmax_N_mm", st.sd_kv},
                      {"delta_pct", st.delta_pct},
                      {"t_stat", st.t_stat},
                      {"p_value", st.p_value},
                      {"n_pairs", st.n_pairs},
                      {"n_at_v0", st.n0},
                      {"n_at_vmax", st.nv}});
  return nlohmann::json{{"model", cmp.tag}, {"levels", levels}};
}

}  // namespace pamode
