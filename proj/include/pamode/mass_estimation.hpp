// Air-mass estimation from quasi-static muscle characterization: per-branch
// polynomial force surfaces fitted to single-muscle sweeps, then a windowed
// force balance solved at zero-torque crossings of a joint trial, averaged
// across loading/unloading branches to cancel hysteresis and damping bias.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "pamode/common.hpp"
#include "pamode/numerics/linalg.hpp"
#include "pamode/numerics/optim.hpp"
#include "pamode/physics.hpp"
#include "pamode/plant.hpp"

namespace pamode {

// Quasi-static single-muscle rig data: tension recorded over an x sweep at
// several sealed mass levels, one ascending (joint +x) and one descending
// pass per level.
struct SweepData {
  Side side = Side::flexor;
  double v_sweep = 2e-3;            // sweep speed magnitude [m/s]
  std::vector<double> masses;       // kg, one per level
  std::vector<double> x;            // m, ascending
  std::vector<std::vector<double>> f_up;    // [level][position], xdot = +v_sweep
  std::vector<std::vector<double>> f_down;  // [level][position], xdot = -v_sweep
};

// The sweep covers the joint's operating envelope (grid excursions stay
// under 8 mm); a tighter range keeps the cubic x-axis of the fitted surface
// faithful where the force balance is actually evaluated.
[[nodiscard]] inline SweepData sweep_single_muscle(const SyntheticPlant& plant, Side side,
                                                   const std::vector<double>& levels_psi,
                                                   double x_half_range = 0.008,
                                                   std::size_t n_points = 61,
                                                   double v_sweep = 2e-3) {
  SweepData s;
  s.side = side;
  s.v_sweep = v_sweep;
  s.x = linspace(-x_half_range, x_half_range, n_points);
  const auto gas = plant.gas_params();
  for (double psi : levels_psi) {
    const double m_i = (psi_to_pa(psi) + kAtmospherePa) * volume(gas, side, 0.0) / plant.C;
    s.masses.push_back(m_i);
    std::vector<double> up(n_points), down(n_points);
    for (std::size_t k = 0; k < n_points; ++k) {
      const double pg = plant_gauge_pressure(plant, side, m_i, s.x[k]);
      up[k] = plant_force(plant, side, pg, s.x[k], v_sweep);
      down[k] = plant_force(plant, side, pg, s.x[k], -v_sweep);
    }
    s.f_up.push_back(std::move(up));
    s.f_down.push_back(std::move(down));
  }
  return s;
}

// F(x, m) = sum_{i<=3, j<=2} c[i*3+j] (x/x_scale)^i (m/m_scale)^j.
struct PolySurface {
  double x_scale = 0.015;
  double m_scale = 1e-4;
  std::array<double, 12> c{};
  double rms_residual = 0.0;

  [[nodiscard]] double eval(double x, double m) const {
    const double xs = x / x_scale;
    const double ms = m / m_scale;
    double acc = 0.0;
    double xp = 1.0;
    for (int i = 0; i <= 3; ++i) {
      double mp = 1.0;
      for (int j = 0; j <= 2; ++j) {
        acc += c[static_cast<std::size_t>(i * 3 + j)] * xp * mp;
        mp *= ms;
      }
      xp *= xs;
    }
    return acc;
  }
};

struct MuscleSurfaces {
  Side side = Side::flexor;
  PolySurface up;    // fitted to the ascending (joint +x) pass
  PolySurface down;  // descending pass
  double m_min = 0.0, m_max = 0.0;  // characterized sealed-mass hull [kg]

  [[nodiscard]] const PolySurface& branch(double joint_xdot) const {
    return joint_xdot >= 0.0 ? up : down;
  }
};

namespace detail {

inline PolySurface fit_branch(const SweepData& s,
                              const std::vector<std::vector<double>>& f) {
  PolySurface surf;
  const std::size_t rows = s.masses.size() * s.x.size();
  std::vector<double> design(rows * 12);
  std::vector<double> rhs(rows);
  std::size_t r = 0;
  for (std::size_t lv = 0; lv < s.masses.size(); ++lv) {
    const double ms = s.masses[lv] / surf.m_scale;
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      const double xs = s.x[k] / surf.x_scale;
      double* row = design.data() + r * 12;
      double xp = 1.0;
      for (int i = 0; i <= 3; ++i) {
        double mp = 1.0;
        for (int j = 0; j <= 2; ++j) {
          row[i * 3 + j] = xp * mp;
          mp *= ms;
        }
        xp *= xs;
      }
      rhs[r] = f[lv][k];
      ++r;
    }
  }
  const auto coef = lstsq(design, rows, 12, rhs);
  std::copy(coef.begin(), coef.end(), surf.c.begin());
  double ss = 0.0;
  r = 0;
  for (std::size_t lv = 0; lv < s.masses.size(); ++lv)
    for (std::size_t k = 0; k < s.x.size(); ++k) ss += sqr(f[lv][k] - surf.eval(s.x[k], s.masses[lv])), ++r;
  surf.rms_residual = std::sqrt(ss / static_cast<double>(rows));
  return surf;
}

}  // namespace detail

[[nodiscard]] inline MuscleSurfaces fit_force_surfaces(const SweepData& s) {
  if (s.masses.size() < 2) throw RankDeficient("fit_force_surfaces: need >= 2 mass levels");
  MuscleSurfaces out;
  out.side = s.side;
  out.up = detail::fit_branch(s, s.f_up);
  out.down = detail::fit_branch(s, s.f_down);
  out.m_min = *std::min_element(s.masses.begin(), s.masses.end());
  out.m_max = *std::max_element(s.masses.begin(), s.masses.end());
  return out;
}

struct MassEstimate {
  double m_f = 0.0, m_e = 0.0;              // kg, branch-averaged
  double m_f_up = 0.0, m_e_up = 0.0;        // loading-branch estimate
  double m_f_down = 0.0, m_e_down = 0.0;    // unloading-branch estimate
  std::size_t crossings_up = 0, crossings_down = 0;
};

struct MassEstimateOptions {
  double window_s = 0.15;        // force-balance window around each crossing
  double m_lo = 1.5e-5, m_hi = 2.5e-4;  // search bounds [kg]
};

// Locates zero crossings of the external force with velocity-sign
// discrimination and solves the per-branch static force balance over each
// window by direct search. The recorded channel is the applied external
// force (m xdd = F_f - F_e - c_v xd + F_ext), so at quasi-static balance the
// muscle pair opposes it: F_f(x, m_f) - F_e(x, m_e) = -F_ext. The search is
// confined to the sealed-mass hull the sweeps characterized.
[[nodiscard]] inline MassEstimate estimate_masses(const TrajectoryDataset& d,
                                                  const MuscleSurfaces& flexor,
                                                  const MuscleSurfaces& extensor,
                                                  const MassEstimateOptions& opt = {}) {
  if (flexor.side != Side::flexor || extensor.side != Side::extensor)
    throw std::invalid_argument("estimate_masses: surfaces passed in wrong order");
  const std::size_t n = d.size();
  if (n < 3) throw NoCrossings("estimate_masses: dataset too short");

  struct Crossing {
    std::size_t idx;
    bool up;
  };
  // A crossing is a true sign reversal of the applied force; onsets from an
  // exact zero (pulse edges, trial start) do not count.
  std::vector<Crossing> crossings;
  int last_sign = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const int s = d.fe_n[k] > 0.0 ? 1 : (d.fe_n[k] < 0.0 ? -1 : 0);
    if (s == 0) continue;
    if (last_sign != 0 && s != last_sign) crossings.push_back({k, d.xdot_mm_s[k] >= 0.0});
    last_sign = s;
  }
  if (crossings.empty()) throw NoCrossings("estimate_masses: external force never crosses zero");

  const auto half = static_cast<std::size_t>(opt.window_s * 0.5 * d.sample_rate_hz);
  double acc_f_up = 0.0, acc_e_up = 0.0, acc_f_dn = 0.0, acc_e_dn = 0.0;
  std::size_t n_up = 0, n_dn = 0;

  for (const Crossing& c : crossings) {
    const std::size_t lo = c.idx > half ? c.idx - half : 0;
    const std::size_t hi = std::min(n - 1, c.idx + half);
    if (hi - lo < 10) continue;
    const PolySurface& sf = c.up ? flexor.up : flexor.down;
    const PolySurface& se = c.up ? extensor.up : extensor.down;

    auto objective = [&](const std::vector<double>& m) {
      double ss = 0.0;
      for (std::size_t k = lo; k <= hi; ++k) {
        const double x = d.x_mm[k] * 1e-3;
        ss += sqr(sf.eval(x, m[0]) - se.eval(x, m[1]) + d.fe_n[k]);
      }
      return ss / static_cast<double>(hi - lo + 1);
    };
    const double lo_f = std::max(opt.m_lo, 0.9 * flexor.m_min);
    const double hi_f = std::min(opt.m_hi, 1.1 * flexor.m_max);
    const double lo_e = std::max(opt.m_lo, 0.9 * extensor.m_min);
    const double hi_e = std::min(opt.m_hi, 1.1 * extensor.m_max);
    SearchBounds bounds{{lo_f, lo_e}, {hi_f, hi_e}};
    SearchOptions so;
    so.multistart_per_dim = 4;
    const auto res = direct_search_then_refine(objective, bounds, so);
    if (c.up) {
      acc_f_up += res.x[0];
      acc_e_up += res.x[1];
      ++n_up;
    } else {
      acc_f_dn += res.x[0];
      acc_e_dn += res.x[1];
      ++n_dn;
    }
  }
  if (n_up + n_dn == 0) throw NoCrossings("estimate_masses: no usable crossing windows");

  MassEstimate est;
  est.crossings_up = n_up;
  est.crossings_down = n_dn;
  if (n_up > 0) {
    est.m_f_up = acc_f_up / static_cast<double>(n_up);
    est.m_e_up = acc_e_up / static_cast<double>(n_up);
  }
  if (n_dn > 0) {
    est.m_f_down = acc_f_dn / static_cast<double>(n_dn);
    est.m_e_down = acc_e_dn / static_cast<double>(n_dn);
  }
  if (n_up > 0 && n_dn > 0) {
    est.m_f = 0.5 * (est.m_f_up + est.m_f_down);
    est.m_e = 0.5 * (est.m_e_up + est.m_e_down);
  } else {
    est.m_f = n_up > 0 ? est.m_f_up : est.m_f_down;
    est.m_e = n_up > 0 ? est.m_e_up : est.m_e_down;
  }
  return est;
}

}  // namespace pamode
