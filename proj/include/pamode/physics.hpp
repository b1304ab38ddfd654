// PAM physics submodels: braid-constrained radius/volume maps and their
// rates, the isothermal mass-pressure relation, chamber pressure dynamics,
// and softplus-constrained parameter handling.
#pragma once

#include <cmath>

#include "pamode/common.hpp"

namespace pamode {

enum class Side { flexor, extensor };

[[nodiscard]] constexpr double side_sign(Side s) {
  return s == Side::flexor ? 1.0 : -1.0;
}

// Nominal hardware constants.
inline constexpr double kNominalRadiusM = 5.00e-3;   // r_0
inline constexpr double kNominalLengthM = 0.2;       // L_0
inline constexpr double kPulleyRadiusM = 6.875e-3;   // r_p
inline constexpr double kRotorInertia = 1.20e-2;     // kg m^2
inline constexpr double kBraidAngleDeg = 25.0;
inline constexpr double kGasConstant = 8.314;        // J/(mol K)
inline constexpr double kTemperatureK = 295.15;
inline constexpr double kMolarMassAir = 2.897e-2;    // kg/mol

// Trainable positives (m, C, nu) live as unconstrained raw values mapped
// through softplus; geometry (r_0, L_0, r_p) is fixed.
struct PhysicalParams {
  double raw_m = 0.0;
  double raw_C = 0.0;
  double raw_nu = 0.0;
  double r0 = kNominalRadiusM;
  double L0 = kNominalLengthM;
  double r_p = kPulleyRadiusM;

  [[nodiscard]] double m() const { return positive(raw_m); }
  [[nodiscard]] double C() const { return positive(raw_C); }
  [[nodiscard]] double nu() const { return positive(raw_nu); }

  static PhysicalParams from_values(double m, double C, double nu,
                                    double r0 = kNominalRadiusM,
                                    double L0 = kNominalLengthM,
                                    double r_p = kPulleyRadiusM) {
    PhysicalParams p;
    p.raw_m = softplus_inverse(m);
    p.raw_C = softplus_inverse(C);
    p.raw_nu = softplus_inverse(nu);
    p.r0 = r0;
    p.L0 = L0;
    p.r_p = r_p;
    return p;
  }

 private:
  // Softplus underflows to 0.0 for raw < ~-745; clamp to keep the positivity
  // invariant under arbitrary raw updates.
  [[nodiscard]] static double positive(double raw) {
    const double v = softplus(raw);
    return v > 1e-300 ? v : 1e-300;
  }
};

// m = I/r_p^2 (reflected inertia), nu = cot^2(braid angle), C = R T / M_air.
[[nodiscard]] inline PhysicalParams init_params() {
  const double theta = kBraidAngleDeg * kPi / 180.0;
  const double cot = std::cos(theta) / std::sin(theta);
  return PhysicalParams::from_values(kRotorInertia / (kPulleyRadiusM * kPulleyRadiusM),
                                     kGasConstant * kTemperatureK / kMolarMassAir, cot * cot);
}

[[nodiscard]] inline double radius(const PhysicalParams& p, Side side, double x) {
  const double r = p.r0 * (1.0 + side_sign(side) * p.nu() * x / p.L0);
  if (!(r > 0.0)) throw OutOfRange("radius: braid geometry degenerate at this displacement");
  return r;
}

[[nodiscard]] inline double volume(const PhysicalParams& p, Side side, double x) {
  if (!(std::abs(x) < p.L0)) throw OutOfRange("volume: |x| exceeds muscle length");
  const double r = radius(p, side, x);
  const double L = p.L0 - side_sign(side) * x;
  return kPi * r * r * L;
}

// Volume and the partial derivatives the hybrid model's reverse pass needs.
struct ChamberDerivs {
  double V;      // m^3
  double Vx;     // dV/dx
  double Vxx;    // d2V/dx2
  double Vnu;    // dV/dnu
  double Vxnu;   // d2V/(dx dnu)
};

[[nodiscard]] inline ChamberDerivs chamber_derivs(const PhysicalParams& p, Side side, double x) {
  if (!(std::abs(x) < p.L0)) throw OutOfRange("chamber_derivs: |x| exceeds muscle length");
  const double s = side_sign(side);
  const double r = radius(p, side, x);
  const double L = p.L0 - s * x;
  const double rx = s * p.r0 * p.nu() / p.L0;
  const double rnu = s * p.r0 * x / p.L0;
  const double rxnu = s * p.r0 / p.L0;
  ChamberDerivs d;
  d.V = kPi * r * r * L;
  d.Vx = kPi * (2.0 * r * rx * L - s * r * r);
  d.Vxx = kPi * (2.0 * rx * rx * L - 4.0 * s * r * rx);
  d.Vnu = kPi * 2.0 * r * rnu * L;
  d.Vxnu = kPi * (2.0 * (rx * rnu + r * rxnu) * L - 2.0 * s * r * rnu);
  return d;
}

[[nodiscard]] inline double volume_rate(const PhysicalParams& p, Side side, double x,
                                        double xdot) {
  return chamber_derivs(p, side, x).Vx * xdot;
}

// P = C m_i / V_i(x), absolute pressure.
[[nodiscard]] inline double pressure_from_mass(const PhysicalParams& p, Side side, double m_i,
                                               double x) {
  if (!(m_i > 0.0)) throw OutOfRange("pressure_from_mass: air mass must be positive");
  return p.C() * m_i / volume(p, side, x);
}

[[nodiscard]] inline double mass_from_pressure(const PhysicalParams& p, Side side, double P,
                                               double x) {
  if (!(P > 0.0)) throw OutOfRange("mass_from_pressure: absolute pressure must be positive");
  return P * volume(p, side, x) / p.C();
}

// Pdot_i = C (mdot_i / V_i - m_i Vdot_i / V_i^2), the exact time derivative
// of the isothermal relation along x(t).
[[nodiscard]] inline double pressure_rate(const PhysicalParams& p, Side side, double m_i,
                                          double mdot_i, double x, double xdot) {
  const ChamberDerivs d = chamber_derivs(p, side, x);
  const double Vdot = d.Vx * xdot;
  return p.C() * (mdot_i / d.V - m_i * Vdot / (d.V * d.V));
}

}  // namespace pamode
