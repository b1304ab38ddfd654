#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "pamode/common.hpp"
#include "pamode/physics.hpp"

using namespace pamode;

namespace {

// Fixture matching the worked examples: nu pinned to 4.6, C to 8.47e4.
PhysicalParams example_params() { return PhysicalParams::from_values(253.9, 8.47e4, 4.6); }

}  // namespace

TEST_CASE("init_params: nominal constants", "[physics]") {
  const auto p = init_params();
  CHECK(p.nu() == Catch::Approx(4.60).margin(0.01));
  CHECK(p.C() == Catch::Approx(8.47e4).epsilon(0.005));
  CHECK(p.m() == Catch::Approx(253.0).margin(1.0));
  CHECK(p.r0 == 5.00e-3);
  CHECK(p.L0 == 0.2);
  CHECK(p.r_p == 6.875e-3);
}

TEST_CASE("PhysicalParams: softplus mapping is positive and consistent", "[physics]") {
  const auto p = example_params();
  CHECK(p.m() == Catch::Approx(253.9).epsilon(1e-12));
  CHECK(p.C() == Catch::Approx(8.47e4).epsilon(1e-12));
  CHECK(p.nu() == Catch::Approx(4.6).epsilon(1e-12));
  CHECK(softplus(p.raw_nu) == Catch::Approx(p.nu()).epsilon(1e-12));

  PhysicalParams q;
  for (double raw : {-1e4, -745.0, -30.0, 0.0, 12.5, 300.0}) {
    q.raw_m = raw;
    CHECK(q.m() > 0.0);
  }
}

TEST_CASE("radius: nominal, displaced, and degenerate", "[physics]") {
  const auto p = example_params();
  CHECK(radius(p, Side::flexor, 0.0) == Catch::Approx(5.00e-3).epsilon(1e-14));
  CHECK(radius(p, Side::extensor, 0.0) == Catch::Approx(5.00e-3).epsilon(1e-14));
  // r_f(+10 mm) = r0 (1 + 4.6 * 0.01 / 0.2) = r0 * 1.23
  CHECK(radius(p, Side::flexor, 0.010) == Catch::Approx(6.15e-3).epsilon(1e-12));
  CHECK(radius(p, Side::extensor, 0.010) == Catch::Approx(3.85e-3).epsilon(1e-12));
  // L0/nu = 43.5 mm collapses the extensor braid.
  CHECK_THROWS_AS(radius(p, Side::extensor, 0.0435), OutOfRange);
  CHECK_THROWS_AS(radius(p, Side::flexor, -0.0435), OutOfRange);
}

TEST_CASE("volume: nominal and displaced values", "[physics]") {
  const auto p = example_params();
  CHECK(volume(p, Side::flexor, 0.0) == Catch::Approx(1.5707963e-5).epsilon(1e-7));
  // pi * (6.15e-3)^2 * 0.19
  CHECK(volume(p, Side::flexor, 0.010) == Catch::Approx(2.25764e-5).epsilon(1e-5));
  CHECK_THROWS_AS(volume(p, Side::flexor, 0.21), OutOfRange);
}

TEST_CASE("volume: mirror symmetry V_f(x) = V_e(-x)", "[physics]") {
  const auto p = example_params();
  Rng rng = Rng::stream(7, 0);
  for (int i = 0; i < 1000; ++i) {
    const double x = 0.08 * (rng.uniform() - 0.5);  // +-40 mm, inside both bounds
    CHECK(volume(p, Side::flexor, x) == Catch::Approx(volume(p, Side::extensor, -x)).epsilon(1e-14));
  }
}

TEST_CASE("volume_rate: frozen example and stationary case", "[physics]") {
  const auto p = example_params();
  CHECK(volume_rate(p, Side::flexor, 0.004, 0.0) == 0.0);
  // V'_f(0) = pi r0^2 (2 nu - 1) = 6.4403e-4 m^2; at 1 mm/s -> 6.44e-7 m^3/s.
  CHECK(volume_rate(p, Side::flexor, 0.0, 1e-3) == Catch::Approx(6.4403e-7).epsilon(1e-4));
}

TEST_CASE("volume_rate: rate symmetry and FD consistency", "[physics]") {
  const auto p = example_params();
  Rng rng = Rng::stream(8, 0);
  for (int i = 0; i < 200; ++i) {
    const double x = 0.06 * (rng.uniform() - 0.5);
    const double xd = 0.2 * (rng.uniform() - 0.5);
    // Differentiating V_f(x) = V_e(-x) along a mirrored trajectory:
    // Vdot_f(x, xd) = Vdot_e(-x, -xd) = -Vdot_e(-x, xd).
    CHECK(volume_rate(p, Side::flexor, x, xd) ==
          Catch::Approx(volume_rate(p, Side::extensor, -x, -xd)).epsilon(1e-12));
    CHECK(volume_rate(p, Side::flexor, x, xd) ==
          Catch::Approx(-volume_rate(p, Side::extensor, -x, xd)).epsilon(1e-12));
    // Central FD in x at a step large enough to stay above cancellation
    // noise; chain rule supplies the xd factor.
    const double dx = 3e-6;
    const double fd =
        xd * (volume(p, Side::flexor, x + dx) - volume(p, Side::flexor, x - dx)) / (2.0 * dx);
    CHECK(volume_rate(p, Side::flexor, x, xd) == Catch::Approx(fd).epsilon(1e-8).margin(1e-18));
  }
}

TEST_CASE("chamber_derivs: partials match finite differences", "[physics]") {
  const auto p = example_params();
  const double h = 1e-6;
  for (Side side : {Side::flexor, Side::extensor}) {
    for (double x : {-0.015, -0.004, 0.0, 0.003, 0.018}) {
      const auto d = chamber_derivs(p, side, x);
      const double vp = volume(p, side, x + h), vm = volume(p, side, x - h);
      CHECK(d.Vx == Catch::Approx((vp - vm) / (2.0 * h)).epsilon(1e-7));
      CHECK(d.Vxx == Catch::Approx((vp - 2.0 * d.V + vm) / (h * h)).epsilon(1e-4).margin(1e-9));

      auto with_nu = [&](double nu) { return PhysicalParams::from_values(p.m(), p.C(), nu); };
      const double dn = 1e-6;
      const auto ppl = with_nu(p.nu() + dn), pmn = with_nu(p.nu() - dn);
      CHECK(d.Vnu ==
            Catch::Approx((volume(ppl, side, x) - volume(pmn, side, x)) / (2.0 * dn))
                .epsilon(1e-6).margin(1e-12));
      const double vxp = chamber_derivs(ppl, side, x).Vx;
      const double vxm = chamber_derivs(pmn, side, x).Vx;
      CHECK(d.Vxnu == Catch::Approx((vxp - vxm) / (2.0 * dn)).epsilon(1e-6).margin(1e-12));
    }
  }
}

TEST_CASE("pressure_from_mass: frozen values and linearity", "[physics]") {
  const auto p = example_params();
  // 1.879e-5 kg at x = 0 is atmospheric.
  CHECK(pressure_from_mass(p, Side::flexor, 1.879e-5, 0.0) ==
        Catch::Approx(101.3e3).epsilon(2e-4));
  CHECK(pressure_from_mass(p, Side::flexor, 2.0 * 1.879e-5, 0.0) ==
        Catch::Approx(2.0 * pressure_from_mass(p, Side::flexor, 1.879e-5, 0.0)).epsilon(1e-14));
  // 1.211e-4 kg at x = 0 -> ~653 kPa abs -> ~80 psi gauge.
  const double P80 = pressure_from_mass(p, Side::extensor, 1.211e-4, 0.0);
  CHECK(P80 == Catch::Approx(653e3).epsilon(2e-3));
  CHECK(pa_to_psi(P80 - kAtmospherePa) == Catch::Approx(80.0).margin(0.1));
  CHECK_THROWS_AS(pressure_from_mass(p, Side::flexor, 0.0, 0.0), OutOfRange);
}

TEST_CASE("mass_from_pressure: inverse of pressure_from_mass", "[physics]") {
  const auto p = example_params();
  CHECK(mass_from_pressure(p, Side::flexor, 101.325e3, 0.0) ==
        Catch::Approx(1.879e-5).epsilon(2e-4));
  CHECK_THROWS_AS(mass_from_pressure(p, Side::flexor, 0.0, 0.0), OutOfRange);
  Rng rng = Rng::stream(9, 0);
  for (int i = 0; i < 300; ++i) {
    const double P = 5e4 + 7e5 * rng.uniform();
    const double x = 0.03 * (rng.uniform() - 0.5);
    const Side side = rng.uniform() < 0.5 ? Side::flexor : Side::extensor;
    const double m = mass_from_pressure(p, side, P, x);
    CHECK(pressure_from_mass(p, side, m, x) == Catch::Approx(P).epsilon(1e-12));
  }
}

TEST_CASE("pressure_rate: frozen example, zero case, sign structure", "[physics]") {
  const auto p = example_params();
  CHECK(pressure_rate(p, Side::flexor, 1.879e-5, 0.0, 0.0, 0.0) == 0.0);
  // Sealed chamber at atmospheric, extending at 1 mm/s: -4.154 kPa/s.
  CHECK(pressure_rate(p, Side::flexor, 1.879e-5, 0.0, 0.0, 1e-3) ==
        Catch::Approx(-4154.0).epsilon(1e-3));
  // With mdot = 0, sign(Pdot) = -sign(Vdot).
  Rng rng = Rng::stream(10, 0);
  for (int i = 0; i < 200; ++i) {
    const double x = 0.05 * (rng.uniform() - 0.5);
    const double xd = 0.3 * (rng.uniform() - 0.5);
    const double vd = volume_rate(p, Side::flexor, x, xd);
    const double pd = pressure_rate(p, Side::flexor, 5e-5, 0.0, x, xd);
    if (vd != 0.0) CHECK(pd * vd < 0.0);
  }
}

TEST_CASE("pressure_rate: exact derivative of the gas law along a path", "[physics]") {
  const auto p = example_params();
  const double m_i = 6.3e-5;
  auto x_of_t = [](double t) { return 0.005 * std::sin(2.0 * t); };
  auto xd_of_t = [](double t) { return 0.010 * std::cos(2.0 * t); };
  for (double t : {0.0, 0.4, 1.1, 2.9}) {
    const double dt = 1e-6;
    const double fd = (pressure_from_mass(p, Side::extensor, m_i, x_of_t(t + dt)) -
                       pressure_from_mass(p, Side::extensor, m_i, x_of_t(t - dt))) /
                      (2.0 * dt);
    CHECK(pressure_rate(p, Side::extensor, m_i, 0.0, x_of_t(t), xd_of_t(t)) ==
          Catch::Approx(fd).epsilon(1e-6));
  }
}
