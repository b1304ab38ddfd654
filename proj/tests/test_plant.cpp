#include <algorithm>
#include <cmath>
#include <set>

#include <catch2/catch_amalgamated.hpp>

#include "pamode/common.hpp"
#include "pamode/physics.hpp"
#include "pamode/plant.hpp"

using namespace pamode;

namespace {

// Linearized joint stiffness [N/m] about the sealed equilibrium of a
// commanded pressure pair: central difference of the static net force.
double joint_stiffness(const SyntheticPlant& plant, double pf_psi, double pe_psi) {
  const TrialSetup s = masses_for_pair(plant, pf_psi, pe_psi);
  const double h = 1e-4;
  const double fp = plant_net_force(plant, s.x0 + h, 0.0, s.m_f, s.m_e, 0.0);
  const double fm = plant_net_force(plant, s.x0 - h, 0.0, s.m_f, s.m_e, 0.0);
  return -(fp - fm) / (2.0 * h);
}

ExcitationSpec sinusoid(double freq_hz, double amp_nm, double duration_s = 4.0) {
  ExcitationSpec e;
  e.kind = ExcitationKind::sinusoid;
  e.frequency_hz = freq_hz;
  e.torque_amp_nm = amp_nm;
  e.duration_s = duration_s;
  return e;
}

}  // namespace

TEST_CASE("plant: braid coefficients match the 25 degree geometry", "[plant]") {
  const SyntheticPlant plant;
  CHECK(plant.a == Catch::Approx(13.796722).margin(1e-5));
  CHECK(plant.b == Catch::Approx(5.598915).margin(1e-5));
  CHECK(plant.mass == Catch::Approx(253.88).margin(0.01));
  CHECK(plant.C == Catch::Approx(84704.1).margin(0.5));
}

TEST_CASE("plant: static tension is linear in gauge pressure and vanishes at zero",
          "[plant]") {
  const SyntheticPlant plant;
  Rng rng(101);
  for (int k = 0; k < 50; ++k) {
    const double x = (rng.uniform() - 0.5) * 0.03;
    CHECK(plant_force(plant, Side::flexor, 0.0, x, 0.0) == 0.0);
    CHECK(plant_force(plant, Side::extensor, 0.0, x, 0.0) == 0.0);
  }
  // At the neutral configuration F = pi r0^2 P (a - b) for both sides.
  const double area = kPi * sqr(plant.r0);
  const double pg = psi_to_pa(40.0);
  const double expect = area * pg * (plant.a - plant.b);
  CHECK(expect == Catch::Approx(177.57).margin(0.05));
  CHECK(plant_force(plant, Side::flexor, pg, 0.0, 0.0) == Catch::Approx(expect));
  CHECK(plant_force(plant, Side::extensor, pg, 0.0, 0.0) == Catch::Approx(expect));
  // Doubling pressure doubles the static tension.
  CHECK(plant_force(plant, Side::flexor, 2.0 * pg, 0.004, 0.0) ==
        Catch::Approx(2.0 * plant_force(plant, Side::flexor, pg, 0.004, 0.0)));
}

TEST_CASE("plant: hysteresis separates loading and unloading branches", "[plant]") {
  const SyntheticPlant plant;
  const double gap = 2.0 * plant.F_h * std::tanh(1.0);  // at |xdot| = v_ref
  CHECK(gap == Catch::Approx(6.09275).margin(1e-4));
  Rng rng(77);
  for (int k = 0; k < 20; ++k) {
    const double x = (rng.uniform() - 0.5) * 0.02;
    const double pg = psi_to_pa(10.0 + 70.0 * rng.uniform());
    const double v = plant.v_ref;
    // The contracting direction loses tension: for the flexor that is
    // xdot > 0, for the extensor xdot < 0.
    const double df = plant_force(plant, Side::flexor, pg, x, v) -
                      plant_force(plant, Side::flexor, pg, x, -v);
    const double de = plant_force(plant, Side::extensor, pg, x, v) -
                      plant_force(plant, Side::extensor, pg, x, -v);
    CHECK(df == Catch::Approx(-gap).margin(1e-9));
    CHECK(de == Catch::Approx(+gap).margin(1e-9));
  }
  // Saturation: far above v_ref the branch gap approaches 2 F_h.
  const double dsat = plant_force(plant, Side::flexor, psi_to_pa(40.0), 0.0, -0.05) -
                      plant_force(plant, Side::flexor, psi_to_pa(40.0), 0.0, 0.05);
  CHECK(dsat == Catch::Approx(2.0 * plant.F_h).margin(1e-6));
}

TEST_CASE("plant: sealed-chamber pressure drops as the chamber inflates", "[plant]") {
  const SyntheticPlant plant;
  const auto gas = plant.gas_params();
  const double m40 = (psi_to_pa(40.0) + kAtmospherePa) * volume(gas, Side::flexor, 0.0) / plant.C;
  CHECK(plant_gauge_pressure(plant, Side::flexor, m40, 0.0) ==
        Catch::Approx(psi_to_pa(40.0)).epsilon(1e-12));
  // x > 0 inflates the flexor (radius growth dominates shortening), so its
  // sealed pressure falls; the extensor mirrors.
  CHECK(volume(gas, Side::flexor, 0.005) > volume(gas, Side::flexor, 0.0));
  CHECK(plant_gauge_pressure(plant, Side::flexor, m40, 0.005) < psi_to_pa(40.0));
  CHECK(plant_gauge_pressure(plant, Side::extensor, m40, 0.005) > psi_to_pa(40.0));
}

TEST_CASE("plant: equilibrium centering, mirror symmetry, and bias to the stronger side",
          "[plant]") {
  const SyntheticPlant plant;
  CHECK(std::abs(equilibrium_x(plant, psi_to_pa(40.0), psi_to_pa(40.0))) < 1e-9);
  const double x_ext = equilibrium_x(plant, psi_to_pa(30.0), psi_to_pa(60.0));
  CHECK(x_ext == Catch::Approx(-0.91e-3).margin(0.05e-3));
  const double x_flex = equilibrium_x(plant, psi_to_pa(60.0), psi_to_pa(30.0));
  CHECK(x_flex == Catch::Approx(-x_ext).margin(1e-9));
  // The static balance really is zero there.
  const TrialSetup s = masses_for_pair(plant, 30.0, 60.0);
  CHECK(std::abs(plant_net_force(plant, s.x0, 0.0, s.m_f, s.m_e, 0.0)) < 1e-6);
}

TEST_CASE("plant: sealed masses realize the commanded pressures at equilibrium", "[plant]") {
  const SyntheticPlant plant;
  const TrialSetup s = masses_for_pair(plant, 30.0, 60.0);
  CHECK(plant_gauge_pressure(plant, Side::flexor, s.m_f, s.x0) ==
        Catch::Approx(psi_to_pa(30.0)).epsilon(1e-12));
  CHECK(plant_gauge_pressure(plant, Side::extensor, s.m_e, s.x0) ==
        Catch::Approx(psi_to_pa(60.0)).epsilon(1e-12));
  CHECK(s.m_f == Catch::Approx(0.0550e-3).margin(0.002e-3));
  CHECK(s.m_e == Catch::Approx(0.0991e-3).margin(0.002e-3));
}

TEST_CASE("plant: linearized stiffness sits in the published regime", "[plant]") {
  const SyntheticPlant plant;
  CHECK(joint_stiffness(plant, 40.0, 40.0) / 1e3 == Catch::Approx(150.2).margin(1.0));
  // The 126-176 N/mm band is bracketed by symmetric pairs inside the grid.
  CHECK(joint_stiffness(plant, 33.4, 33.4) / 1e3 == Catch::Approx(126.3).margin(1.5));
  CHECK(joint_stiffness(plant, 47.0, 47.0) / 1e3 == Catch::Approx(175.6).margin(1.5));
  // Asymmetric pairs land in-band too.
  CHECK(joint_stiffness(plant, 30.0, 60.0) / 1e3 == Catch::Approx(166.6).margin(1.5));
  // Stiffness grows monotonically with co-contraction across the grid levels.
  const auto levels = grid_levels_psi(false);
  double prev = 0.0;
  for (double p : levels) {
    const double k = joint_stiffness(plant, p, p);
    CHECK(k > prev);
    prev = k;
  }
  CHECK(joint_stiffness(plant, 10.0, 10.0) / 1e3 == Catch::Approx(41.6).margin(1.0));
  CHECK(joint_stiffness(plant, 80.0, 80.0) / 1e3 == Catch::Approx(295.1).margin(2.0));
}

TEST_CASE("plant: free release decays without amplitude growth", "[plant]") {
  const SyntheticPlant plant;
  const TrialSetup s = masses_for_pair(plant, 40.0, 40.0);
  const ExcitationSpec quiet = sinusoid(1.0, 0.0, 2.0);
  PlantField field(plant, s.m_f, s.m_e, quiet);
  OdeSolveSpec spec;
  spec.t0 = 0.0;
  spec.t1 = 2.0;
  spec.step = 1e-3;
  spec.sample_times = linspace(0.0, 2.0, 2001);
  spec.method = OdeMethod::RK4;
  const auto res = integrate(field, {5e-3, 0.0}, spec);

  double peak_prev = 1e9;
  double max_abs = 0.0;
  for (std::size_t k = 1; k + 1 < res.states.size(); ++k) {
    const double a = std::abs(res.states[k][0]);
    max_abs = std::max(max_abs, a);
    if (a >= std::abs(res.states[k - 1][0]) && a >= std::abs(res.states[k + 1][0]) &&
        a > 1e-5) {
      CHECK(a <= peak_prev * (1.0 + 1e-9));
      peak_prev = a;
    }
  }
  CHECK(max_abs <= 5e-3 * (1.0 + 1e-9));             // never exceeds the release offset
  CHECK(std::abs(res.states.back()[0]) < 0.5e-3);    // and it actually decays
}

TEST_CASE("plant: datasets are reproducible per seed", "[plant]") {
  const SyntheticPlant plant;
  const auto exc = sinusoid(1.0, 0.918, 1.0);
  const auto d1 = generate_dataset(plant, 45.0, 45.0, exc, 42);
  const auto d2 = generate_dataset(plant, 45.0, 45.0, exc, 42);
  const auto d3 = generate_dataset(plant, 45.0, 45.0, exc, 43);
  REQUIRE(d1.size() == 1001);
  CHECK(d1.x_mm == d2.x_mm);
  CHECK(d1.xdot_mm_s == d2.xdot_mm_s);
  CHECK(d1.pf_kpa == d2.pf_kpa);
  CHECK(d1.pe_kpa == d2.pe_kpa);
  CHECK(d1.x_mm != d3.x_mm);
  CHECK(d1.clean_x_mm == d3.clean_x_mm);  // same trajectory, different noise
  CHECK(d1.meta.plant_hash == d3.meta.plant_hash);

  const auto d4 = generate_dataset(plant, 45.0, 45.0, exc, 42, false);
  CHECK(d4.x_mm == d4.clean_x_mm);
  CHECK_FALSE(d4.meta.noise);

  SyntheticPlant other = plant;
  other.kappa += 1.0;
  CHECK(other.hash() != plant.hash());
}

TEST_CASE("plant: recorded pressures conserve the sealed gas mass", "[plant]") {
  const SyntheticPlant plant;
  const auto d = generate_dataset(plant, 27.5, 62.5, sinusoid(2.0, 1.377, 1.0), 9, false);
  const auto gas = plant.gas_params();
  const double m_f = d.meta.mf_g * 1e-3;
  const double m_e = d.meta.me_g * 1e-3;
  for (std::size_t k = 0; k < d.size(); k += 37) {
    const double x = d.clean_x_mm[k] * 1e-3;
    const double mf_back = (d.clean_pf_kpa[k] * 1e3 + kAtmospherePa) *
                           volume(gas, Side::flexor, x) / plant.C;
    const double me_back = (d.clean_pe_kpa[k] * 1e3 + kAtmospherePa) *
                           volume(gas, Side::extensor, x) / plant.C;
    CHECK(mf_back == Catch::Approx(m_f).epsilon(1e-9));
    CHECK(me_back == Catch::Approx(m_e).epsilon(1e-9));
  }
  // Initial sample sits at the pair's sealed equilibrium, at rest.
  const TrialSetup setup = masses_for_pair(plant, 27.5, 62.5);
  CHECK(d.clean_xdot_mm_s[0] == 0.0);
  CHECK(d.clean_x_mm[0] == Catch::Approx(setup.x0 * 1e3).margin(1e-9));
  CHECK(d.fe_n[0] == 0.0);
}

TEST_CASE("plant: noise statistics match the configured sigmas", "[plant]") {
  const SyntheticPlant plant;
  const auto d = generate_dataset(plant, 45.0, 45.0, sinusoid(1.0, 0.918, 4.0), 7);
  const std::size_t n = d.size();
  REQUIRE(n == 4001);
  auto stats = [&](const std::vector<double>& noisy, const std::vector<double>& clean) {
    double mean = 0.0, ss = 0.0;
    for (std::size_t k = 0; k < n; ++k) mean += noisy[k] - clean[k];
    mean /= static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) ss += sqr(noisy[k] - clean[k] - mean);
    return std::pair{mean, std::sqrt(ss / static_cast<double>(n - 1))};
  };
  const auto [mx, sx] = stats(d.x_mm, d.clean_x_mm);
  const auto [mv, sv] = stats(d.xdot_mm_s, d.clean_xdot_mm_s);
  const auto [mpf, spf] = stats(d.pf_kpa, d.clean_pf_kpa);
  const auto [mpe, spe] = stats(d.pe_kpa, d.clean_pe_kpa);
  CHECK(std::abs(mx) < 4.0 * kNoiseSigmaXMm / std::sqrt(double(n)));
  CHECK(sx == Catch::Approx(kNoiseSigmaXMm).epsilon(0.07));
  CHECK(sv == Catch::Approx(kNoiseSigmaXdotMmS).epsilon(0.07));
  CHECK(spf == Catch::Approx(kNoiseSigmaPKpa).epsilon(0.07));
  CHECK(spe == Catch::Approx(kNoiseSigmaPKpa).epsilon(0.07));
  CHECK(std::abs(mpf) < 4.0 * kNoiseSigmaPKpa / std::sqrt(double(n)));
  CHECK(std::abs(mv) < 4.0 * kNoiseSigmaXdotMmS / std::sqrt(double(n)));
  CHECK(std::abs(mpe) < 4.0 * kNoiseSigmaPKpa / std::sqrt(double(n)));
  // Channel streams are independent.
  double cross = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    cross += (d.x_mm[k] - d.clean_x_mm[k] - mx) * (d.pf_kpa[k] - d.clean_pf_kpa[k] - mpf);
  cross /= static_cast<double>(n - 1) * sx * spf;
  CHECK(std::abs(cross) < 0.1);
}

TEST_CASE("plant: worst grid corner stays well inside the braid range", "[plant]") {
  const SyntheticPlant plant;
  // Softest cell driven hard at its near-resonant frequency.
  const auto d = generate_dataset(plant, 10.0, 10.0, sinusoid(2.0, 1.377, 4.0), 3, false);
  double amp = 0.0;
  for (double x : d.clean_x_mm) amp = std::max(amp, std::abs(x));
  CHECK(amp < 10.0);  // braid degeneracy sits at 43.5 mm
  CHECK(amp > 2.0);   // but the cell is genuinely excited
}

TEST_CASE("plant: grid enumeration covers the protocol deterministically", "[plant]") {
  const auto levels = grid_levels_psi(false);
  REQUIRE(levels == std::vector<double>{10.0, 27.5, 45.0, 62.5, 80.0});
  const auto grid = generate_grid_specs(levels, 1000);
  REQUIRE(grid.size() == 25);
  std::set<std::pair<double, double>> pairs;
  std::set<std::uint64_t> seeds;
  bool low_amp = false, high_amp = false;
  for (const auto& g : grid) {
    pairs.insert({g.pf_psi, g.pe_psi});
    seeds.insert(g.seed);
    CHECK_NOTHROW(g.excitation.validate_training_style());
    const double f = g.excitation.frequency_hz;
    const double expect_f = (g.i * 5 + g.j) % 3 == 0 ? 0.5 : ((g.i * 5 + g.j) % 3 == 1 ? 1.0 : 2.0);
    CHECK(f == expect_f);
    low_amp = low_amp || g.excitation.torque_amp_nm == 0.918;
    high_amp = high_amp || g.excitation.torque_amp_nm == 1.377;
  }
  CHECK(pairs.size() == 25);
  CHECK(seeds.size() == 25);
  CHECK((low_amp && high_amp));

  CHECK(grid_levels_psi(true).size() == 15);
  CHECK(generate_grid_specs(grid_levels_psi(true), 0).size() == 225);
}

TEST_CASE("plant: excitation specs round-trip through json and reject junk", "[plant]") {
  ExcitationSpec sin_spec = sinusoid(2.0, 1.377);
  ExcitationSpec pulse;
  pulse.kind = ExcitationKind::square_pulse;
  pulse.torque_amp_nm = 0.459;
  pulse.pulse_start_s = 0.5;
  pulse.pulse_width_ms = 150.0;
  pulse.duration_s = 2.0;
  ExcitationSpec sched;
  sched.kind = ExcitationKind::perturbation_schedule;
  sched.torque_amp_nm = 0.459;
  sched.pulse_width_ms = 150.0;
  sched.duration_s = 6.0;
  sched.pulse_times_s = {0.75, 2.0, 3.25, 4.5};
  sched.pulse_signs = {1.0, -1.0, 1.0, -1.0};

  for (const auto& e : {sin_spec, pulse, sched}) {
    const auto back = ExcitationSpec::from_json(e.to_json());
    for (double t : {0.0, 0.3, 0.76, 1.1, 2.05, 3.3, 4.6, 5.9})
      CHECK(back.torque(t) == e.torque(t));
  }
  CHECK(pulse.torque(0.49) == 0.0);
  CHECK(pulse.torque(0.55) == 0.459);
  CHECK(pulse.torque(0.66) == 0.0);
  CHECK(sched.torque(2.05) == -0.459);
  CHECK(sched.torque(5.0) == 0.0);

  auto bad = sin_spec.to_json();
  bad["kind"] = "triangle";
  CHECK_THROWS_AS(ExcitationSpec::from_json(bad), ConfigError);
  ExcitationSpec off_protocol = sinusoid(0.75, 0.918);
  CHECK_THROWS_AS(off_protocol.validate_training_style(), ConfigError);
  ExcitationSpec off_amp = sinusoid(1.0, 1.0);
  CHECK_THROWS_AS(off_amp.validate_training_style(), ConfigError);
}
