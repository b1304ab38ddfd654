// Synthetic ground-truth plant standing in for the hardware rig: analytical
// braided-muscle force law with a pressure-scaled stiffness term, per-muscle
// hysteresis, joint viscous damping, sealed-chamber gas coupling, excitation
// generation, and co-contraction grid dataset synthesis.
#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pamode/common.hpp"
#include "pamode/numerics/rk.hpp"
#include "pamode/physics.hpp"

namespace pamode {

struct SyntheticPlant {
  // Shared geometry/gas constants.
  double r0 = kNominalRadiusM;
  double L0 = kNominalLengthM;
  double r_p = kPulleyRadiusM;
  double mass = kRotorInertia / (kPulleyRadiusM * kPulleyRadiusM);  // 253.88 kg
  double C = kGasConstant * kTemperatureK / kMolarMassAir;
  // True braid deformation coefficient: deliberately off the nominal
  // cot^2(25 deg) = 4.599 so identification has something to recover.
  double nu = 4.65;
  // Classical braided-actuator coefficients at 25 deg.
  double a = 3.0 / sqr(std::tan(kBraidAngleDeg * kPi / 180.0));
  double b = 1.0 / sqr(std::sin(kBraidAngleDeg * kPi / 180.0));
  // Pressure-scaled stiffness augmentation (desk-scale joints need the
  // 126-176 N/mm band; the bare a/b law tops out near 46 N/mm).
  double kappa = 573.0;
  // Per-muscle hysteresis magnitude (joint-level branch separation 2 F_h)
  // and its velocity scale.
  double F_h = 4.0;
  double v_ref = 2e-3;
  // Joint viscous damping, motor/transmission drag reflected through r_p.
  double c_v = 2000.0;

  [[nodiscard]] PhysicalParams gas_params() const {
    return PhysicalParams::from_values(mass, C, nu, r0, L0, r_p);
  }

  [[nodiscard]] std::uint64_t hash() const {
    std::uint64_t h = 0x9e3779b97f4a7c15ull;
    for (double v : {r0, L0, r_p, mass, C, nu, a, b, kappa, F_h, v_ref, c_v})
      h = splitmix64(h ^ std::bit_cast<std::uint64_t>(v));
    return h;
  }
};

// Single-muscle tension along its own pulling direction. The static braid
// law is scaled by gauge pressure (zero pressure -> zero static force); the
// hysteresis term opposes the muscle's own contraction rate, which is what
// separates loading from unloading branches on a test rig.
[[nodiscard]] inline double plant_force(const SyntheticPlant& plant, Side side, double P_gauge,
                                        double x, double xdot) {
  const double s = side_sign(side);
  const double eps = s * x / plant.L0;
  const double bracket = plant.a * sqr(1.0 - eps) - plant.b - plant.kappa * eps;
  const double area = kPi * plant.r0 * plant.r0;
  return area * P_gauge * bracket - plant.F_h * std::tanh(s * xdot / plant.v_ref);
}

[[nodiscard]] inline double plant_gauge_pressure(const SyntheticPlant& plant, Side side,
                                                 double m_i, double x) {
  return plant.C * m_i / volume(plant.gas_params(), side, x) - kAtmospherePa;
}

// Net tendon-space force on the joint for sealed chambers.
[[nodiscard]] inline double plant_net_force(const SyntheticPlant& plant, double x, double xdot,
                                            double m_f, double m_e, double F_ext) {
  const double pf = plant_gauge_pressure(plant, Side::flexor, m_f, x);
  const double pe = plant_gauge_pressure(plant, Side::extensor, m_e, x);
  return plant_force(plant, Side::flexor, pf, x, xdot) -
         plant_force(plant, Side::extensor, pe, x, xdot) - plant.c_v * xdot + F_ext;
}

// Static equilibrium under servo-held (constant) gauge pressures, found by
// bisection; the static net force is strictly decreasing in x.
[[nodiscard]] inline double equilibrium_x(const SyntheticPlant& plant, double P_gauge_f,
                                          double P_gauge_e) {
  auto net = [&](double x) {
    return plant_force(plant, Side::flexor, P_gauge_f, x, 0.0) -
           plant_force(plant, Side::extensor, P_gauge_e, x, 0.0);
  };
  double lo = -0.02, hi = 0.02;
  double flo = net(lo), fhi = net(hi);
  if (!(flo > 0.0 && fhi < 0.0))
    throw OutOfRange("equilibrium_x: commanded pressures give no bracketed equilibrium");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = net(mid);
    if (fm > 0.0) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
      fhi = fm;
    }
    if (hi - lo < 1e-13) break;
  }
  return 0.5 * (lo + hi);
}

struct TrialSetup {
  double x0;        // equilibrium displacement [m]
  double m_f, m_e;  // sealed chamber masses [kg]
};

// Commanded gauge psi pair -> equilibrium and the sealed masses that realize
// those pressures at the equilibrium configuration.
[[nodiscard]] inline TrialSetup masses_for_pair(const SyntheticPlant& plant, double pf_psi,
                                                double pe_psi) {
  const double pgf = psi_to_pa(pf_psi);
  const double pge = psi_to_pa(pe_psi);
  const double x0 = equilibrium_x(plant, pgf, pge);
  const auto gas = plant.gas_params();
  TrialSetup s;
  s.x0 = x0;
  s.m_f = (pgf + kAtmospherePa) * volume(gas, Side::flexor, x0) / plant.C;
  s.m_e = (pge + kAtmospherePa) * volume(gas, Side::extensor, x0) / plant.C;
  return s;
}

enum class ExcitationKind { sinusoid, square_pulse, perturbation_schedule };

struct ExcitationSpec {
  ExcitationKind kind = ExcitationKind::sinusoid;
  double frequency_hz = 1.0;
  double torque_amp_nm = 0.918;
  double duration_s = 4.0;
  double pulse_width_ms = 150.0;
  double pulse_start_s = 0.5;
  std::vector<double> pulse_times_s;   // perturbation_schedule only
  std::vector<double> pulse_signs;     // +1/-1 per scheduled pulse

  [[nodiscard]] double torque(double t) const {
    switch (kind) {
      case ExcitationKind::sinusoid:
        return torque_amp_nm * std::sin(2.0 * kPi * frequency_hz * t);
      case ExcitationKind::square_pulse:
        return (t >= pulse_start_s && t < pulse_start_s + pulse_width_ms * 1e-3) ? torque_amp_nm
                                                                                 : 0.0;
      case ExcitationKind::perturbation_schedule: {
        const double w = pulse_width_ms * 1e-3;
        for (std::size_t i = 0; i < pulse_times_s.size(); ++i)
          if (t >= pulse_times_s[i] && t < pulse_times_s[i] + w)
            return torque_amp_nm * (i < pulse_signs.size() ? pulse_signs[i] : 1.0);
        return 0.0;
      }
    }
    return 0.0;
  }

  [[nodiscard]] nlohmann::json to_json() const {
    const char* names[] = {"sinusoid", "square_pulse", "perturbation_schedule"};
    nlohmann::json j{{"kind", names[static_cast<int>(kind)]},
                     {"frequency_hz", frequency_hz},
                     {"torque_amp_nm", torque_amp_nm},
                     {"duration_s", duration_s},
                     {"pulse_width_ms", pulse_width_ms},
                     {"pulse_start_s", pulse_start_s}};
    if (!pulse_times_s.empty()) {
      j["pulse_times_s"] = pulse_times_s;
      j["pulse_signs"] = pulse_signs;
    }
    return j;
  }

  static ExcitationSpec from_json(const nlohmann::json& j) {
    ExcitationSpec e;
    const std::string k = j.at("kind").get<std::string>();
    if (k == "sinusoid")
      e.kind = ExcitationKind::sinusoid;
    else if (k == "square_pulse")
      e.kind = ExcitationKind::square_pulse;
    else if (k == "perturbation_schedule")
      e.kind = ExcitationKind::perturbation_schedule;
    else
      throw ConfigError("excitation: unknown kind " + k);
    e.frequency_hz = j.at("frequency_hz").get<double>();
    e.torque_amp_nm = j.at("torque_amp_nm").get<double>();
    e.duration_s = j.at("duration_s").get<double>();
    e.pulse_width_ms = j.at("pulse_width_ms").get<double>();
    e.pulse_start_s = j.value("pulse_start_s", 0.5);
    if (j.contains("pulse_times_s")) {
      e.pulse_times_s = j.at("pulse_times_s").get<std::vector<double>>();
      e.pulse_signs = j.at("pulse_signs").get<std::vector<double>>();
    }
    return e;
  }

  // Training-style sets are restricted to the collection protocol.
  void validate_training_style() const {
    if (kind != ExcitationKind::sinusoid)
      throw ConfigError("training excitation must be sinusoidal");
    const bool freq_ok =
        frequency_hz == 0.5 || frequency_hz == 1.0 || frequency_hz == 2.0;
    const bool amp_ok = torque_amp_nm == 0.918 || torque_amp_nm == 1.377;
    if (!freq_ok) throw ConfigError("training excitation frequency must be 0.5, 1, or 2 Hz");
    if (!amp_ok) throw ConfigError("training excitation torque must be 0.918 or 1.377 N m");
  }
};

// Plant mechanical state [x, xdot] under sealed chambers; pressures are
// algebraic functions of x.
class PlantField {
 public:
  static constexpr std::size_t kDim = 2;

  PlantField(const SyntheticPlant& plant, double m_f, double m_e, const ExcitationSpec& exc)
      : plant_(&plant), m_f_(m_f), m_e_(m_e), exc_(&exc) {}

  void eval(double t, const std::array<double, 2>& y, std::array<double, 2>& dy) const {
    const double F_ext = exc_->torque(t) / plant_->r_p;
    dy[0] = y[1];
    dy[1] = plant_net_force(*plant_, y[0], y[1], m_f_, m_e_, F_ext) / plant_->mass;
  }

 private:
  const SyntheticPlant* plant_;
  double m_f_, m_e_;
  const ExcitationSpec* exc_;
};

struct DatasetMeta {
  double pf_psi = 0.0, pe_psi = 0.0;
  double mf_g = 0.0, me_g = 0.0;
  ExcitationSpec excitation;
  std::uint64_t plant_hash = 0;
  std::uint64_t seed = 0;
  bool noise = false;

  [[nodiscard]] nlohmann::json to_json() const {
    return nlohmann::json{{"pf_psi", pf_psi},       {"pe_psi", pe_psi},
                          {"mf_g", mf_g},           {"me_g", me_g},
                          {"excitation", excitation.to_json()},
                          {"plant_hash", plant_hash},
                          {"seed", seed},           {"noise", noise}};
  }

  static DatasetMeta from_json(const nlohmann::json& j) {
    DatasetMeta m;
    try {
      m.pf_psi = j.at("pf_psi").get<double>();
      m.pe_psi = j.at("pe_psi").get<double>();
      m.mf_g = j.at("mf_g").get<double>();
      m.me_g = j.at("me_g").get<double>();
      m.excitation = ExcitationSpec::from_json(j.at("excitation"));
      m.plant_hash = j.at("plant_hash").get<std::uint64_t>();
      m.seed = j.at("seed").get<std::uint64_t>();
      m.noise = j.at("noise").get<bool>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("dataset metadata: ") + e.what());
    }
    return m;
  }
};

// Uniform 1 kHz trial record. Channels carry the recorded units (mm, mm/s,
// gauge kPa, N); the clean_ copies are the pre-noise values.
struct TrajectoryDataset {
  double sample_rate_hz = 1000.0;
  std::vector<double> t;
  std::vector<double> x_mm, xdot_mm_s, pf_kpa, pe_kpa, fe_n;
  std::vector<double> clean_x_mm, clean_xdot_mm_s, clean_pf_kpa, clean_pe_kpa;
  DatasetMeta meta;

  [[nodiscard]] std::size_t size() const { return t.size(); }
};

inline constexpr double kNoiseSigmaXMm = 0.01;
inline constexpr double kNoiseSigmaXdotMmS = 0.1;
inline constexpr double kNoiseSigmaPKpa = 0.5;

[[nodiscard]] inline TrajectoryDataset generate_dataset(const SyntheticPlant& plant,
                                                        double pf_psi, double pe_psi,
                                                        const ExcitationSpec& exc,
                                                        std::uint64_t seed, bool noise = true) {
  const TrialSetup setup = masses_for_pair(plant, pf_psi, pe_psi);
  PlantField field(plant, setup.m_f, setup.m_e, exc);

  const double dt = 1e-3;
  const auto n = static_cast<std::size_t>(std::llround(exc.duration_s / dt));
  OdeSolveSpec spec;
  spec.t0 = 0.0;
  spec.t1 = exc.duration_s;
  spec.step = dt;
  spec.sample_times = linspace(0.0, exc.duration_s, n + 1);
  spec.method = OdeMethod::RK4;

  const auto res = integrate(field, {setup.x0, 0.0}, spec);

  TrajectoryDataset d;
  d.meta.pf_psi = pf_psi;
  d.meta.pe_psi = pe_psi;
  d.meta.mf_g = setup.m_f * 1e3;
  d.meta.me_g = setup.m_e * 1e3;
  d.meta.excitation = exc;
  d.meta.plant_hash = plant.hash();
  d.meta.seed = seed;
  d.meta.noise = noise;

  const std::size_t count = res.sample_times.size();
  d.t = res.sample_times;
  d.clean_x_mm.resize(count);
  d.clean_xdot_mm_s.resize(count);
  d.clean_pf_kpa.resize(count);
  d.clean_pe_kpa.resize(count);
  d.fe_n.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double x = res.states[k][0];
    d.clean_x_mm[k] = x * 1e3;
    d.clean_xdot_mm_s[k] = res.states[k][1] * 1e3;
    d.clean_pf_kpa[k] = pa_to_kpa(plant_gauge_pressure(plant, Side::flexor, setup.m_f, x));
    d.clean_pe_kpa[k] = pa_to_kpa(plant_gauge_pressure(plant, Side::extensor, setup.m_e, x));
    d.fe_n[k] = exc.torque(d.t[k]) / plant.r_p;
  }

  d.x_mm = d.clean_x_mm;
  d.xdot_mm_s = d.clean_xdot_mm_s;
  d.pf_kpa = d.clean_pf_kpa;
  d.pe_kpa = d.clean_pe_kpa;
  if (noise) {
    Rng rx = Rng::stream(seed, 1), rv = Rng::stream(seed, 2);
    Rng rf = Rng::stream(seed, 3), re = Rng::stream(seed, 4);
    for (std::size_t k = 0; k < count; ++k) {
      d.x_mm[k] += kNoiseSigmaXMm * rx.normal();
      d.xdot_mm_s[k] += kNoiseSigmaXdotMmS * rv.normal();
      d.pf_kpa[k] += kNoiseSigmaPKpa * rf.normal();
      d.pe_kpa[k] += kNoiseSigmaPKpa * re.normal();
    }
  }
  return d;
}

// Co-contraction grid enumeration: cross product of gauge levels with the
// excitation protocol cycled deterministically across cells.
struct GridPoint {
  double pf_psi, pe_psi;
  ExcitationSpec excitation;
  std::uint64_t seed;
  std::size_t i, j;  // grid indices
};

[[nodiscard]] inline std::vector<double> grid_levels_psi(bool full_grid) {
  if (full_grid) {
    std::vector<double> v;
    for (double p = 10.0; p <= 80.0 + 1e-9; p += 5.0) v.push_back(p);
    return v;
  }
  return {10.0, 27.5, 45.0, 62.5, 80.0};
}

[[nodiscard]] inline std::vector<GridPoint> generate_grid_specs(const std::vector<double>& levels,
                                                                std::uint64_t base_seed,
                                                                double duration_s = 4.0) {
  const double freqs[] = {0.5, 1.0, 2.0};
  const double amps[] = {0.918, 1.377};
  std::vector<GridPoint> out;
  out.reserve(levels.size() * levels.size());
  for (std::size_t i = 0; i < levels.size(); ++i) {
    for (std::size_t j = 0; j < levels.size(); ++j) {
      GridPoint g;
      g.pf_psi = levels[i];
      g.pe_psi = levels[j];
      g.excitation.kind = ExcitationKind::sinusoid;
      g.excitation.frequency_hz = freqs[(i * levels.size() + j) % 3];
      g.excitation.torque_amp_nm = amps[(i + j) % 2];
      g.excitation.duration_s = duration_s;
      g.excitation.validate_training_style();
      g.seed = base_seed + i * levels.size() + j;
      g.i = i;
      g.j = j;
      out.push_back(g);
    }
  }
  return out;
}

}  // namespace pamode
