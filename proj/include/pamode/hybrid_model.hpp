// Full hybrid dynamics of the antagonistic joint: state [x, xdot, P_f, P_e]
// driven by the learnable force, chamber gas dynamics, the training-only
// auxiliary damping, and an external force signal.
#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "pamode/common.hpp"
#include "pamode/force_net.hpp"
#include "pamode/numerics/adjoint.hpp"
#include "pamode/numerics/rk.hpp"
#include "pamode/physics.hpp"
#include "pamode/signal.hpp"

namespace pamode {

using JointState = std::array<double, 4>;  // x [m], xdot [m/s], P_f, P_e [Pa abs]

[[nodiscard]] inline double torque_to_force(double tau, const PhysicalParams& p) {
  return tau / p.r_p;
}

struct MassState {
  double m_f, m_e;       // kg
  double mdot_f, mdot_e; // kg/s
};

// Chamber masses and external force over a trial. Closed-valve trials use the
// constant masses; planner execution supplies time-varying schedules whose
// slopes provide piecewise-constant mdot.
struct ControlInput {
  double m_f = 0.0;
  double m_e = 0.0;
  double mdot_f = 0.0;
  double mdot_e = 0.0;
  SampledSignal F_e;                      // N; empty means zero
  std::optional<SampledSignal> m_f_sched; // kg vs t
  std::optional<SampledSignal> m_e_sched;

  [[nodiscard]] MassState masses_at(double t) const {
    MassState s{m_f, m_e, mdot_f, mdot_e};
    if (m_f_sched) {
      s.m_f = m_f_sched->value(t);
      s.mdot_f = m_f_sched->slope(t);
    }
    if (m_e_sched) {
      s.m_e = m_e_sched->value(t);
      s.mdot_e = m_e_sched->slope(t);
    }
    return s;
  }

  [[nodiscard]] double force_at(double t) const { return F_e.empty() ? 0.0 : F_e.value(t); }

  void validate() const {
    if (!m_f_sched && !(m_f > 0.0)) throw OutOfRange("ControlInput: m_f must be positive");
    if (!m_e_sched && !(m_e > 0.0)) throw OutOfRange("ControlInput: m_e must be positive");
  }
};

struct HybridModel {
  PhysicalParams params;
  ForceNet net;
  double aux_damping = 0.0;  // B [kg/s], training-only

  // Trainable vector: [raw_m, raw_nu, net weights]; C stays fixed.
  static constexpr std::size_t kPhysParams = 2;
  [[nodiscard]] static std::size_t trainable_count() {
    return kPhysParams + ForceNet::kParamCount;
  }

  [[nodiscard]] std::vector<double> pack_trainable() const {
    std::vector<double> p(trainable_count());
    p[0] = params.raw_m;
    p[1] = params.raw_nu;
    std::copy(net.params().begin(), net.params().end(), p.begin() + kPhysParams);
    return p;
  }

  void load_trainable(std::span<const double> p) {
    if (p.size() != trainable_count())
      throw std::invalid_argument("HybridModel: bad trainable size");
    params.raw_m = p[0];
    params.raw_nu = p[1];
    net.load_params(p.subspan(kPhysParams));
  }

  [[nodiscard]] nlohmann::json to_json() const {
    return nlohmann::json{{"version", 1},
                          {"physics",
                           {{"raw_m", params.raw_m},
                            {"raw_C", params.raw_C},
                            {"raw_nu", params.raw_nu},
                            {"r0_m", params.r0},
                            {"L0_m", params.L0},
                            {"rp_m", params.r_p},
                            {"m_kg", params.m()},
                            {"C_m2_s2", params.C()},
                            {"nu", params.nu()}}},
                          {"aux_damping_kg_s", aux_damping},
                          {"net", net.to_json()}};
  }

  static HybridModel from_json(const nlohmann::json& j) {
    HybridModel m;
    try {
      if (j.at("version").get<int>() != 1) throw ConfigError("model checkpoint: unknown version");
      const auto& ph = j.at("physics");
      m.params.raw_m = ph.at("raw_m").get<double>();
      m.params.raw_C = ph.at("raw_C").get<double>();
      m.params.raw_nu = ph.at("raw_nu").get<double>();
      m.params.r0 = ph.at("r0_m").get<double>();
      m.params.L0 = ph.at("L0_m").get<double>();
      m.params.r_p = ph.at("rp_m").get<double>();
      m.aux_damping = j.at("aux_damping_kg_s").get<double>();
      m.net = ForceNet::from_json(j.at("net"));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("model checkpoint: ") + e.what());
    }
    if (!(m.aux_damping >= 0.0)) throw ConfigError("model checkpoint: aux damping negative");
    return m;
  }
};

// OdeField/GradOdeField over the joint state for a fixed control input.
class HybridField {
 public:
  static constexpr std::size_t kDim = 4;

  HybridField(HybridModel& model, const ControlInput& input) : model_(&model), input_(&input) {}

  [[nodiscard]] std::size_t param_count() const { return HybridModel::trainable_count(); }
  void load_params(std::span<const double> p) { model_->load_trainable(p); }

  void eval(double t, const JointState& y, JointState& dy) const {
    const MassState ms = input_->masses_at(t);
    const PhysicalParams& ph = model_->params;
    const double f_net =
        model_->net.forward(y[0] * 1e3, y[1] * 1e3, ms.m_f * 1e3, ms.m_e * 1e3);
    dy[0] = y[1];
    dy[1] = (input_->force_at(t) + f_net - model_->aux_damping * y[1]) / ph.m();
    dy[2] = pressure_rate(ph, Side::flexor, ms.m_f, ms.mdot_f, y[0], y[1]);
    dy[3] = pressure_rate(ph, Side::extensor, ms.m_e, ms.mdot_e, y[0], y[1]);
  }

  // Accumulates kbar . (dg/dy) into ybar and kbar . (dg/dparams) into pbar.
  // Pressure states never feed back, so their adjoints only source through
  // the explicit x/xdot dependence of the rate rows.
  void vjp(double t, const JointState& y, const JointState& kbar, JointState& ybar,
           std::span<double> pbar) const {
    const MassState ms = input_->masses_at(t);
    const PhysicalParams& ph = model_->params;
    const double m = ph.m();
    const double C = ph.C();

    // Row 0: dy0 = y1.
    ybar[1] += kbar[0];

    // Row 1 through the net and the damping.
    if (kbar[1] != 0.0) {
      std::array<double, 4> ub{};
      const double upstream = kbar[1] / m;
      const double f_net = model_->net.vjp(
          {y[0] * 1e3, y[1] * 1e3, ms.m_f * 1e3, ms.m_e * 1e3}, upstream,
          pbar.subspan(HybridModel::kPhysParams), &ub);
      ybar[0] += ub[0] * 1e3;
      ybar[1] += ub[1] * 1e3 - kbar[1] * model_->aux_damping / m;
      // d/dm of (F/m) = -F/m^2 = -(row value)/m.
      const double g1 = (input_->force_at(t) + f_net - model_->aux_damping * y[1]) / m;
      pbar[0] += kbar[1] * (-g1 / m) * sigmoid(ph.raw_m);
    }

    // Rows 2 and 3: Pdot = C (mdot/V - m_i V' xdot / V^2).
    const double snu = sigmoid(ph.raw_nu);
    auto chamber = [&](Side side, double m_i, double mdot_i, double kb) {
      if (kb == 0.0) return;
      const ChamberDerivs d = chamber_derivs(ph, side, y[0]);
      const double V2 = d.V * d.V;
      const double dPdx =
          C * (-mdot_i * d.Vx / V2 - m_i * y[1] * (d.Vxx / V2 - 2.0 * d.Vx * d.Vx / (V2 * d.V)));
      const double dPdv = -C * m_i * d.Vx / V2;
      const double dPdnu =
          C * (-mdot_i * d.Vnu / V2 - m_i * y[1] * (d.Vxnu / V2 - 2.0 * d.Vx * d.Vnu / (V2 * d.V)));
      ybar[0] += kb * dPdx;
      ybar[1] += kb * dPdv;
      pbar[1] += kb * dPdnu * snu;
    };
    chamber(Side::flexor, ms.m_f, ms.mdot_f, kbar[2]);
    chamber(Side::extensor, ms.m_e, ms.mdot_e, kbar[3]);
  }

 private:
  HybridModel* model_;
  const ControlInput* input_;
};

[[nodiscard]] inline JointState vector_field(HybridModel& model, const JointState& state,
                                             const ControlInput& input, double t) {
  JointState dy;
  HybridField(model, input).eval(t, state, dy);
  return dy;
}

// Initial state at mechanical (x, xdot) with gas-law-consistent pressures.
[[nodiscard]] inline JointState consistent_state(const HybridModel& model, double x, double xdot,
                                                 double m_f, double m_e) {
  return {x, xdot, pressure_from_mass(model.params, Side::flexor, m_f, x),
          pressure_from_mass(model.params, Side::extensor, m_e, x)};
}

[[nodiscard]] inline SolveResult<4> simulate(HybridModel& model, const JointState& x0,
                                             const ControlInput& input, const OdeSolveSpec& spec) {
  input.validate();
  HybridField field(model, input);
  return integrate(field, x0, spec);
}

}  // namespace pamode
