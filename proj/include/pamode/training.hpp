// Trajectory-level loss, staged training schedule (auxiliary damping
// annealing plus progressive dataset expansion), and the identification loop
// that produces a trained HybridModel from recorded trials.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pamode/common.hpp"
#include "pamode/hybrid_model.hpp"
#include "pamode/numerics/adjoint.hpp"
#include "pamode/numerics/optim.hpp"
#include "pamode/numerics/rk.hpp"
#include "pamode/plant.hpp"

namespace pamode {

// === Channels and loss ======================================================

// Trajectory channels in recording units: mm, mm/s, kPa gauge.
struct Channels {
  std::vector<double> t_s, x_mm, xdot_mm_s, pf_kpa, pe_kpa;

  [[nodiscard]] std::size_t size() const { return t_s.size(); }
};

[[nodiscard]] inline Channels recorded_channels(const TrajectoryDataset& d) {
  return {d.t, d.x_mm, d.xdot_mm_s, d.pf_kpa, d.pe_kpa};
}

[[nodiscard]] inline Channels clean_channels(const TrajectoryDataset& d) {
  if (!d.meta.noise) return recorded_channels(d);
  return {d.t, d.clean_x_mm, d.clean_xdot_mm_s, d.clean_pf_kpa, d.clean_pe_kpa};
}

// SI joint states -> recording units.
[[nodiscard]] inline Channels states_to_channels(const std::vector<double>& t,
                                                 const std::vector<JointState>& states) {
  Channels c;
  c.t_s = t;
  c.x_mm.reserve(states.size());
  c.xdot_mm_s.reserve(states.size());
  c.pf_kpa.reserve(states.size());
  c.pe_kpa.reserve(states.size());
  for (const JointState& y : states) {
    c.x_mm.push_back(y[0] * 1e3);
    c.xdot_mm_s.push_back(y[1] * 1e3);
    c.pf_kpa.push_back(pa_to_kpa(y[2] - kAtmospherePa));
    c.pe_kpa.push_back(pa_to_kpa(y[3] - kAtmospherePa));
  }
  return c;
}

// Weighted trajectory MSE; channel terms are plain per-sample mean squares in
// mm^2, (mm/s)^2 and kPa^2, combined as total = 100*(x + xdot) + pf + pe.
struct LossReport {
  double total = 0.0;
  double x = 0.0, xdot = 0.0, pf = 0.0, pe = 0.0;
  std::vector<double> per_dataset;  // per-dataset totals for group evaluations

  [[nodiscard]] nlohmann::json channels_json() const {
    return nlohmann::json{{"x_mm2", x}, {"xdot_mm2_s2", xdot}, {"pf_kpa2", pf}, {"pe_kpa2", pe}};
  }
};

[[nodiscard]] inline LossReport trajectory_loss(const Channels& predicted,
                                                const Channels& measured) {
  const std::size_t n = measured.size();
  if (n == 0 || predicted.size() != n || predicted.x_mm.size() != n ||
      predicted.xdot_mm_s.size() != n || predicted.pf_kpa.size() != n ||
      predicted.pe_kpa.size() != n || measured.x_mm.size() != n ||
      measured.xdot_mm_s.size() != n || measured.pf_kpa.size() != n || measured.pe_kpa.size() != n)
    throw std::invalid_argument("trajectory_loss: channel length mismatch");
  for (std::size_t k = 0; k < n; ++k)
    if (std::abs(predicted.t_s[k] - measured.t_s[k]) > 1e-9)
      throw std::invalid_argument("trajectory_loss: timestamp mismatch");

  LossReport r;
  for (std::size_t k = 0; k < n; ++k) {
    r.x += sqr(predicted.x_mm[k] - measured.x_mm[k]);
    r.xdot += sqr(predicted.xdot_mm_s[k] - measured.xdot_mm_s[k]);
    r.pf += sqr(predicted.pf_kpa[k] - measured.pf_kpa[k]);
    r.pe += sqr(predicted.pe_kpa[k] - measured.pe_kpa[k]);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  r.x *= inv_n;
  r.xdot *= inv_n;
  r.pf *= inv_n;
  r.pe *= inv_n;
  r.total = 100.0 * (r.x + r.xdot) + r.pf + r.pe;
  return r;
}

// SampleLoss over one integrated segment of a dataset. Measured channels are
// referenced at offset `begin`; `inv_n` is 1/N for the dataset's total sample
// count, so segment losses sum to the canonical whole-trajectory formula.
class ChannelLoss {
 public:
  ChannelLoss(const TrajectoryDataset& d, std::size_t begin, std::size_t count, double inv_n)
      : d_(&d), begin_(begin), count_(count), inv_n_(inv_n) {}

  [[nodiscard]] double eval(const std::vector<JointState>& s) const {
    check(s.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < count_; ++k) {
      const std::size_t i = begin_ + k;
      acc += 100.0 * (sqr(s[k][0] * 1e3 - d_->x_mm[i]) + sqr(s[k][1] * 1e3 - d_->xdot_mm_s[i])) +
             sqr(pa_to_kpa(s[k][2] - kAtmospherePa) - d_->pf_kpa[i]) +
             sqr(pa_to_kpa(s[k][3] - kAtmospherePa) - d_->pe_kpa[i]);
    }
    return acc * inv_n_;
  }

  void grad(const std::vector<JointState>& s, std::vector<JointState>& g) const {
    check(s.size());
    g.assign(s.size(), JointState{});
    for (std::size_t k = 0; k < count_; ++k) {
      const std::size_t i = begin_ + k;
      // d/dy of the mm- and kPa-scaled squared errors, back in SI units.
      g[k][0] = inv_n_ * 200.0 * (s[k][0] * 1e3 - d_->x_mm[i]) * 1e3;
      g[k][1] = inv_n_ * 200.0 * (s[k][1] * 1e3 - d_->xdot_mm_s[i]) * 1e3;
      g[k][2] = inv_n_ * 2.0 * (pa_to_kpa(s[k][2] - kAtmospherePa) - d_->pf_kpa[i]) * 1e-3;
      g[k][3] = inv_n_ * 2.0 * (pa_to_kpa(s[k][3] - kAtmospherePa) - d_->pe_kpa[i]) * 1e-3;
    }
  }

 private:
  void check(std::size_t got) const {
    if (got != count_) throw std::invalid_argument("ChannelLoss: sample count mismatch");
  }

  const TrajectoryDataset* d_;
  std::size_t begin_, count_;
  double inv_n_;
};

// === Velocity from imported position data ==================================

// Five-point central first derivative (exact through quartics) with one-sided
// second-order stencils at the edges, for imported recordings that lack a
// measured velocity channel.
[[nodiscard]] inline std::vector<double> derive_velocity_5pt(const std::vector<double>& x,
                                                             double dt) {
  const std::size_t n = x.size();
  if (n < 5) throw std::invalid_argument("derive_velocity_5pt: need at least 5 samples");
  if (!(dt > 0.0)) throw std::invalid_argument("derive_velocity_5pt: dt must be positive");
  std::vector<double> v(n);
  v[0] = (-3.0 * x[0] + 4.0 * x[1] - x[2]) / (2.0 * dt);
  v[1] = (x[2] - x[0]) / (2.0 * dt);
  for (std::size_t k = 2; k + 2 < n; ++k)
    v[k] = (-x[k + 2] + 8.0 * x[k + 1] - 8.0 * x[k - 1] + x[k - 2]) / (12.0 * dt);
  v[n - 2] = (x[n - 1] - x[n - 3]) / (2.0 * dt);
  v[n - 1] = (3.0 * x[n - 1] - 4.0 * x[n - 2] + x[n - 3]) / (2.0 * dt);
  return v;
}

// === Stage plan =============================================================

namespace detail {

[[nodiscard]] inline long long psi_key(double v) { return std::llround(v * 1e6); }

}  // namespace detail

// Cumulative dataset groups over a pressure grid: symmetric pairs first
// (near-center outward), then the anti-diagonal by increasing pressure
// difference, then the two iso-total lines nearest the anti-diagonal total.
[[nodiscard]] inline std::vector<std::vector<std::size_t>> stage_plan(
    const std::vector<DatasetMeta>& metas) {
  if (metas.empty()) return {};
  double lo = metas[0].pf_psi, hi = metas[0].pf_psi;
  for (const DatasetMeta& m : metas) {
    lo = std::min({lo, m.pf_psi, m.pe_psi});
    hi = std::max({hi, m.pf_psi, m.pe_psi});
  }
  const double center = 0.5 * (lo + hi);
  const long long diag_total = detail::psi_key(lo + hi);

  std::vector<char> taken(metas.size(), 0);
  std::vector<std::size_t> order;
  auto take = [&](auto&& pred, auto&& rank) {
    std::vector<std::size_t> batch;
    for (std::size_t i = 0; i < metas.size(); ++i)
      if (!taken[i] && pred(metas[i])) batch.push_back(i);
    std::sort(batch.begin(), batch.end(), [&](std::size_t a, std::size_t b) {
      const auto ra = rank(metas[a]), rb = rank(metas[b]);
      if (ra != rb) return ra < rb;
      return a < b;
    });
    for (std::size_t i : batch) taken[i] = 1;
    order.insert(order.end(), batch.begin(), batch.end());
  };
  auto symmetric = [](const DatasetMeta& m) {
    return detail::psi_key(m.pf_psi) == detail::psi_key(m.pe_psi);
  };

  std::vector<std::vector<std::size_t>> groups;
  take(symmetric, [&](const DatasetMeta& m) {
    return std::pair(std::abs(m.pf_psi - center), m.pf_psi);
  });
  groups.push_back(order);

  take(
      [&](const DatasetMeta& m) {
        return detail::psi_key(m.pf_psi + m.pe_psi) == diag_total && !symmetric(m);
      },
      [&](const DatasetMeta& m) { return std::pair(std::abs(m.pf_psi - m.pe_psi), m.pf_psi); });
  if (order.size() > groups.back().size()) groups.push_back(order);

  // The two remaining totals closest to the anti-diagonal total.
  std::map<long long, double> totals;
  for (std::size_t i = 0; i < metas.size(); ++i)
    if (!taken[i]) totals.emplace(detail::psi_key(metas[i].pf_psi + metas[i].pe_psi),
                                  metas[i].pf_psi + metas[i].pe_psi);
  std::vector<std::pair<double, long long>> ranked;
  for (const auto& [key, total] : totals)
    if (key != diag_total) ranked.emplace_back(std::abs(total - (lo + hi)), key);
  std::sort(ranked.begin(), ranked.end());
  ranked.resize(std::min<std::size_t>(2, ranked.size()));

  take(
      [&](const DatasetMeta& m) {
        const long long t = detail::psi_key(m.pf_psi + m.pe_psi);
        return std::any_of(ranked.begin(), ranked.end(),
                           [&](const auto& r) { return r.second == t; });
      },
      [&](const DatasetMeta& m) { return std::pair(std::abs(m.pf_psi - m.pe_psi), m.pf_psi); });
  if (order.size() > groups.back().size()) groups.push_back(order);
  return groups;
}

// === Training configuration ================================================

inline constexpr double kPlateauRelTol = 1e-4;
inline constexpr double kDivergencePenalty = 1e6;

struct DampingStage {
  std::size_t stage = 0;
  double b_kg_s = 0.0;
};

struct TrainConfig {
  std::size_t max_epochs = 5000;  // total across all stages
  double lr0 = 1e-2;
  double plateau_factor = 0.95;
  std::size_t plateau_patience = 25;
  std::size_t early_stop_patience = 100;
  std::size_t stage_epoch_cap = 1000;
  std::vector<DampingStage> damping_schedule{
      {0, 6500.0}, {1, 2000.0}, {2, 500.0}, {3, 100.0}, {4, 0.0}};
  // Cumulative dataset index groups; stage s trains on group min(s, last).
  // Empty means every stage uses all datasets.
  std::vector<std::vector<std::size_t>> stage_datasets;
  double window_s = 0.0;  // 0 = whole trajectory

  void validate(std::size_t n_datasets) const {
    if (!(lr0 > 0.0)) throw ConfigError("TrainConfig: lr0 must be positive");
    if (!(plateau_factor > 0.0 && plateau_factor <= 1.0))
      throw ConfigError("TrainConfig: plateau_factor must be in (0, 1]");
    if (!(window_s >= 0.0)) throw ConfigError("TrainConfig: window_s must be non-negative");
    if (damping_schedule.empty()) throw ConfigError("TrainConfig: empty damping schedule");
    for (std::size_t s = 0; s < damping_schedule.size(); ++s) {
      if (damping_schedule[s].stage != s)
        throw ConfigError("TrainConfig: damping schedule stages must be 0,1,...");
      if (!(damping_schedule[s].b_kg_s >= 0.0))
        throw ConfigError("TrainConfig: damping must be non-negative");
      if (s > 0 && damping_schedule[s].b_kg_s > damping_schedule[s - 1].b_kg_s)
        throw ConfigError("TrainConfig: damping schedule must be non-increasing");
    }
    if (damping_schedule.back().b_kg_s != 0.0)
      throw ConfigError("TrainConfig: damping schedule must end at 0");
    for (const auto& group : stage_datasets) {
      if (group.empty()) throw ConfigError("TrainConfig: empty dataset group");
      for (std::size_t idx : group)
        if (idx >= n_datasets) throw ConfigError("TrainConfig: dataset index out of range");
    }
  }
};

struct TrainResult {
  HybridModel model;  // retained-best parameters of the final (B = 0) stage
  double best_loss = std::numeric_limits<double>::infinity();  // min over all epochs
  // Best loss within the final stage alone; this is the returned model's own
  // training loss, since only the final stage shares its B = 0 dynamics.
  double final_stage_loss = std::numeric_limits<double>::infinity();
  std::vector<double> stage_best;  // cumulative best after each stage
  std::size_t epochs_run = 0;
  std::string log_jsonl;  // one record per epoch
};

// === Forward-only evaluation ================================================

namespace detail {

struct Segment {
  std::size_t begin = 0, count = 0;
  JointState x0{};
  OdeSolveSpec spec;
};

[[nodiscard]] inline JointState measured_state(const TrajectoryDataset& d, std::size_t k) {
  return {d.x_mm[k] * 1e-3, d.xdot_mm_s[k] * 1e-3, kpa_to_pa(d.pf_kpa[k]) + kAtmospherePa,
          kpa_to_pa(d.pe_kpa[k]) + kAtmospherePa};
}

struct DatasetPlan {
  ControlInput input;
  std::vector<Segment> segments;
  double inv_n = 0.0;
};

[[nodiscard]] inline DatasetPlan plan_dataset(const TrajectoryDataset& d, double window_s) {
  if (d.size() < 2) throw ConfigError("train: dataset needs at least 2 samples");
  if (!(d.meta.mf_g > 0.0 && d.meta.me_g > 0.0))
    throw ConfigError("train: dataset masses must be positive");
  if (!(d.sample_rate_hz > 0.0)) throw ConfigError("train: bad sample rate");

  DatasetPlan p;
  p.input.m_f = d.meta.mf_g * 1e-3;
  p.input.m_e = d.meta.me_g * 1e-3;
  p.input.F_e = SampledSignal(d.t, d.fe_n);
  p.inv_n = 1.0 / static_cast<double>(d.size());

  const double dt = 1.0 / d.sample_rate_hz;
  const std::size_t n = d.size();
  std::size_t step_pts = n - 1;
  if (window_s > 0.0)
    step_pts = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(window_s * d.sample_rate_hz)), 1, n - 1);
  for (std::size_t b = 0; b + 1 < n; b += step_pts) {
    const std::size_t e = std::min(b + step_pts, n - 1);
    Segment seg;
    seg.begin = b;
    seg.count = e - b + 1;
    seg.x0 = measured_state(d, b);
    seg.spec.t0 = d.t[b];
    seg.spec.t1 = d.t[e];
    seg.spec.step = dt;
    seg.spec.method = OdeMethod::RK4;
    seg.spec.sample_times.assign(d.t.begin() + static_cast<std::ptrdiff_t>(b),
                                 d.t.begin() + static_cast<std::ptrdiff_t>(e + 1));
    p.segments.push_back(std::move(seg));
  }
  return p;
}

}  // namespace detail

// Forward simulation of a trial from its recorded initial state, at the
// recording's own sample grid. Integration faults propagate to the caller.
[[nodiscard]] inline Channels predict_channels(HybridModel& model, const TrajectoryDataset& d) {
  const detail::DatasetPlan plan = detail::plan_dataset(d, 0.0);
  const SolveResult<4> res = simulate(model, plan.segments[0].x0, plan.input,
                                      plan.segments[0].spec);
  return states_to_channels(res.sample_times, res.states);
}

[[nodiscard]] inline LossReport dataset_loss(HybridModel& model, const TrajectoryDataset& d) {
  return trajectory_loss(predict_channels(model, d), recorded_channels(d));
}

// === Staged training loop ===================================================

// Staged full-batch Adam over integrate_with_grad. Stage s anneals the
// auxiliary damping per the schedule and trains on cumulative dataset group
// min(s, last); each stage starts from the previous stage's retained-best
// parameters with fresh optimizer state. Divergence of a dataset's solve is
// penalized, not fatal. Deterministic for fixed (datasets, config, seed).
[[nodiscard]] inline TrainResult train(const std::vector<TrajectoryDataset>& datasets,
                                       const TrainConfig& config, std::uint64_t seed) {
  if (datasets.empty()) throw ConfigError("train: no datasets");
  config.validate(datasets.size());

  std::vector<detail::DatasetPlan> plans;
  plans.reserve(datasets.size());
  for (const TrajectoryDataset& d : datasets) plans.push_back(detail::plan_dataset(d, config.window_s));

  TrainResult out;
  out.model.params = init_params();
  out.model.net = ForceNet::init(seed);
  std::vector<double> params = out.model.pack_trainable();

  std::ostringstream log;
  std::vector<double> grad(params.size());
  std::size_t global_epoch = 0;
  double global_best = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> all_indices(datasets.size());
  for (std::size_t i = 0; i < all_indices.size(); ++i) all_indices[i] = i;

  std::vector<double> best_params = params;
  for (const DampingStage& stage : config.damping_schedule) {
    const std::vector<std::size_t>& group =
        config.stage_datasets.empty()
            ? all_indices
            : config.stage_datasets[std::min(stage.stage, config.stage_datasets.size() - 1)];
    out.model.aux_damping = stage.b_kg_s;

    AdamState adam(params.size());
    double lr = config.lr0;
    double stage_best = std::numeric_limits<double>::infinity();
    std::vector<double> stage_best_params = params;
    std::size_t plateau_wait = 0, early_wait = 0;

    for (std::size_t e = 0; e < config.stage_epoch_cap && global_epoch < config.max_epochs; ++e) {
      std::fill(grad.begin(), grad.end(), 0.0);
      LossReport report;
      std::size_t diverged = 0;
      for (std::size_t idx : group) {
        const detail::DatasetPlan& plan = plans[idx];
        HybridField field(out.model, plan.input);
        double dloss = 0.0;
        bool ok = true;
        std::vector<double> dgrad(params.size(), 0.0);
        LossReport dreport;
        for (const detail::Segment& seg : plan.segments) {
          ChannelLoss loss(datasets[idx], seg.begin, seg.count, plan.inv_n);
          try {
            auto res = integrate_with_grad(field, params, seg.x0, seg.spec, loss);
            dloss += res.value;
            for (std::size_t i = 0; i < dgrad.size(); ++i) dgrad[i] += res.grad_params[i];
            for (std::size_t k = 0; k < seg.count; ++k) {
              const std::size_t i = seg.begin + k;
              const JointState& y = res.samples[k];
              dreport.x += sqr(y[0] * 1e3 - datasets[idx].x_mm[i]);
              dreport.xdot += sqr(y[1] * 1e3 - datasets[idx].xdot_mm_s[i]);
              dreport.pf += sqr(pa_to_kpa(y[2] - kAtmospherePa) - datasets[idx].pf_kpa[i]);
              dreport.pe += sqr(pa_to_kpa(y[3] - kAtmospherePa) - datasets[idx].pe_kpa[i]);
            }
          } catch (const NonFiniteState&) {  // covers NonFiniteGradient
            ok = false;
          } catch (const OutOfRange&) {
            ok = false;
          }
          if (!ok) break;
        }
        if (ok) {
          report.per_dataset.push_back(dloss);
          for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += dgrad[i];
          report.x += dreport.x * plan.inv_n;
          report.xdot += dreport.xdot * plan.inv_n;
          report.pf += dreport.pf * plan.inv_n;
          report.pe += dreport.pe * plan.inv_n;
        } else {
          report.per_dataset.push_back(kDivergencePenalty);
          ++diverged;
        }
      }
      const double inv_g = 1.0 / static_cast<double>(group.size());
      double epoch_loss = 0.0;
      for (double v : report.per_dataset) epoch_loss += v;
      epoch_loss *= inv_g;
      const std::size_t fitted = group.size() - diverged;
      const double inv_f = fitted > 0 ? 1.0 / static_cast<double>(fitted) : 0.0;
      report.x *= inv_f;
      report.xdot *= inv_f;
      report.pf *= inv_f;
      report.pe *= inv_f;
      report.total = epoch_loss;

      nlohmann::json rec{{"epoch", global_epoch},       {"stage", stage.stage},
                         {"B", stage.b_kg_s},           {"lr", lr},
                         {"loss_total", epoch_loss},    {"loss_channels", report.channels_json()}};
      if (diverged > 0) rec["diverged"] = diverged;
      log << rec.dump() << "\n";
      ++global_epoch;

      const double prev_best = stage_best;
      if (epoch_loss < stage_best) {
        stage_best = epoch_loss;
        stage_best_params = params;
        early_wait = 0;
      } else {
        ++early_wait;
      }
      const double rel_gain =
          (prev_best - epoch_loss) / std::max(std::abs(prev_best), 1e-12);
      if (std::isfinite(prev_best) && rel_gain < kPlateauRelTol) {
        if (++plateau_wait >= config.plateau_patience) {
          lr *= config.plateau_factor;
          plateau_wait = 0;
        }
      } else {
        plateau_wait = 0;
      }
      if (early_wait >= config.early_stop_patience) break;

      if (fitted > 0) {
        for (double& g : grad) g *= inv_g;
        adam_step(params, grad, adam, lr);
      }
    }

    params = stage_best_params;
    best_params = stage_best_params;
    global_best = std::min(global_best, stage_best);
    out.stage_best.push_back(global_best);
    out.final_stage_loss = stage_best;
  }

  out.model.load_trainable(best_params);
  out.model.aux_damping = 0.0;
  out.best_loss = global_best;
  out.epochs_run = global_epoch;
  out.log_jsonl = log.str();
  return out;
}

}  // namespace pamode
