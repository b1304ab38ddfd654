#pragma once

/// Optimizers: Adam with bias correction (training) and a derivative-free
/// two-stage minimizer (coordinate pattern search from a grid multi-start,
/// then Nelder–Mead refinement) used by per-step mass synthesis and the
/// stiffness/damping fits. Both are fully deterministic.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "pamode/common.hpp"

namespace pamode {

// === Adam ==================================================================

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long t = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline void adam_step(std::vector<double>& params, std::span<const double> grad,
                      AdamState& state, double lr, const AdamConfig& cfg = {}) {
  if (params.size() != grad.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

// === Direct search =========================================================

struct SearchBounds {
  std::vector<double> lo;
  std::vector<double> hi;

  void validate() const {
    if (lo.size() != hi.size() || lo.empty())
      throw std::invalid_argument("SearchBounds: dimension mismatch");
    for (std::size_t i = 0; i < lo.size(); ++i)
      if (!(hi[i] > lo[i])) throw std::invalid_argument("SearchBounds: hi must exceed lo");
  }
};

struct SearchOptions {
  int multistart_per_dim = 4;          // 0 disables the grid stage
  double pattern_init_frac = 0.25;     // initial step as a fraction of the box
  double pattern_tol_frac = 1e-9;      // stop when step shrinks below this fraction
  int pattern_max_iter = 400;
  int simplex_max_iter = 600;
  int simplex_restarts = 3;
  double simplex_tol = 1e-13;
  std::optional<std::vector<double>> warm_start;
};

struct SearchResult {
  std::vector<double> x;
  double value = 0.0;
  std::size_t evals = 0;
};

namespace detail {

inline void clamp_to(const SearchBounds& b, std::vector<double>& x) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], b.lo[i], b.hi[i]);
}

template <class Obj>
void pattern_search(const Obj& f, const SearchBounds& b, const SearchOptions& opt,
                    std::vector<double>& x, double& fx, std::size_t& evals) {
  const std::size_t n = x.size();
  std::vector<double> delta(n), trial(x);
  for (std::size_t i = 0; i < n; ++i) delta[i] = (b.hi[i] - b.lo[i]) * opt.pattern_init_frac;

  for (int iter = 0; iter < opt.pattern_max_iter; ++iter) {
    bool improved = false;
    for (std::size_t i = 0; i < n; ++i) {
      for (double sign : {+1.0, -1.0}) {
        trial = x;
        trial[i] = std::clamp(x[i] + sign * delta[i], b.lo[i], b.hi[i]);
        if (trial[i] == x[i]) continue;
        const double fv = f(trial);
        ++evals;
        if (fv < fx) {
          x = trial;
          fx = fv;
          improved = true;
        }
      }
    }
    if (!improved) {
      bool done = true;
      for (std::size_t i = 0; i < n; ++i) {
        delta[i] *= 0.5;
        if (delta[i] > (b.hi[i] - b.lo[i]) * opt.pattern_tol_frac) done = false;
      }
      if (done) return;
    }
  }
}

template <class Obj>
void nelder_mead(const Obj& f, const SearchBounds& b, const SearchOptions& opt,
                 std::vector<double>& best_x, double& best_f, std::size_t& evals) {
  const std::size_t n = best_x.size();
  struct Vertex {
    std::vector<double> x;
    double f;
  };
  std::vector<Vertex> s(n + 1);
  s[0] = {best_x, best_f};
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> xi = best_x;
    const double span = b.hi[i] - b.lo[i];
    double off = 0.05 * span;
    if (xi[i] + off > b.hi[i]) off = -off;
    xi[i] = std::clamp(xi[i] + off, b.lo[i], b.hi[i]);
    s[i + 1] = {xi, f(xi)};
    ++evals;
  }

  auto order = [&s]() {
    std::sort(s.begin(), s.end(), [](const Vertex& a, const Vertex& c) { return a.f < c.f; });
  };
  std::vector<double> centroid(n), xr(n), xe(n), xc(n);

  for (int iter = 0; iter < opt.simplex_max_iter; ++iter) {
    order();
    if (s.back().f - s.front().f <= opt.simplex_tol * (1.0 + std::abs(s.front().f))) break;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t i = 0; i < n; ++i) centroid[i] += s[v].x[i] / static_cast<double>(n);

    const Vertex& worst = s.back();
    for (std::size_t i = 0; i < n; ++i) xr[i] = centroid[i] + (centroid[i] - worst.x[i]);
    clamp_to(b, xr);
    const double fr = f(xr);
    ++evals;

    if (fr < s.front().f) {
      for (std::size_t i = 0; i < n; ++i) xe[i] = centroid[i] + 2.0 * (centroid[i] - worst.x[i]);
      clamp_to(b, xe);
      const double fe = f(xe);
      ++evals;
      s.back() = fe < fr ? Vertex{xe, fe} : Vertex{xr, fr};
    } else if (fr < s[n - 1].f) {
      s.back() = {xr, fr};
    } else {
      const bool outside = fr < worst.f;
      const std::vector<double>& toward = outside ? xr : worst.x;
      for (std::size_t i = 0; i < n; ++i) xc[i] = centroid[i] + 0.5 * (toward[i] - centroid[i]);
      clamp_to(b, xc);
      const double fc = f(xc);
      ++evals;
      if (fc < std::min(fr, worst.f)) {
        s.back() = {xc, fc};
      } else {
        for (std::size_t v = 1; v <= n; ++v) {
          for (std::size_t i = 0; i < n; ++i)
            s[v].x[i] = s[0].x[i] + 0.5 * (s[v].x[i] - s[0].x[i]);
          s[v].f = f(s[v].x);
          ++evals;
        }
      }
    }
  }
  order();
  if (s.front().f < best_f) {
    best_x = s.front().x;
    best_f = s.front().f;
  }
}

}  // namespace detail

/// Two-stage bounded minimization: grid multi-start + coordinate pattern
/// search, then Nelder–Mead refinement (with restarts) from the incumbent.
/// Best-effort: always returns the best point evaluated.
template <class Obj>
SearchResult direct_search_then_refine(const Obj& f, const SearchBounds& bounds,
                                       const SearchOptions& opt = {}) {
  bounds.validate();
  const std::size_t n = bounds.lo.size();
  std::size_t evals = 0;

  std::vector<std::vector<double>> starts;
  if (opt.warm_start) {
    std::vector<double> w = *opt.warm_start;
    if (w.size() != n) throw std::invalid_argument("direct_search: warm start dimension");
    detail::clamp_to(bounds, w);
    starts.push_back(std::move(w));
  }
  if (opt.multistart_per_dim > 0) {
    const std::size_t g = static_cast<std::size_t>(opt.multistart_per_dim);
    std::size_t total = 1;
    for (std::size_t i = 0; i < n; ++i) total *= g;
    for (std::size_t idx = 0; idx < total; ++idx) {
      std::vector<double> x(n);
      std::size_t rem = idx;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t cell = rem % g;
        rem /= g;
        x[i] = bounds.lo[i] +
               (bounds.hi[i] - bounds.lo[i]) * (static_cast<double>(cell) + 0.5) /
                   static_cast<double>(g);
      }
      starts.push_back(std::move(x));
    }
  }
  if (starts.empty()) {
    std::vector<double> mid(n);
    for (std::size_t i = 0; i < n; ++i) mid[i] = 0.5 * (bounds.lo[i] + bounds.hi[i]);
    starts.push_back(std::move(mid));
  }

  std::vector<double> best_x;
  double best_f = 0.0;
  bool have_best = false;
  for (std::vector<double>& x0 : starts) {
    double fx = f(x0);
    ++evals;
    std::vector<double> x = x0;
    detail::pattern_search(f, bounds, opt, x, fx, evals);
    if (!have_best || fx < best_f) {
      best_x = x;
      best_f = fx;
      have_best = true;
    }
  }

  for (int r = 0; r < opt.simplex_restarts; ++r) {
    const double before = best_f;
    detail::nelder_mead(f, bounds, opt, best_x, best_f, evals);
    if (before - best_f <= opt.simplex_tol * (1.0 + std::abs(before))) break;
  }

  return {best_x, best_f, evals};
}

}  // namespace pamode
