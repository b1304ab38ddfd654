// Evaluation metrics: coefficient of determination, stiffness-consistency
// delta, paired t-test, cross-correlation delay alignment, and tracking-error
// statistics.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "pamode/common.hpp"

namespace pamode {

// === R^2 ====================================================================

[[nodiscard]] inline double r2(const std::vector<double>& predicted,
                               const std::vector<double>& measured) {
  if (predicted.size() != measured.size() || measured.empty())
    throw std::invalid_argument("r2: length mismatch");
  const double n = static_cast<double>(measured.size());
  double mean = 0.0;
  for (double v : measured) mean += v;
  mean /= n;
  double ss_tot = 0.0, ss_res = 0.0;
  for (std::size_t k = 0; k < measured.size(); ++k) {
    ss_tot += sqr(measured[k] - mean);
    ss_res += sqr(predicted[k] - measured[k]);
  }
  if (ss_tot == 0.0) throw ZeroVariance("r2: measured series has zero variance");
  return 1.0 - ss_res / ss_tot;
}

// === Stiffness-consistency delta ===========================================

// Theoretical joint stiffness range used as the fixed denominator: the
// commanded band spans 126 to 176 N/mm.
inline constexpr double kStiffnessRangeNmm = 50.0;

[[nodiscard]] inline double delta_metric(double k_at_zero_nmm, double k_at_vmax_nmm) {
  return std::abs(k_at_zero_nmm - k_at_vmax_nmm) / kStiffnessRangeNmm * 100.0;
}

// === Paired t-test ==========================================================

namespace detail {

// Regularized incomplete beta I_x(a, b) via the Lentz continued fraction,
// with the symmetry transform for x outside the rapid-convergence region.
[[nodiscard]] inline double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16, kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) <= kEps) break;
  }
  return h;
}

[[nodiscard]] inline double reg_inc_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace detail

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  std::size_t n = 0;
};

// Two-sided paired t-test. Identical samples are the degenerate "no effect,
// no spread" case and report (t = 0, p = 1); nonzero constant differences
// have zero variance with a nonzero mean and are an error.
[[nodiscard]] inline TTestResult paired_t_test(const std::vector<double>& a,
                                               const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("paired_t_test: need equal lengths >= 2");
  const std::size_t n = a.size();
  double mean = 0.0;
  for (std::size_t k = 0; k < n; ++k) mean += a[k] - b[k];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t k = 0; k < n; ++k) var += sqr(a[k] - b[k] - mean);
  var /= static_cast<double>(n - 1);
  if (var == 0.0) {
    if (mean == 0.0) return {0.0, 1.0, n};
    throw ZeroVariance("paired_t_test: constant nonzero differences");
  }
  const double t = mean / std::sqrt(var / static_cast<double>(n));
  const double df = static_cast<double>(n - 1);
  const double p = detail::reg_inc_beta(0.5 * df, 0.5, df / (df + t * t));
  return {t, p, n};
}

// === Delay alignment ========================================================

// Dominant lag of `delayed` relative to `reference` in ms: the argmax of the
// normalized cross-correlation over integer-sample lags in [-max_lag, max_lag].
// Positive result means `delayed` trails the reference. For pure periodic
// signals the window must exceed one period or the lag is ambiguous.
[[nodiscard]] inline double align_delay(const std::vector<double>& reference,
                                        const std::vector<double>& delayed,
                                        double sample_rate_hz, double max_lag_ms) {
  if (reference.size() != delayed.size() || reference.size() < 2)
    throw std::invalid_argument("align_delay: need equal lengths >= 2");
  if (!(sample_rate_hz > 0.0) || !(max_lag_ms >= 0.0))
    throw std::invalid_argument("align_delay: bad rate or lag bound");
  const auto n = static_cast<std::ptrdiff_t>(reference.size());
  const auto max_lag = std::min<std::ptrdiff_t>(
      n - 1, static_cast<std::ptrdiff_t>(std::llround(max_lag_ms * 1e-3 * sample_rate_hz)));

  double best_score = -std::numeric_limits<double>::infinity();
  std::ptrdiff_t best_lag = 0;
  for (std::ptrdiff_t lag = -max_lag; lag <= max_lag; ++lag) {
    // Overlap of reference[k] with delayed[k + lag].
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -lag);
    const std::ptrdiff_t hi = std::min(n, n - lag);
    if (hi - lo < 2) continue;
    double dot = 0.0, nr = 0.0, nd = 0.0;
    for (std::ptrdiff_t k = lo; k < hi; ++k) {
      dot += reference[static_cast<std::size_t>(k)] * delayed[static_cast<std::size_t>(k + lag)];
      nr += sqr(reference[static_cast<std::size_t>(k)]);
      nd += sqr(delayed[static_cast<std::size_t>(k + lag)]);
    }
    const double denom = std::sqrt(nr * nd);
    const double score = denom > 0.0 ? dot / denom : 0.0;
    if (score > best_score) {
      best_score = score;
      best_lag = lag;
    }
  }
  return static_cast<double>(best_lag) / sample_rate_hz * 1e3;
}

// === Tracking metrics =======================================================

struct TrackingMetrics {
  double rms_mm = 0.0;
  double max_mm = 0.0;
  std::vector<double> per_cycle_rms_mm;  // empty unless cycle_s > 0
};

[[nodiscard]] inline TrackingMetrics tracking_metrics(const std::vector<double>& t_s,
                                                      const std::vector<double>& desired_mm,
                                                      const std::vector<double>& executed_mm,
                                                      double cycle_s = 0.0) {
  const std::size_t n = t_s.size();
  if (desired_mm.size() != n || executed_mm.size() != n || n == 0)
    throw std::invalid_argument("tracking_metrics: length mismatch");
  TrackingMetrics m;
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double e = executed_mm[k] - desired_mm[k];
    acc += sqr(e);
    m.max_mm = std::max(m.max_mm, std::abs(e));
  }
  m.rms_mm = std::sqrt(acc / static_cast<double>(n));

  if (cycle_s > 0.0) {
    std::size_t begin = 0;
    while (begin < n) {
      const double t_end = t_s[begin] + cycle_s;
      std::size_t end = begin;
      while (end < n && t_s[end] < t_end - 1e-12) ++end;
      if (end == begin) break;
      double cacc = 0.0;
      for (std::size_t k = begin; k < end; ++k) cacc += sqr(executed_mm[k] - desired_mm[k]);
      m.per_cycle_rms_mm.push_back(std::sqrt(cacc / static_cast<double>(end - begin)));
      begin = end;
    }
  }
  return m;
}

}  // namespace pamode
