// Piecewise-linear sampled signals: external force profiles and planned mass
// schedules are both represented this way.
#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "pamode/common.hpp"

namespace pamode {

class SampledSignal {
 public:
  SampledSignal() = default;

  SampledSignal(std::vector<double> times, std::vector<double> values)
      : t_(std::move(times)), v_(std::move(values)) {
    if (t_.size() != v_.size()) throw std::invalid_argument("SampledSignal: size mismatch");
    if (t_.empty()) throw std::invalid_argument("SampledSignal: empty");
    for (std::size_t i = 1; i < t_.size(); ++i)
      if (!(t_[i] > t_[i - 1])) throw std::invalid_argument("SampledSignal: times not increasing");
    if (!all_finite(t_) || !all_finite(v_))
      throw std::invalid_argument("SampledSignal: non-finite sample");
  }

  [[nodiscard]] static SampledSignal constant(double v) { return SampledSignal({0.0}, {v}); }

  [[nodiscard]] bool empty() const { return t_.empty(); }
  [[nodiscard]] const std::vector<double>& times() const { return t_; }
  [[nodiscard]] const std::vector<double>& values() const { return v_; }
  [[nodiscard]] double t_front() const { return t_.front(); }
  [[nodiscard]] double t_back() const { return t_.back(); }

  // Linear interpolation, clamped to the end values outside the support.
  [[nodiscard]] double value(double t) const {
    if (t_.empty()) return 0.0;
    if (t <= t_.front()) return v_.front();
    if (t >= t_.back()) return v_.back();
    const std::size_t i = segment(t);
    const double w = (t - t_[i]) / (t_[i + 1] - t_[i]);
    return v_[i] + w * (v_[i + 1] - v_[i]);
  }

  // Piecewise-constant derivative; 0 outside the support and at kinks the
  // right-sided slope.
  [[nodiscard]] double slope(double t) const {
    if (t_.size() < 2 || t < t_.front() || t >= t_.back()) return 0.0;
    const std::size_t i = segment(t);
    return (v_[i + 1] - v_[i]) / (t_[i + 1] - t_[i]);
  }

 private:
  [[nodiscard]] std::size_t segment(double t) const {
    const auto it = std::upper_bound(t_.begin(), t_.end(), t);
    const std::size_t i = static_cast<std::size_t>(it - t_.begin());
    return i == 0 ? 0 : std::min(i - 1, t_.size() - 2);
  }

  std::vector<double> t_;
  std::vector<double> v_;
};

}  // namespace pamode
