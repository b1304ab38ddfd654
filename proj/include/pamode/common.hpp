#pragma once

/// Shared primitives: error types, unit constants, deterministic RNG, and
/// small numeric helpers used across the library.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace pamode {

// === Errors ================================================================

/// A state or derivative stopped being finite mid-solve. Training converts
/// this into a penalty loss instead of aborting.
struct NonFiniteState : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Input left the physically meaningful domain (geometry bounds, negative
/// volumes, non-positive masses).
struct OutOfRange : std::domain_error {
  using std::domain_error::domain_error;
};

/// A signal required zero crossings and none were found.
struct NoCrossings : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A statistic is undefined because the series has no variance.
struct ZeroVariance : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent run configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A least-squares design matrix with collapsed pivots.
struct RankDeficient : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem failure or malformed on-disk artifact.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// === Unit constants ========================================================

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kAtmospherePa = 101325.0;
inline constexpr double kPsiToPa = 6894.757;

[[nodiscard]] inline constexpr double psi_to_pa(double psi) { return psi * kPsiToPa; }
[[nodiscard]] inline constexpr double pa_to_psi(double pa) { return pa / kPsiToPa; }
[[nodiscard]] inline constexpr double pa_to_kpa(double pa) { return pa * 1e-3; }
[[nodiscard]] inline constexpr double kpa_to_pa(double kpa) { return kpa * 1e3; }

// === Small helpers =========================================================

[[nodiscard]] inline constexpr double sqr(double v) { return v * v; }

template <std::size_t N>
[[nodiscard]] inline bool all_finite(const std::array<double, N>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

[[nodiscard]] inline bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

/// Overflow-safe softplus; keeps trainable physical parameters positive.
[[nodiscard]] inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

/// Inverse of softplus, used to seed raw parameters from positive values.
[[nodiscard]] inline double softplus_inverse(double v) {
  if (v <= 0.0) throw OutOfRange("softplus_inverse: value must be positive");
  return v > 30.0 ? v : std::log(std::expm1(v));
}

[[nodiscard]] inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

[[nodiscard]] inline std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = a;
    return out;
  }
  const double d = (b - a) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) out[i] = a + d * static_cast<double>(i);
  out.back() = b;
  return out;
}

// === Deterministic RNG =====================================================

/// splitmix64 hop, used to derive independent stream seeds from one run seed.
[[nodiscard]] inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// mt19937_64 with explicit distributions (Box–Muller for normals) so that
/// sequences are pinned by the standard, not by the library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Derived generator for an independent, reproducible substream.
  [[nodiscard]] static Rng stream(std::uint64_t seed, std::uint64_t stream_id) {
    return Rng(splitmix64(seed ^ splitmix64(stream_id)));
  }

  /// Uniform in [0, 1) with 53-bit resolution.
  [[nodiscard]] double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  [[nodiscard]] double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
  }

  [[nodiscard]] double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * kPi * u2);
  }

  [[nodiscard]] double normal(double mu, double sigma) { return mu + sigma * normal(); }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace pamode
