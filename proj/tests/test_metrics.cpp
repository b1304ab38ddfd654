#include <cmath>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "pamode/common.hpp"
#include "pamode/metrics.hpp"

using namespace pamode;
using Catch::Approx;

TEST_CASE("r2 scores prediction quality against the measured variance") {
  const std::vector<double> meas{1.0, 2.0, 3.5, 2.5, 4.0, 1.5};
  CHECK(r2(meas, meas) == 1.0);

  const double mean = (1.0 + 2.0 + 3.5 + 2.5 + 4.0 + 1.5) / 6.0;
  CHECK(r2(std::vector<double>(6, mean), meas) == Approx(0.0).margin(1e-12));

  CHECK_THROWS_AS(r2({1.0, 2.0}, {3.0, 3.0}), ZeroVariance);
  CHECK_THROWS_AS(r2({1.0}, {1.0, 2.0}), std::invalid_argument);

  // Affine invariance: rescaling both series identically leaves R^2 alone,
  // and R^2 never exceeds 1.
  Rng rng = Rng::stream(5, 1);
  std::vector<double> a(40), b(40), as(40), bs(40);
  for (std::size_t k = 0; k < a.size(); ++k) {
    a[k] = rng.normal();
    b[k] = rng.normal();
    as[k] = 3.7 * a[k] - 2.1;
    bs[k] = 3.7 * b[k] - 2.1;
  }
  CHECK(r2(a, b) == Approx(r2(as, bs)).epsilon(1e-12));
  CHECK(r2(a, b) <= 1.0);
}

TEST_CASE("delta metric uses the fixed theoretical stiffness range") {
  CHECK(delta_metric(139.54, 140.07) == Approx(1.06).margin(0.005));
  CHECK(delta_metric(149.71, 143.89) == Approx(11.64).margin(0.005));
  CHECK(delta_metric(150.0, 150.0) == 0.0);
  CHECK(delta_metric(140.07, 139.54) == delta_metric(139.54, 140.07));
}

TEST_CASE("paired t-test matches reference statistics") {
  // Differences {1,2,3,4,5}: t = 3/(1.5811/sqrt 5) = 4.2426, p = 0.013236.
  const std::vector<double> a{1.0, 2.0, 3.0, 4.0, 5.0};
  const std::vector<double> zero5(5, 0.0);
  const TTestResult r1 = paired_t_test(a, zero5);
  CHECK(r1.t == Approx(4.2426406871).epsilon(1e-9));
  CHECK(r1.p == Approx(0.0132355996).epsilon(1e-6));
  CHECK(r1.n == 5);

  // Mixed-sign differences with a weak effect.
  const std::vector<double> d2{0.5, -0.2, 0.3, 0.1, 0.4, -0.1};
  const TTestResult r2_ = paired_t_test(d2, std::vector<double>(6, 0.0));
  CHECK(r2_.t == Approx(1.4555562743).epsilon(1e-9));
  CHECK(r2_.p == Approx(0.2052815052).epsilon(1e-6));

  // Strong effect, small p.
  const std::vector<double> d3{2.0, 2.5, 1.5, 2.2, 1.8, 2.1, 1.9, 2.4};
  const TTestResult r3 = paired_t_test(d3, std::vector<double>(8, 0.0));
  CHECK(r3.t == Approx(17.8333122842).epsilon(1e-9));
  CHECK(r3.p == Approx(4.303e-7).epsilon(1e-3));

  // Identical samples: no effect, p = 1; constant nonzero difference: error.
  const TTestResult req = paired_t_test(a, a);
  CHECK(req.t == 0.0);
  CHECK(req.p == 1.0);
  CHECK_THROWS_AS(paired_t_test({2.0, 3.0, 4.0}, {1.0, 2.0, 3.0}), ZeroVariance);
  CHECK_THROWS_AS(paired_t_test({1.0}, {2.0}), std::invalid_argument);
}

TEST_CASE("delay alignment finds integer-sample shifts") {
  const double rate = 1000.0;
  const std::size_t n = 600;
  // An enveloped burst avoids the periodic ambiguity of a pure sinusoid.
  auto burst = [&](std::ptrdiff_t shift, std::size_t k) {
    const auto kk = static_cast<std::ptrdiff_t>(k) - shift;
    const double t = static_cast<double>(kk) / rate;
    return std::exp(-sqr((t - 0.3) / 0.08)) * std::sin(2.0 * kPi * 12.0 * t);
  };
  std::vector<double> ref(n), same(n), plus40(n), minus25(n);
  for (std::size_t k = 0; k < n; ++k) {
    ref[k] = burst(0, k);
    same[k] = burst(0, k);
    plus40[k] = burst(40, k);
    minus25[k] = burst(-25, k);
  }
  CHECK(align_delay(ref, same, rate, 100.0) == 0.0);
  CHECK(align_delay(ref, plus40, rate, 100.0) == Approx(40.0).margin(1.0));
  CHECK(align_delay(ref, minus25, rate, 100.0) == Approx(-25.0).margin(1.0));

  // Anti-correlated pure sinusoids lock onto the half-period shift.
  std::vector<double> sine(n), anti(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / rate;
    sine[k] = std::sin(2.0 * kPi * 5.0 * t);
    anti[k] = -sine[k];
  }
  CHECK(std::abs(align_delay(sine, anti, rate, 150.0)) == Approx(100.0).margin(1.0));
}

TEST_CASE("tracking metrics summarize position error") {
  const std::size_t n = 1000;
  std::vector<double> t(n), ref(n), run(n);
  for (std::size_t k = 0; k < n; ++k) {
    t[k] = static_cast<double>(k) * 1e-3;
    ref[k] = std::sin(2.0 * kPi * 2.0 * t[k]);
    run[k] = ref[k];
  }
  TrackingMetrics m = tracking_metrics(t, ref, run);
  CHECK(m.rms_mm == 0.0);
  CHECK(m.max_mm == 0.0);
  CHECK(m.per_cycle_rms_mm.empty());

  for (double& v : run) v += 0.1;
  m = tracking_metrics(t, ref, run, 0.5);
  CHECK(m.rms_mm == Approx(0.1).epsilon(1e-12));
  CHECK(m.max_mm == Approx(0.1).epsilon(1e-12));
  REQUIRE(m.per_cycle_rms_mm.size() == 2);
  CHECK(m.per_cycle_rms_mm[0] == Approx(0.1).epsilon(1e-12));
  CHECK(m.per_cycle_rms_mm[1] == Approx(0.1).epsilon(1e-12));

  CHECK_THROWS_AS(tracking_metrics(t, ref, std::vector<double>(3, 0.0)),
                  std::invalid_argument);
}
