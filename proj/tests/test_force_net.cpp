#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include <catch2/catch_amalgamated.hpp>
#include <json.hpp>

#include "pamode/common.hpp"
#include "pamode/force_net.hpp"

using namespace pamode;

namespace {

ForceNet random_net(std::uint64_t seed) { return ForceNet::init(seed); }

// Net computing output_scale * (w . u_normalized): one live first-layer row,
// pass-through hidden wiring.
ForceNet linear_probe_net(const std::array<double, 4>& w) {
  ForceNet net;
  std::vector<double> p(ForceNet::kParamCount, 0.0);
  for (std::size_t j = 0; j < 4; ++j) p[j] = w[j];
  p[ForceNet::kOffW2 + 0] = 1.0;          // W2[0][0]
  p[ForceNet::kOffW3 + 0] = 1.0;          // w3[0]
  net.output_scale = 1.0;
  net.load_params(p);
  return net;
}

}  // namespace

TEST_CASE("forward: all-zero net outputs zero everywhere", "[force_net]") {
  ForceNet net;
  CHECK(net.forward(0.0, 0.0, 0.0, 0.0) == 0.0);
  CHECK(net.forward(7.3, -41.0, 0.08, 0.11) == 0.0);
  const auto g = net.grad_inputs(1.0, 2.0, 0.05, 0.06);
  for (double v : g) CHECK(v == 0.0);
}

TEST_CASE("forward: zero biases and zero normalized input give zero output", "[force_net]") {
  auto net = random_net(3);
  // init uses zero biases, zero offsets: normalized input is exactly zero.
  CHECK(net.forward(0.0, 0.0, 0.0, 0.0) == 0.0);
}

TEST_CASE("forward: linear probe matches closed form", "[force_net]") {
  const std::array<double, 4> w = {0.4, -0.2, 1.5, 0.3};
  auto net = linear_probe_net(w);
  // Input chosen so the live pre-activation is positive (identity region).
  const double x = 5.0, xd = -10.0, mf = 0.09, me = 0.02;
  const std::array<double, 4> un = {x / 10.0, xd / 50.0, mf / 0.1, me / 0.1};
  double expect = 0.0;
  for (std::size_t j = 0; j < 4; ++j) expect += w[j] * un[j];
  REQUIRE(expect > 0.0);
  CHECK(net.forward(x, xd, mf, me) == Catch::Approx(expect).epsilon(1e-14));

  const auto g = net.grad_inputs(x, xd, mf, me);
  CHECK(g[0] == Catch::Approx(w[0] / 10.0).epsilon(1e-13));
  CHECK(g[1] == Catch::Approx(w[1] / 50.0).epsilon(1e-13));
  CHECK(g[2] == Catch::Approx(w[2] / 0.1).epsilon(1e-13));
  CHECK(g[3] == Catch::Approx(w[3] / 0.1).epsilon(1e-13));
}

TEST_CASE("grad_inputs: finite-difference oracle on random nets", "[force_net]") {
  Rng rng = Rng::stream(99, 1);
  for (int trial = 0; trial < 5; ++trial) {
    auto net = random_net(100 + static_cast<std::uint64_t>(trial));
    const std::array<double, 4> u = {20.0 * (rng.uniform() - 0.5), 80.0 * (rng.uniform() - 0.5),
                                     0.03 + 0.1 * rng.uniform(), 0.03 + 0.1 * rng.uniform()};
    const auto g = net.grad_inputs(u[0], u[1], u[2], u[3]);
    const std::array<double, 4> scale = net.input_scale;
    for (std::size_t j = 0; j < 4; ++j) {
      const double d = 1e-4 * scale[j];
      auto at = [&](double v) {
        std::array<double, 4> q = u;
        q[j] = v;
        return net.forward(q[0], q[1], q[2], q[3]);
      };
      const double fd = (at(u[j] + d) - at(u[j] - d)) / (2.0 * d);
      if (std::abs(fd) > 1e-8) {
        CHECK(std::abs(g[j] - fd) / std::abs(fd) < 1e-5);
      } else {
        CHECK(std::abs(g[j] - fd) < 1e-8);
      }
    }
  }
}

TEST_CASE("grad_weights: zero upstream gives zero gradient", "[force_net]") {
  auto net = random_net(11);
  const auto g = net.grad_weights({1.0, 2.0, 0.05, 0.07}, 0.0);
  for (double v : g) CHECK(v == 0.0);
}

TEST_CASE("grad_weights: output bias gradient equals upstream (unit output scale)",
          "[force_net]") {
  auto net = random_net(12);
  net.output_scale = 1.0;
  const auto g = net.grad_weights({3.0, -8.0, 0.06, 0.04}, 1.7);
  CHECK(g[ForceNet::kOffB3] == 1.7);
  net.output_scale = 100.0;
  const auto g2 = net.grad_weights({3.0, -8.0, 0.06, 0.04}, 1.7);
  CHECK(g2[ForceNet::kOffB3] == Catch::Approx(170.0).epsilon(1e-14));
}

TEST_CASE("grad_weights: finite-difference oracle on sampled coordinates", "[force_net]") {
  auto net = random_net(21);
  const std::array<double, 4> u = {4.0, -12.0, 0.05, 0.09};
  const double upstream = 0.83;
  const auto g = net.grad_weights(u, upstream);

  std::vector<double> p(net.params().begin(), net.params().end());
  Rng rng = Rng::stream(22, 0);
  int checked = 0;
  while (checked < 20) {
    const std::size_t k =
        static_cast<std::size_t>(rng.uniform() * static_cast<double>(ForceNet::kParamCount));
    // f is linear in each single weight between activation kinks, so a
    // wide central difference is exact and avoids cancellation noise.
    const double d = 1e-4;
    auto eval_at = [&](double v) {
      std::vector<double> q = p;
      q[k] = v;
      ForceNet probe = net;
      probe.load_params(q);
      return probe.forward(u[0], u[1], u[2], u[3]);
    };
    const double fd = upstream * (eval_at(p[k] + d) - eval_at(p[k] - d)) / (2.0 * d);
    if (std::abs(fd) < 1e-6) continue;  // dead coordinate, relative check meaningless
    CHECK(std::abs(g[k] - fd) / std::abs(fd) < 1e-5);
    ++checked;
  }
}

TEST_CASE("vjp: returns forward value and accumulates", "[force_net]") {
  auto net = random_net(31);
  const std::array<double, 4> u = {-2.0, 14.0, 0.08, 0.03};
  std::vector<double> g(ForceNet::kParamCount, 0.0);
  std::array<double, 4> ub{};
  const double v1 = net.vjp(u, 0.5, g, &ub);
  CHECK(v1 == net.forward(u[0], u[1], u[2], u[3]));
  const std::vector<double> g_once = g;
  const std::array<double, 4> ub_once = ub;
  net.vjp(u, 0.5, g, &ub);
  for (std::size_t k = 0; k < g.size(); ++k) CHECK(g[k] == Catch::Approx(2.0 * g_once[k]).margin(1e-300));
  for (std::size_t j = 0; j < 4; ++j) CHECK(ub[j] == Catch::Approx(2.0 * ub_once[j]).margin(1e-300));
}

TEST_CASE("init: reproducible from seed, distinct across seeds", "[force_net]") {
  auto a = ForceNet::init(7);
  auto b = ForceNet::init(7);
  auto c = ForceNet::init(8);
  REQUIRE(a.params().size() == b.params().size());
  bool same_ab = true, same_ac = true;
  for (std::size_t k = 0; k < a.params().size(); ++k) {
    same_ab = same_ab && a.params()[k] == b.params()[k];
    same_ac = same_ac && a.params()[k] == c.params()[k];
  }
  CHECK(same_ab);
  CHECK_FALSE(same_ac);
}

TEST_CASE("init: mean magnitude at zero input over 100 seeds below 1 N", "[force_net]") {
  double acc = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s)
    acc += std::abs(ForceNet::init(s).forward(0.0, 0.0, 0.0, 0.0));
  CHECK(acc / 100.0 < 1.0);
}

TEST_CASE("forward is piecewise linear along a line", "[force_net]") {
  auto net = random_net(41);
  Rng rng = Rng::stream(42, 0);
  const std::array<double, 4> p = {3.0, -5.0, 0.05, 0.07};
  const std::array<double, 4> d = {rng.normal(), rng.normal(), 0.01 * rng.normal(),
                                   0.01 * rng.normal()};
  auto count_kinks = [&](int n) {
    std::vector<double> f(n);
    double fmax = 0.0;
    for (int i = 0; i < n; ++i) {
      const double t = -1.0 + 2.0 * i / (n - 1);
      f[i] = net.forward(p[0] + t * d[0], p[1] + t * d[1], p[2] + t * d[2], p[3] + t * d[3]);
      fmax = std::max(fmax, std::abs(f[i]));
    }
    int kinks = 0;
    for (int i = 1; i + 1 < n; ++i) {
      const double dd = f[i + 1] - 2.0 * f[i] + f[i - 1];
      if (std::abs(dd) > 1e-9 * fmax) ++kinks;
    }
    return kinks;
  };
  // Second differences vanish exactly on linear segments, so the flagged
  // count tracks the (finite) number of kinks in the interval and does not
  // grow under mesh refinement; a smooth nonlinear f would flag every point.
  const int coarse = count_kinks(201);
  const int fine = count_kinks(401);
  CHECK(coarse > 0);
  CHECK(coarse < 150);
  CHECK(fine <= coarse + 30);
}

TEST_CASE("checkpoint: JSON round-trip reproduces outputs bit-identically", "[force_net]") {
  auto net = random_net(51);
  const std::string text = net.to_json().dump();
  const auto loaded = ForceNet::from_json(nlohmann::json::parse(text));
  Rng rng = Rng::stream(52, 0);
  for (int i = 0; i < 50; ++i) {
    const double x = 30.0 * (rng.uniform() - 0.5);
    const double xd = 100.0 * (rng.uniform() - 0.5);
    const double mf = 0.15 * rng.uniform();
    const double me = 0.15 * rng.uniform();
    CHECK(net.forward(x, xd, mf, me) == loaded.forward(x, xd, mf, me));
  }
  CHECK(loaded.leaky_slope == net.leaky_slope);
  CHECK(loaded.output_scale == net.output_scale);
}

TEST_CASE("checkpoint: malformed documents raise ConfigError", "[force_net]") {
  auto net = random_net(61);
  auto j = net.to_json();
  j["layers"][1]["w"][3].erase(10);  // break a row length
  CHECK_THROWS_AS(ForceNet::from_json(j), ConfigError);
  auto j2 = net.to_json();
  j2.erase("output_scale");
  CHECK_THROWS_AS(ForceNet::from_json(j2), ConfigError);
  auto j3 = net.to_json();
  j3["input_scale"][2] = 0.0;
  CHECK_THROWS_AS(ForceNet::from_json(j3), ConfigError);
}
