// Learnable interaction force f_theta(x, xdot, m_f, m_e): 4-96-96-1 MLP with
// LeakyReLU, hand-written reverse mode, and JSON checkpointing.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "pamode/common.hpp"

namespace pamode {

// Physical inputs are (x [mm], xdot [mm/s], m_f [g], m_e [g]); the network
// sees (u - input_offset) / input_scale and its scalar output is multiplied
// by output_scale [N].
class ForceNet {
 public:
  static constexpr std::size_t kIn = 4;
  static constexpr std::size_t kHidden = 96;
  static constexpr std::size_t kW1 = kIn * kHidden;
  static constexpr std::size_t kW2 = kHidden * kHidden;
  static constexpr std::size_t kW3 = kHidden;
  // Flat layout: W1 row-major (out x in), b1, W2 row-major, b2, w3, b3.
  static constexpr std::size_t kOffB1 = kW1;
  static constexpr std::size_t kOffW2 = kOffB1 + kHidden;
  static constexpr std::size_t kOffB2 = kOffW2 + kW2;
  static constexpr std::size_t kOffW3 = kOffB2 + kHidden;
  static constexpr std::size_t kOffB3 = kOffW3 + kW3;
  static constexpr std::size_t kParamCount = kOffB3 + 1;

  double leaky_slope = 0.01;
  std::array<double, kIn> input_scale{10.0, 50.0, 0.1, 0.1};
  std::array<double, kIn> input_offset{0.0, 0.0, 0.0, 0.0};
  double output_scale = 100.0;

  ForceNet() : params_(kParamCount, 0.0), w1t_(kW1, 0.0), w2t_(kW2, 0.0) {}

  [[nodiscard]] std::span<const double> params() const { return params_; }

  void load_params(std::span<const double> p) {
    if (p.size() != kParamCount) throw std::invalid_argument("ForceNet: bad parameter count");
    std::copy(p.begin(), p.end(), params_.begin());
    sync_transposed();
  }

  // Kaiming-uniform fan-in weights (gain for the leaky slope), zero biases so
  // the net starts as the exact zero force.
  static ForceNet init(std::uint64_t seed) {
    ForceNet net;
    Rng rng = Rng::stream(seed, 17);
    const double gain = std::sqrt(2.0 / (1.0 + net.leaky_slope * net.leaky_slope));
    auto fill = [&](std::size_t off, std::size_t count, std::size_t fan_in) {
      const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
      for (std::size_t i = 0; i < count; ++i)
        net.params_[off + i] = bound * (2.0 * rng.uniform() - 1.0);
    };
    fill(0, kW1, kIn);
    fill(kOffW2, kW2, kHidden);
    fill(kOffW3, kW3, kHidden);
    net.sync_transposed();
    return net;
  }

  [[nodiscard]] double forward(double x_mm, double xdot_mm_s, double mf_g, double me_g) const {
    std::array<double, kHidden> a1, a2;
    return run_forward({x_mm, xdot_mm_s, mf_g, me_g}, a1, a2);
  }

  [[nodiscard]] std::array<double, kIn> grad_inputs(double x_mm, double xdot_mm_s, double mf_g,
                                                    double me_g) const {
    std::array<double, kIn> ubar{};
    vjp({x_mm, xdot_mm_s, mf_g, me_g}, 1.0, {}, &ubar);
    return ubar;
  }

  [[nodiscard]] std::vector<double> grad_weights(const std::array<double, kIn>& u,
                                                 double upstream) const {
    std::vector<double> g(kParamCount, 0.0);
    vjp(u, upstream, g, nullptr);
    return g;
  }

  // Recomputes the forward pass and accumulates upstream * (df/dparams) into
  // pbar (if non-empty) and upstream * (df/dinputs) into *ubar (if non-null).
  // Returns the forward value.
  double vjp(const std::array<double, kIn>& u, double upstream, std::span<double> pbar,
             std::array<double, kIn>* ubar) const {
    if (!pbar.empty() && pbar.size() != kParamCount)
      throw std::invalid_argument("ForceNet: bad gradient span");
    std::array<double, kIn> un;
    for (std::size_t j = 0; j < kIn; ++j) un[j] = (u[j] - input_offset[j]) / input_scale[j];

    std::array<double, kHidden> a1, a2;
    const double value = run_forward_normalized(un, a1, a2);
    const double* w = params_.data();

    // Output layer: y = w3 . a2 + b3, f = output_scale * y.
    const double d3 = upstream * output_scale;
    std::array<double, kHidden> d2;
    const double* w3 = w + kOffW3;
    for (std::size_t i = 0; i < kHidden; ++i)
      d2[i] = d3 * w3[i] * (a2[i] > 0.0 ? 1.0 : leaky_slope);
    if (!pbar.empty()) {
      double* g3 = pbar.data() + kOffW3;
      for (std::size_t i = 0; i < kHidden; ++i) g3[i] += d3 * a2[i];
      pbar[kOffB3] += d3;
    }

    // Hidden layer 2: d1 = s'(z1) o (W2^T d2).
    std::array<double, kHidden> d1{};
    for (std::size_t i = 0; i < kHidden; ++i) {
      const double di = d2[i];
      const double* row = w + kOffW2 + i * kHidden;
      for (std::size_t j = 0; j < kHidden; ++j) d1[j] += di * row[j];
    }
    for (std::size_t j = 0; j < kHidden; ++j) d1[j] *= (a1[j] > 0.0 ? 1.0 : leaky_slope);
    if (!pbar.empty()) {
      for (std::size_t i = 0; i < kHidden; ++i) {
        const double di = d2[i];
        double* grow = pbar.data() + kOffW2 + i * kHidden;
        for (std::size_t j = 0; j < kHidden; ++j) grow[j] += di * a1[j];
        pbar[kOffB2 + i] += di;
      }
    }

    // Input layer.
    if (!pbar.empty()) {
      for (std::size_t i = 0; i < kHidden; ++i) {
        const double di = d1[i];
        double* grow = pbar.data() + i * kIn;
        for (std::size_t j = 0; j < kIn; ++j) grow[j] += di * un[j];
        pbar[kOffB1 + i] += di;
      }
    }
    if (ubar != nullptr) {
      std::array<double, kIn> acc{};
      for (std::size_t i = 0; i < kHidden; ++i) {
        const double di = d1[i];
        const double* row = w + i * kIn;
        for (std::size_t j = 0; j < kIn; ++j) acc[j] += di * row[j];
      }
      for (std::size_t j = 0; j < kIn; ++j) (*ubar)[j] += acc[j] / input_scale[j];
    }
    return value;
  }

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json layers = nlohmann::json::array();
    layers.push_back(layer_json(0, kOffB1, kHidden, kIn));
    layers.push_back(layer_json(kOffW2, kOffB2, kHidden, kHidden));
    layers.push_back(layer_json(kOffW3, kOffB3, 1, kHidden));
    return nlohmann::json{{"version", 1},
                          {"leaky_slope", leaky_slope},
                          {"input_scale", input_scale},
                          {"input_offset", input_offset},
                          {"output_scale", output_scale},
                          {"layers", layers}};
  }

  static ForceNet from_json(const nlohmann::json& j) {
    ForceNet net;
    try {
      if (j.at("version").get<int>() != 1) throw ConfigError("ForceNet checkpoint: unknown version");
      net.leaky_slope = j.at("leaky_slope").get<double>();
      net.input_scale = j.at("input_scale").get<std::array<double, kIn>>();
      net.input_offset = j.at("input_offset").get<std::array<double, kIn>>();
      net.output_scale = j.at("output_scale").get<double>();
      const auto& layers = j.at("layers");
      if (layers.size() != 3) throw ConfigError("ForceNet checkpoint: expected 3 layers");
      net.read_layer(layers[0], 0, kOffB1, kHidden, kIn);
      net.read_layer(layers[1], kOffW2, kOffB2, kHidden, kHidden);
      net.read_layer(layers[2], kOffW3, kOffB3, 1, kHidden);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("ForceNet checkpoint: ") + e.what());
    }
    for (std::size_t j2 = 0; j2 < kIn; ++j2)
      if (!(net.input_scale[j2] > 0.0)) throw ConfigError("ForceNet checkpoint: input_scale <= 0");
    if (!all_finite(net.params_)) throw ConfigError("ForceNet checkpoint: non-finite weight");
    net.sync_transposed();
    return net;
  }

 private:
  [[nodiscard]] double run_forward(const std::array<double, kIn>& u,
                                   std::array<double, kHidden>& a1,
                                   std::array<double, kHidden>& a2) const {
    std::array<double, kIn> un;
    for (std::size_t j = 0; j < kIn; ++j) un[j] = (u[j] - input_offset[j]) / input_scale[j];
    return run_forward_normalized(un, a1, a2);
  }

  double run_forward_normalized(const std::array<double, kIn>& un,
                                std::array<double, kHidden>& a1,
                                std::array<double, kHidden>& a2) const {
    const double* w = params_.data();
    const double* b1 = w + kOffB1;
    for (std::size_t i = 0; i < kHidden; ++i) a1[i] = b1[i];
    for (std::size_t j = 0; j < kIn; ++j) {
      const double uj = un[j];
      const double* col = w1t_.data() + j * kHidden;
      for (std::size_t i = 0; i < kHidden; ++i) a1[i] += uj * col[i];
    }
    for (std::size_t i = 0; i < kHidden; ++i)
      if (a1[i] < 0.0) a1[i] *= leaky_slope;

    const double* b2 = w + kOffB2;
    for (std::size_t i = 0; i < kHidden; ++i) a2[i] = b2[i];
    for (std::size_t j = 0; j < kHidden; ++j) {
      const double aj = a1[j];
      const double* col = w2t_.data() + j * kHidden;
      for (std::size_t i = 0; i < kHidden; ++i) a2[i] += aj * col[i];
    }
    for (std::size_t i = 0; i < kHidden; ++i)
      if (a2[i] < 0.0) a2[i] *= leaky_slope;

    const double* w3 = w + kOffW3;
    double y = params_[kOffB3];
    for (std::size_t i = 0; i < kHidden; ++i) y += w3[i] * a2[i];
    return output_scale * y;
  }

  void sync_transposed() {
    for (std::size_t i = 0; i < kHidden; ++i)
      for (std::size_t j = 0; j < kIn; ++j) w1t_[j * kHidden + i] = params_[i * kIn + j];
    for (std::size_t i = 0; i < kHidden; ++i)
      for (std::size_t j = 0; j < kHidden; ++j)
        w2t_[j * kHidden + i] = params_[kOffW2 + i * kHidden + j];
  }

  [[nodiscard]] nlohmann::json layer_json(std::size_t w_off, std::size_t b_off, std::size_t rows,
                                          std::size_t cols) const {
    nlohmann::json wj = nlohmann::json::array();
    for (std::size_t i = 0; i < rows; ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t j = 0; j < cols; ++j) row.push_back(params_[w_off + i * cols + j]);
      wj.push_back(std::move(row));
    }
    nlohmann::json bj = nlohmann::json::array();
    for (std::size_t i = 0; i < rows; ++i) bj.push_back(params_[b_off + i]);
    return nlohmann::json{{"w", std::move(wj)}, {"b", std::move(bj)}};
  }

  void read_layer(const nlohmann::json& layer, std::size_t w_off, std::size_t b_off,
                  std::size_t rows, std::size_t cols) {
    const auto& wj = layer.at("w");
    const auto& bj = layer.at("b");
    if (wj.size() != rows || bj.size() != rows)
      throw ConfigError("ForceNet checkpoint: layer shape mismatch");
    for (std::size_t i = 0; i < rows; ++i) {
      const auto& row = wj[i];
      if (row.size() != cols) throw ConfigError("ForceNet checkpoint: layer shape mismatch");
      for (std::size_t j = 0; j < cols; ++j) params_[w_off + i * cols + j] = row[j].get<double>();
      params_[b_off + i] = bj[i].get<double>();
    }
  }

  std::vector<double> params_;
  std::vector<double> w1t_;  // kIn x kHidden, column access for forward
  std::vector<double> w2t_;  // kHidden x kHidden transposed
};

}  // namespace pamode
