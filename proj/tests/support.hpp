#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "innet/info_metrics.hpp"
#include "innet/inl.hpp"
#include "innet/rng.hpp"

namespace innet::testing {

// Small INL stack over random views, for protocol and gradient tests.
struct TinyStack {
  inl::InlSystem system;
  std::vector<Tensor> views;
  std::vector<int> labels;
};

inline TinyStack tiny_stack(std::size_t nodes, std::size_t rows, std::uint64_t seed,
                            nn::Activation activation = nn::Activation::Tanh,
                            std::size_t hidden = 6, std::size_t latent = 3,
                            std::size_t classes = 3, bool custom_prior = false) {
  Rng rng(seed);
  std::vector<Tensor> views;
  inl::InlArchitecture arch;
  for (std::size_t j = 0; j < nodes; ++j) {
    const std::size_t width = 4 + j;
    views.push_back(rng.normal_tensor(rows, width));
    arch.input_widths.push_back(width);
    arch.latent_widths.push_back(latent + (j % 2));
  }
  std::vector<int> labels;
  for (std::size_t n = 0; n < rows; ++n) labels.push_back(static_cast<int>(rng.index(classes)));
  arch.encoder_hidden = {hidden};
  arch.fusion_hidden = {hidden + 2};
  arch.head_hidden = {};
  arch.classes = classes;
  arch.activation = activation;
  std::vector<vib::Prior> priors;
  if (custom_prior) {
    for (std::size_t j = 0; j < nodes; ++j) {
      std::vector<double> mean, lv;
      for (std::size_t k = 0; k < arch.latent_widths[j]; ++k) {
        mean.push_back(0.3 * static_cast<double>(k) - 0.2);
        lv.push_back(-0.5 + 0.25 * static_cast<double>(k + j));
      }
      priors.push_back(vib::Prior::diagonal(mean, lv));
    }
  }
  inl::InlSystem system = inl::build_inl_system(arch, views, labels, rng, priors);
  return {std::move(system), std::move(views), std::move(labels)};
}

inline std::vector<Tensor> node_noise(const inl::InlSystem& system, std::size_t rows, Rng& rng) {
  std::vector<Tensor> noise;
  for (const inl::EncoderNode& node : system.nodes()) {
    noise.push_back(rng.normal_tensor(rows, node.latent_width()));
  }
  return noise;
}

inline info::Conditional random_channel(std::size_t rows, std::size_t cols, Rng& rng) {
  info::Conditional c(rows, std::vector<double>(cols));
  for (auto& row : c) {
    double total = 0.0;
    for (double& v : row) total += (v = 0.05 + rng.uniform());
    for (double& v : row) v /= total;
  }
  return c;
}

// Brute force: walk every outcome tuple, accumulate each needed marginal in a
// map, then apply the entropy definitions directly.
inline double brute_force_lagrangian(const info::ObservationModel& m,
                                     const std::vector<info::Conditional>& enc,
                                     double s) {
  const std::size_t nodes = m.nodes();
  using Key = std::vector<std::size_t>;
  std::map<Key, double> p_y_codes, p_codes;
  std::vector<std::map<Key, double>> p_y_u(nodes), p_u(nodes), p_x_u(nodes), p_x(nodes);
  std::map<Key, double> p_y;

  std::vector<std::size_t> radix = {m.p_y.size()};
  for (std::size_t j = 0; j < nodes; ++j) radix.push_back(m.p_x_given_y[j][0].size());
  for (std::size_t j = 0; j < nodes; ++j) radix.push_back(enc[j][0].size());
  std::vector<std::size_t> t(radix.size(), 0);
  while (true) {
    const std::size_t y = t[0];
    double p = m.p_y[y];
    for (std::size_t j = 0; j < nodes; ++j) {
      const std::size_t x = t[1 + j], u = t[1 + nodes + j];
      p *= m.p_x_given_y[j][y][x] * enc[j][x][u];
    }
    Key codes(t.begin() + 1 + static_cast<std::ptrdiff_t>(nodes), t.end());
    Key with_y = codes;
    with_y.insert(with_y.begin(), y);
    p_y_codes[with_y] += p;
    p_codes[codes] += p;
    p_y[{y}] += p;
    for (std::size_t j = 0; j < nodes; ++j) {
      const std::size_t x = t[1 + j], u = t[1 + nodes + j];
      p_y_u[j][{y, u}] += p;
      p_u[j][{u}] += p;
      p_x_u[j][{x, u}] += p;
      p_x[j][{x}] += p;
    }
    std::size_t k = radix.size();
    while (k-- > 0) {
      if (++t[k] < radix[k]) break;
      t[k] = 0;
    }
    if (k == static_cast<std::size_t>(-1)) break;
  }

  auto h = [](const std::map<Key, double>& table) {
    double total = 0.0;
    for (const auto& [key, p] : table) {
      if (p > 0.0) total -= p * std::log(p);
    }
    return total;
  };
  double value = -(h(p_y_codes) - h(p_codes));
  for (std::size_t j = 0; j < nodes; ++j) {
    const double h_y_given_u = h(p_y_u[j]) - h(p_u[j]);
    const double mutual = h(p_x[j]) + h(p_u[j]) - h(p_x_u[j]);
    value -= s * (h_y_given_u + mutual);
  }
  return value;
}

inline info::ObservationModel random_model(std::size_t nodes, Rng& rng) {
  info::ObservationModel m;
  m.p_y = random_channel(1, 2 + rng.index(2), rng)[0];
  for (std::size_t j = 0; j < nodes; ++j) {
    m.p_x_given_y.push_back(random_channel(m.p_y.size(), 2 + rng.index(2), rng));
  }
  return m;
}

}  // namespace innet::testing
