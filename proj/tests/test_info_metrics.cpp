#include <doctest.h>

#include <cmath>

#include "innet/bound_gap.hpp"
#include "innet/errors.hpp"
#include "innet/info_metrics.hpp"
#include "support.hpp"

using namespace innet;
using namespace innet::info;
using innet::testing::brute_force_lagrangian;
using innet::testing::random_channel;
using innet::testing::random_model;

namespace {

ObservationModel binary_copies(std::size_t nodes, double crossover) {
  ObservationModel m;
  m.p_y = {0.5, 0.5};
  for (std::size_t j = 0; j < nodes; ++j) {
    m.p_x_given_y.push_back({{1.0 - crossover, crossover}, {crossover, 1.0 - crossover}});
  }
  return m;
}

}  // namespace

TEST_CASE("entropy examples") {
  const double uniform[] = {0.5, 0.5};
  CHECK(entropy(uniform) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const double point[] = {0.0, 1.0, 0.0};
  CHECK(entropy(point) == 0.0);
  const double skew[] = {0.25, 0.75};
  CHECK(entropy(skew) == doctest::Approx(-(0.25 * std::log(0.25) + 0.75 * std::log(0.75))));
  CHECK(entropy(skew) == doctest::Approx(0.5623).epsilon(1e-4));
  const double bad[] = {0.6, 0.6};
  CHECK_THROWS_AS(entropy(bad), ValidationError);
}

TEST_CASE("lagrangian matches a brute-force enumeration") {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t nodes = 1 + rng.index(3);
    const ObservationModel m = random_model(nodes, rng);
    std::vector<Conditional> enc;
    for (std::size_t j = 0; j < nodes; ++j) {
      enc.push_back(random_channel(m.p_x_given_y[j][0].size(), 2 + rng.index(2), rng));
    }
    const double s = 2.0 * rng.uniform();
    const JointPMF joint(m, enc);
    CHECK(std::abs(optimal_lagrangian(joint, s) - brute_force_lagrangian(m, enc, s)) <= 1e-10);
  }
}

TEST_CASE("deterministic copies and useless codes") {
  for (std::size_t nodes : {1, 2, 3}) {
    const ObservationModel m = binary_copies(nodes, 0.0);
    const std::vector<Conditional> copy(nodes, Conditional{{1.0, 0.0}, {0.0, 1.0}});
    for (double s : {0.5, 1.0}) {
      const double expected = -s * static_cast<double>(nodes) * std::log(2.0);
      CHECK(std::abs(optimal_lagrangian(JointPMF(m, copy), s) - expected) <= 1e-15);
    }
    const std::vector<Conditional> useless(nodes, Conditional{{0.5, 0.5}, {0.5, 0.5}});
    const double hy = std::log(2.0);
    CHECK(optimal_lagrangian(JointPMF(m, useless), 1.0) ==
          doctest::Approx(-hy - static_cast<double>(nodes) * hy).epsilon(1e-14));
  }
}

TEST_CASE("population objective equals the lagrangian with true marginals") {
  Rng rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t nodes = 1 + rng.index(3);
    const ObservationModel m = random_model(nodes, rng);
    std::vector<Conditional> enc;
    for (std::size_t j = 0; j < nodes; ++j) {
      enc.push_back(random_channel(m.p_x_given_y[j][0].size(), 2, rng));
    }
    const JointPMF joint(m, enc);
    const double s = rng.uniform();
    CHECK(std::abs(population_objective(joint, s) - optimal_lagrangian(joint, s)) <= 1e-9);
  }
}

TEST_CASE("entropy properties on a random joint law") {
  Rng rng(5);
  const ObservationModel m = random_model(2, rng);
  const std::vector<Conditional> enc = {random_channel(m.p_x_given_y[0][0].size(), 3, rng),
                                        random_channel(m.p_x_given_y[1][0].size(), 2, rng)};
  const LagrangianTerms t = lagrangian_terms(JointPMF(m, enc), 1.0);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(t.i_code_observation[j] >= 0.0);
    CHECK(t.h_y_given_codes <= t.h_y_given_code[j] + 1e-15);
  }

  // relabeling the code alphabet of node 0 leaves the value unchanged
  std::vector<Conditional> swapped = enc;
  for (auto& row : swapped[0]) std::swap(row[0], row[2]);
  CHECK(optimal_lagrangian(JointPMF(m, swapped), 0.7) ==
        doctest::Approx(optimal_lagrangian(JointPMF(m, enc), 0.7)).epsilon(1e-13));
}

TEST_CASE("grid channels and size guard") {
  // stochastic 1x2 rows on a 0.25 grid: 5 choices per row
  CHECK(grid_channels(1, 2, 0.25).size() == 5);
  CHECK(grid_channels(2, 2, 0.25).size() == 25);
  // compositions of 4 into 3 parts: C(6,2) = 15
  CHECK(grid_channels(1, 3, 0.25).size() == 15);
  CHECK_THROWS_AS(grid_channels(1, 2, 0.3), ValidationError);

  ObservationModel big;
  big.p_y.assign(10, 0.1);
  const Conditional wide(10, std::vector<double>(10, 0.1));
  big.p_x_given_y.assign(4, wide);
  const std::vector<Conditional> enc(4, wide);
  CHECK_THROWS_AS(JointPMF(big, enc), ValidationError);
}

TEST_CASE("grid optimum dominates every grid point checked") {
  const ObservationModel m = binary_copies(2, 0.1);
  const std::size_t codes[] = {2, 2};
  const GridOptimum best = grid_optimal_lagrangian(m, codes, 0.5, 0.25);
  CHECK(best.value == doctest::Approx(optimal_lagrangian(JointPMF(m, best.encoders), 0.5)));
  const std::vector<Conditional> copy(2, Conditional{{1.0, 0.0}, {0.0, 1.0}});
  CHECK(best.value >= optimal_lagrangian(JointPMF(m, copy), 0.5) - 1e-15);
}

TEST_CASE("cell enumeration carries the law") {
  const ObservationModel m = binary_copies(2, 0.0);
  const bound::DiscreteCells cells = bound::enumerate_cells(m);
  CHECK(cells.labels.size() == 2);
  double total = 0.0;
  for (double w : cells.weights) total += w;
  CHECK(total == doctest::Approx(1.0));
  const bound::ReplicatedData data = bound::replicate_cells(cells, 10);
  CHECK(data.labels.size() == 10);
  CHECK(data.views[1].rows() == 10);
}

TEST_CASE("a trained stack does not beat the grid optimum") {
  const ObservationModel m = binary_copies(2, 0.0);
  const bound::ReplicatedData data = bound::replicate_cells(bound::enumerate_cells(m), 64);
  Rng rng(3);
  inl::InlArchitecture arch;
  arch.input_widths = {2, 2};
  arch.latent_widths = {1, 1};
  arch.encoder_hidden = {8};
  arch.fusion_hidden = {8};
  arch.classes = 2;
  arch.activation = nn::Activation::Tanh;
  inl::InlSystem system = inl::build_inl_system(arch, data.views, data.labels, rng);
  inl::MessageLog log;
  inl::Channel channel(log, 32);
  inl::TrainOptions options;
  options.batch_size = 16;
  options.learning_rate = 0.05;
  options.s = 1.0;
  for (int e = 1; e <= 30; ++e) system.train_epoch(options, rng, channel, e);

  const std::size_t codes[] = {2, 2};
  const bound::BoundGap gap = bound::empirical_bound_gap(system, m, 1.0, codes, 0.25, 500);
  CHECK(gap.grid_optimum == doctest::Approx(-2.0 * std::log(2.0)).epsilon(1e-12));
  CHECK(gap.gap >= -1e-2);
}
