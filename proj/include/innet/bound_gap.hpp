#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "innet/inl.hpp"
#include "innet/info_metrics.hpp"

// Compares a trained in-network stack against the exact optimum of the
// Lagrangian on a tiny discrete law.
namespace innet::bound {

// Every (y, x_1..x_J) with positive probability, observations one-hot encoded.
struct DiscreteCells {
  std::vector<Tensor> views;  // per node, [cells, |X_j|]
  std::vector<int> labels;
  std::vector<double> weights;
};

DiscreteCells enumerate_cells(const info::ObservationModel& model);

// Training data in which cell c appears round(rows * weight_c) times.
struct ReplicatedData {
  std::vector<Tensor> views;
  std::vector<int> labels;
};
ReplicatedData replicate_cells(const DiscreteCells& cells, std::size_t rows);

// Probability-weighted objective of the stack over all cells, each cell
// averaged over `draws` reparametrization samples.
double population_value(const inl::InlSystem& system, const DiscreteCells& cells,
                        double s, std::size_t draws, std::uint64_t seed);

struct BoundGap {
  double grid_optimum = 0.0;
  double trained_value = 0.0;
  double gap = 0.0;  // grid_optimum - trained_value
};

BoundGap empirical_bound_gap(const inl::InlSystem& system,
                             const info::ObservationModel& model, double s,
                             std::span<const std::size_t> code_sizes, double step = 0.25,
                             std::size_t draws = 2000, std::uint64_t seed = 7);

}  // namespace innet::bound
