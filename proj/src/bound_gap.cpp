#include "innet/bound_gap.hpp"

#include <cmath>

#include "innet/errors.hpp"
#include "innet/glued.hpp"

namespace innet::bound {

DiscreteCells enumerate_cells(const info::ObservationModel& model) {
  model.validate();
  const std::size_t nodes = model.nodes();
  std::vector<std::size_t> sizes;
  for (const auto& c : model.p_x_given_y) sizes.push_back(c.front().size());

  struct Cell {
    int y;
    std::vector<std::size_t> x;
    double p;
  };
  std::vector<Cell> found;
  for (std::size_t y = 0; y < model.p_y.size(); ++y) {
    std::vector<std::size_t> x(nodes, 0);
    while (true) {
      double p = model.p_y[y];
      for (std::size_t j = 0; j < nodes; ++j) p *= model.p_x_given_y[j][y][x[j]];
      if (p > 0.0) found.push_back({static_cast<int>(y), x, p});
      bool advanced = false;
      for (std::size_t j = nodes; j-- > 0;) {
        if (++x[j] < sizes[j]) {
          advanced = true;
          break;
        }
        x[j] = 0;
      }
      if (!advanced) break;
    }
  }

  DiscreteCells cells;
  for (std::size_t j = 0; j < nodes; ++j) cells.views.emplace_back(std::vector<std::size_t>{found.size(), sizes[j]});
  for (std::size_t c = 0; c < found.size(); ++c) {
    for (std::size_t j = 0; j < nodes; ++j) cells.views[j](c, found[c].x[j]) = 1.0;
    cells.labels.push_back(found[c].y);
    cells.weights.push_back(found[c].p);
  }
  return cells;
}

ReplicatedData replicate_cells(const DiscreteCells& cells, std::size_t rows) {
  std::vector<std::size_t> picks;
  for (std::size_t c = 0; c < cells.labels.size(); ++c) {
    const auto copies =
        static_cast<std::size_t>(std::llround(cells.weights[c] * static_cast<double>(rows)));
    for (std::size_t k = 0; k < copies; ++k) picks.push_back(c);
  }
  ReplicatedData out;
  for (const Tensor& v : cells.views) out.views.push_back(gather_rows(v, picks));
  for (std::size_t c : picks) out.labels.push_back(cells.labels[c]);
  return out;
}

double population_value(const inl::InlSystem& system, const DiscreteCells& cells,
                        double s, std::size_t draws, std::uint64_t seed) {
  if (draws == 0) throw ValidationError("at least one noise draw is required");
  std::vector<nn::Network> encoders;
  std::vector<vib::Prior> priors;
  for (const inl::EncoderNode& node : system.nodes()) {
    encoders.push_back(node.net());
    priors.push_back(node.prior());
  }
  const inl::GluedModel glued(std::move(encoders), std::move(priors),
                              system.fusion().decoder(), system.fusion().heads(),
                              cells.views, cells.labels);
  Rng rng(seed);
  double value = 0.0;
  for (std::size_t c = 0; c < cells.labels.size(); ++c) {
    const std::vector<std::size_t> rows(draws, c);
    std::vector<Tensor> noise;
    for (const inl::EncoderNode& node : system.nodes()) {
      noise.push_back(rng.normal_tensor(draws, node.latent_width()));
    }
    value += cells.weights[c] * glued.evaluate(rows, noise, s, false).loss.total;
  }
  return value;
}

BoundGap empirical_bound_gap(const inl::InlSystem& system,
                             const info::ObservationModel& model, double s,
                             std::span<const std::size_t> code_sizes, double step,
                             std::size_t draws, std::uint64_t seed) {
  BoundGap gap;
  gap.grid_optimum = info::grid_optimal_lagrangian(model, code_sizes, s, step).value;
  gap.trained_value = population_value(system, enumerate_cells(model), s, draws, seed);
  gap.gap = gap.grid_optimum - gap.trained_value;
  return gap;
}

}  // namespace innet::bound
