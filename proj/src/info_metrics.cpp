#include "innet/info_metrics.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "innet/errors.hpp"

namespace innet::info {

namespace {

constexpr double kSumTolerance = 1e-12;

void check_pmf(std::span<const double> pmf, const std::string& what) {
  double total = 0.0;
  for (double p : pmf) {
    if (!(p >= 0.0)) throw ValidationError(what + " has a negative entry");
    total += p;
  }
  if (std::abs(total - 1.0) > kSumTolerance) {
    throw ValidationError(what + " sums to " + std::to_string(total));
  }
}

void check_channel(const Conditional& c, std::size_t rows, const std::string& what) {
  if (c.size() != rows) throw ValidationError(what + " has the wrong number of rows");
  for (std::size_t r = 0; r < rows; ++r) {
    if (c[r].empty() || c[r].size() != c.front().size()) {
      throw ValidationError(what + " rows differ in length");
    }
    check_pmf(c[r], what + " row " + std::to_string(r));
  }
}

}  // namespace

double entropy(std::span<const double> pmf) {
  check_pmf(pmf, "pmf");
  double h = 0.0;
  for (double p : pmf) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

void ObservationModel::validate() const {
  check_pmf(p_y, "P_Y");
  for (std::size_t j = 0; j < p_x_given_y.size(); ++j) {
    check_channel(p_x_given_y[j], p_y.size(), "P_X" + std::to_string(j + 1) + "|Y");
  }
}

JointPMF::JointPMF(ObservationModel model, std::vector<Conditional> p_u_given_x)
    : model_(std::move(model)), p_u_given_x_(std::move(p_u_given_x)) {
  model_.validate();
  const std::size_t nodes = model_.nodes();
  if (nodes == 0) throw ValidationError("at least one node is required");
  if (p_u_given_x_.size() != nodes) throw ValidationError("one encoder per node is required");

  sizes_.push_back(model_.p_y.size());
  for (const Conditional& c : model_.p_x_given_y) sizes_.push_back(c.front().size());
  for (std::size_t j = 0; j < nodes; ++j) {
    check_channel(p_u_given_x_[j], sizes_[1 + j], "P_U" + std::to_string(j + 1) + "|X");
    sizes_.push_back(p_u_given_x_[j].front().size());
  }
  double cells = 1.0;
  for (std::size_t s : sizes_) cells *= static_cast<double>(s);
  if (cells > kMaxJointCells) {
    throw ValidationError("joint alphabet has " + std::to_string(cells) +
                          " cells, limit is 1e7");
  }

  table_.assign(static_cast<std::size_t>(cells), 0.0);
  std::vector<std::size_t> idx(sizes_.size(), 0);
  for (double& cell : table_) {
    double p = model_.p_y[idx[0]];
    for (std::size_t j = 0; j < nodes; ++j) {
      p *= model_.p_x_given_y[j][idx[0]][idx[1 + j]];
      p *= p_u_given_x_[j][idx[1 + j]][idx[1 + nodes + j]];
    }
    cell = p;
    // Odometer with the last axis fastest.
    for (std::size_t a = sizes_.size(); a-- > 0;) {
      if (++idx[a] < sizes_[a]) break;
      idx[a] = 0;
    }
  }
}

std::vector<double> JointPMF::marginal(std::span<const std::size_t> axes) const {
  std::size_t out_size = 1;
  for (std::size_t a : axes) {
    if (a >= sizes_.size()) throw ValidationError("axis out of range");
    out_size *= sizes_[a];
  }
  std::vector<double> out(out_size, 0.0);
  std::vector<std::size_t> idx(sizes_.size(), 0);
  for (double cell : table_) {
    std::size_t pos = 0;
    for (std::size_t a : axes) pos = pos * sizes_[a] + idx[a];
    out[pos] += cell;
    for (std::size_t a = sizes_.size(); a-- > 0;) {
      if (++idx[a] < sizes_[a]) break;
      idx[a] = 0;
    }
  }
  return out;
}

double JointPMF::joint_entropy(std::span<const std::size_t> axes) const {
  double h = 0.0;
  for (double p : marginal(axes)) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

LagrangianTerms lagrangian_terms(const JointPMF& joint, double s) {
  const std::size_t nodes = joint.nodes();
  LagrangianTerms t;

  std::vector<std::size_t> codes;
  for (std::size_t j = 0; j < nodes; ++j) codes.push_back(joint.u_axis(j));
  std::vector<std::size_t> y_codes{JointPMF::y_axis()};
  y_codes.insert(y_codes.end(), codes.begin(), codes.end());
  t.h_y_given_codes = joint.joint_entropy(y_codes) - joint.joint_entropy(codes);

  double node_sum = 0.0;
  for (std::size_t j = 0; j < nodes; ++j) {
    const std::size_t u = joint.u_axis(j);
    const std::size_t x = joint.x_axis(j);
    const std::size_t u_only[] = {u};
    const std::size_t x_only[] = {x};
    const std::size_t y_u[] = {JointPMF::y_axis(), u};
    const std::size_t x_u[] = {x, u};
    const double h_u = joint.joint_entropy(u_only);
    const double h_y_given_u = joint.joint_entropy(y_u) - h_u;
    const double i_ux = h_u + joint.joint_entropy(x_only) - joint.joint_entropy(x_u);
    t.h_y_given_code.push_back(h_y_given_u);
    t.i_code_observation.push_back(i_ux);
    node_sum += h_y_given_u + i_ux;
  }
  t.value = -t.h_y_given_codes - s * node_sum;
  return t;
}

double optimal_lagrangian(const JointPMF& joint, double s) {
  return lagrangian_terms(joint, s).value;
}

double population_objective(const JointPMF& joint, double s) {
  const std::size_t nodes = joint.nodes();
  const auto& sizes = joint.sizes();

  std::vector<std::size_t> codes;
  for (std::size_t j = 0; j < nodes; ++j) codes.push_back(joint.u_axis(j));
  std::vector<std::size_t> y_codes{JointPMF::y_axis()};
  y_codes.insert(y_codes.end(), codes.begin(), codes.end());
  const std::vector<double> p_codes = joint.marginal(codes);
  const std::vector<double> p_y_codes = joint.marginal(y_codes);

  std::vector<std::vector<double>> p_u, p_y_u;
  for (std::size_t j = 0; j < nodes; ++j) {
    const std::size_t u_only[] = {joint.u_axis(j)};
    const std::size_t y_u[] = {JointPMF::y_axis(), joint.u_axis(j)};
    p_u.push_back(joint.marginal(u_only));
    p_y_u.push_back(joint.marginal(y_u));
  }

  double expectation = 0.0;
  std::vector<std::size_t> idx(sizes.size(), 0);
  for (double cell : joint.table()) {
    if (cell > 0.0) {
      const std::size_t y = idx[0];
      std::size_t code_pos = 0;
      for (std::size_t j = 0; j < nodes; ++j) {
        code_pos = code_pos * sizes[1 + nodes + j] + idx[1 + nodes + j];
      }
      const std::size_t y_code_pos =
          y * static_cast<std::size_t>(p_codes.size()) + code_pos;
      double term = std::log(p_y_codes[y_code_pos] / p_codes[code_pos]);
      double node_terms = 0.0;
      for (std::size_t j = 0; j < nodes; ++j) {
        const std::size_t x = idx[1 + j];
        const std::size_t u = idx[1 + nodes + j];
        const double decoder = p_y_u[j][y * sizes[1 + nodes + j] + u] / p_u[j][u];
        const double encoder = joint.encoders()[j][x][u];
        node_terms += std::log(decoder) - std::log(encoder / p_u[j][u]);
      }
      term += s * node_terms;
      expectation += cell * term;
    }
    for (std::size_t a = sizes.size(); a-- > 0;) {
      if (++idx[a] < sizes[a]) break;
      idx[a] = 0;
    }
  }
  return expectation;
}

std::vector<Conditional> grid_channels(std::size_t rows, std::size_t cols, double step) {
  const double units_real = 1.0 / step;
  const auto units = static_cast<std::size_t>(std::llround(units_real));
  if (units == 0 || std::abs(units_real - static_cast<double>(units)) > 1e-9) {
    throw ValidationError("grid step must divide 1");
  }
  // Compositions of `units` into `cols` non-negative parts.
  std::vector<std::vector<double>> simplex;
  std::vector<std::size_t> parts(cols, 0);
  auto emit = [&](auto&& self, std::size_t pos, std::size_t left) -> void {
    if (pos + 1 == cols) {
      parts[pos] = left;
      std::vector<double> row(cols);
      for (std::size_t k = 0; k < cols; ++k) {
        row[k] = static_cast<double>(parts[k]) / static_cast<double>(units);
      }
      simplex.push_back(std::move(row));
      return;
    }
    for (std::size_t v = 0; v <= left; ++v) {
      parts[pos] = v;
      self(self, pos + 1, left - v);
    }
  };
  emit(emit, 0, units);

  std::vector<Conditional> channels;
  std::vector<std::size_t> pick(rows, 0);
  while (true) {
    Conditional c;
    for (std::size_t r = 0; r < rows; ++r) c.push_back(simplex[pick[r]]);
    channels.push_back(std::move(c));
    bool advanced = false;
    for (std::size_t r = rows; r-- > 0;) {
      if (++pick[r] < simplex.size()) {
        advanced = true;
        break;
      }
      pick[r] = 0;
    }
    if (!advanced) return channels;
  }
}

GridOptimum grid_optimal_lagrangian(const ObservationModel& model,
                                    std::span<const std::size_t> code_sizes, double s,
                                    double step) {
  model.validate();
  const std::size_t nodes = model.nodes();
  if (code_sizes.size() != nodes) throw ValidationError("one code size per node is required");

  std::vector<std::vector<Conditional>> options;
  for (std::size_t j = 0; j < nodes; ++j) {
    options.push_back(grid_channels(model.p_x_given_y[j].front().size(), code_sizes[j], step));
  }

  GridOptimum best;
  best.value = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> pick(nodes, 0);
  while (true) {
    std::vector<Conditional> encoders;
    for (std::size_t j = 0; j < nodes; ++j) encoders.push_back(options[j][pick[j]]);
    const double value = optimal_lagrangian(JointPMF(model, encoders), s);
    if (value > best.value) {
      best.value = value;
      best.encoders = std::move(encoders);
    }
    std::size_t j = nodes;
    bool done = true;
    while (j > 0) {
      --j;
      if (++pick[j] < options[j].size()) {
        done = false;
        break;
      }
      pick[j] = 0;
    }
    if (done) break;
  }
  return best;
}

}  // namespace innet::info
