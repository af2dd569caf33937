#pragma once

#include <span>
#include <vector>

// Exact information measures on tiny discrete alphabets, in nats.
namespace innet::info {

using Conditional = std::vector<std::vector<double>>;  // rows: conditioning value

// -sum p ln p with 0 ln 0 = 0. Throws ValidationError for an invalid pmf.
double entropy(std::span<const double> pmf);

// P_Y and the per-node observation channels P_{X_j|Y}.
struct ObservationModel {
  std::vector<double> p_y;
  std::vector<Conditional> p_x_given_y;

  std::size_t nodes() const noexcept { return p_x_given_y.size(); }
  void validate() const;
};

inline constexpr double kMaxJointCells = 1e7;

// Joint law P_Y prod_j P_{X_j|Y} prod_j P_{U_j|X_j}, materialized over
// (Y, X_1..X_J, U_1..U_J) with Y varying slowest.
class JointPMF {
 public:
  JointPMF(ObservationModel model, std::vector<Conditional> p_u_given_x);

  std::size_t nodes() const noexcept { return model_.nodes(); }
  const ObservationModel& model() const noexcept { return model_; }
  const std::vector<Conditional>& encoders() const noexcept { return p_u_given_x_; }
  const std::vector<double>& table() const noexcept { return table_; }
  const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }

  // Axis ids: 0 = Y, 1..J = X_j, J+1..2J = U_j.
  static std::size_t y_axis() { return 0; }
  std::size_t x_axis(std::size_t j) const { return 1 + j; }
  std::size_t u_axis(std::size_t j) const { return 1 + nodes() + j; }

  // Marginal over the listed axes, row-major in the listed order.
  std::vector<double> marginal(std::span<const std::size_t> axes) const;
  double joint_entropy(std::span<const std::size_t> axes) const;

 private:
  ObservationModel model_;
  std::vector<Conditional> p_u_given_x_;
  std::vector<std::size_t> sizes_;
  std::vector<double> table_;
};

struct LagrangianTerms {
  double h_y_given_codes = 0.0;           // H(Y | U_1..U_J)
  std::vector<double> h_y_given_code;     // H(Y | U_j)
  std::vector<double> i_code_observation; // I(U_j ; X_j)
  double value = 0.0;
};

// -H(Y|U_1..U_J) - s sum_j [H(Y|U_j) + I(U_j;X_j)], by marginalizing the
// joint tensor.
LagrangianTerms lagrangian_terms(const JointPMF& joint, double s);
double optimal_lagrangian(const JointPMF& joint, double s);

// Population value of the in-network objective with the true conditionals as
// decoders and the true code marginals as priors:
//   E[ln P(y|u_1..u_J)] + s sum_j E[ln P(y|u_j) - ln(P(u_j|x_j) / P(u_j))].
double population_objective(const JointPMF& joint, double s);

// All stochastic matrices with `rows` rows over `cols` outcomes whose entries
// are multiples of `step` (1/step must be an integer).
std::vector<Conditional> grid_channels(std::size_t rows, std::size_t cols, double step);

struct GridOptimum {
  double value = 0.0;
  std::vector<Conditional> encoders;
};

// Maximum of the Lagrangian over grid-discretized encoders P_{U_j|X_j}.
GridOptimum grid_optimal_lagrangian(const ObservationModel& model,
                                    std::span<const std::size_t> code_sizes, double s,
                                    double step = 0.25);

}  // namespace innet::info
