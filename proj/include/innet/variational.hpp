#pragma once

#include <span>
#include <vector>

#include "innet/rng.hpp"
#include "innet/tensor.hpp"

// Training objective of in-network learning. All logs are natural; the
// objective is a likelihood to be maximized and the trainers minimize its
// negation.
namespace innet::vib {

inline constexpr double kProbabilityFloor = 1e-12;

// Prior Q(u) over a node's latent code, known to that node only.
struct Prior {
  enum class Kind { StandardNormal, FixedDiagonalGaussian };

  Kind kind = Kind::StandardNormal;
  std::vector<double> mean;
  std::vector<double> log_variance;

  static Prior standard_normal() { return {}; }
  static Prior diagonal(std::vector<double> mean, std::vector<double> log_variance);

  double log_density(std::span<const double> u) const;
  // d/du log Q(u), written into grad.
  void log_density_gradient(std::span<const double> u, std::span<double> grad) const;
};

// Diagonal Gaussian encoder output with u = mean + exp(log_variance / 2) * noise.
struct GaussianEncoderOutput {
  Tensor mean;
  Tensor log_variance;
  Tensor sample;
  Tensor noise;
};

GaussianEncoderOutput encode_reparam(Tensor mean, Tensor log_variance, Tensor noise);
GaussianEncoderOutput encode_reparam(Tensor mean, Tensor log_variance, Rng& rng);

// ln N(u; mean, diag(exp(log_variance))).
double gaussian_log_density(std::span<const double> u, std::span<const double> mean,
                            std::span<const double> log_variance);

// -ln p[y], with p[y] floored at 1e-12. Throws ValidationError unless p is a
// distribution (non-negative, sums to 1 within 1e-9).
double log_loss(int y, std::span<const double> p);

double relevance(double label_entropy, double mean_log_loss);

// Entropy (nats) of the empirical label distribution.
double label_entropy(std::span<const int> labels, int classes);

// Per-sample ln P(u|x) - ln Q(u) at the drawn sample, shape [batch].
Tensor rate_term(const GaussianEncoderOutput& enc, const Prior& prior);

// Partial derivatives of the per-sample rate term, each [batch, d_u]. The
// sample gradient holds mean and log-variance fixed.
struct RateGradients {
  Tensor sample;
  Tensor mean;
  Tensor log_variance;
};
RateGradients rate_gradients(const GaussianEncoderOutput& enc, const Prior& prior);

struct LossBreakdown {
  double joint_ll = 0.0;
  std::vector<double> marginal_ll;
  std::vector<double> rate;
  double s = 0.0;
  double total = 0.0;

  double marginal_sum() const;
  double rate_sum() const;
};

// Batch-mean objective: joint_ll + s * sum_j (marginal_ll[j] - rate[j]).
// joint_pred and marginal_preds[j] are [batch, K] distributions; rates[j] is
// the [batch] output of rate_term.
LossBreakdown inl_loss(const Tensor& joint_pred, std::span<const Tensor> marginal_preds,
                       std::span<const Tensor> rates, std::span<const int> labels,
                       double s);

// Contiguous column slices of the fusion input error, in node order.
std::vector<Tensor> split_columns(const Tensor& fusion_input_error,
                                  std::span<const std::size_t> widths);

// Node-side correction: error_slice + s * d(rate)/du.
Tensor add_rate_correction(const Tensor& error_slice, const Tensor& rate_grad_sample,
                           double s);

// Full per-node gradient of the negated objective with respect to each node's
// transmitted activation u_j.
std::vector<Tensor> split_output_grad(const Tensor& fusion_input_error,
                                      std::span<const std::size_t> node_slices,
                                      std::span<const Tensor> rate_grads, double s);

// Gradients with respect to the encoder's mean and log-variance outputs, given
// the gradient with respect to u (already including the rate correction).
struct EncoderHeadGradients {
  Tensor mean;
  Tensor log_variance;
};
EncoderHeadGradients encoder_head_gradients(const GaussianEncoderOutput& enc,
                                            const RateGradients& rate,
                                            const Tensor& sample_grad, double s);

}  // namespace innet::vib
