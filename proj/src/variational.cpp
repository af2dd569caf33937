#include "innet/variational.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "innet/errors.hpp"

namespace innet::vib {

namespace {

const double kLogTwoPi = std::log(2.0 * std::numbers::pi);

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) throw DimensionError(std::string(what) + ": shape mismatch");
}

}  // namespace

Prior Prior::diagonal(std::vector<double> mean, std::vector<double> log_variance) {
  if (mean.size() != log_variance.size()) {
    throw ValidationError("prior mean and log-variance lengths differ");
  }
  for (double v : mean) {
    if (!std::isfinite(v)) throw ValidationError("prior mean must be finite");
  }
  for (double v : log_variance) {
    if (!std::isfinite(v)) throw ValidationError("prior log-variance must be finite");
  }
  return Prior{Kind::FixedDiagonalGaussian, std::move(mean), std::move(log_variance)};
}

double Prior::log_density(std::span<const double> u) const {
  if (kind == Kind::StandardNormal) {
    double acc = 0.0;
    for (double v : u) acc += v * v + kLogTwoPi;
    return -0.5 * acc;
  }
  if (u.size() != mean.size()) throw DimensionError("prior dimension mismatch");
  return gaussian_log_density(u, mean, log_variance);
}

void Prior::log_density_gradient(std::span<const double> u,
                                 std::span<double> grad) const {
  if (kind == Kind::StandardNormal) {
    for (std::size_t k = 0; k < u.size(); ++k) grad[k] = -u[k];
    return;
  }
  if (u.size() != mean.size()) throw DimensionError("prior dimension mismatch");
  for (std::size_t k = 0; k < u.size(); ++k) {
    grad[k] = -(u[k] - mean[k]) / std::exp(log_variance[k]);
  }
}

GaussianEncoderOutput encode_reparam(Tensor mean, Tensor log_variance, Tensor noise) {
  require_same_shape(mean, log_variance, "encode_reparam");
  require_same_shape(mean, noise, "encode_reparam");
  Tensor sample(mean.shape());
  for (std::size_t k = 0; k < sample.size(); ++k) {
    sample[k] = mean[k] + std::exp(log_variance[k] / 2.0) * noise[k];
  }
  return {std::move(mean), std::move(log_variance), std::move(sample), std::move(noise)};
}

GaussianEncoderOutput encode_reparam(Tensor mean, Tensor log_variance, Rng& rng) {
  Tensor noise(mean.shape());
  for (double& e : noise.data()) e = rng.normal();
  return encode_reparam(std::move(mean), std::move(log_variance), std::move(noise));
}

double gaussian_log_density(std::span<const double> u, std::span<const double> mean,
                            std::span<const double> log_variance) {
  double acc = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double diff = u[k] - mean[k];
    acc += diff * diff / std::exp(log_variance[k]) + log_variance[k] + kLogTwoPi;
  }
  return -0.5 * acc;
}

double log_loss(int y, std::span<const double> p) {
  if (y < 0 || static_cast<std::size_t>(y) >= p.size()) {
    throw ValidationError("label " + std::to_string(y) + " outside distribution support");
  }
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw ValidationError("distribution has a negative or NaN entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ValidationError("distribution sums to " + std::to_string(total));
  }
  return -std::log(std::max(p[static_cast<std::size_t>(y)], kProbabilityFloor));
}

double relevance(double label_entropy, double mean_log_loss) {
  if (label_entropy < 0.0) throw ValidationError("entropy must be non-negative");
  return label_entropy - mean_log_loss;
}

double label_entropy(std::span<const int> labels, int classes) {
  if (labels.empty()) return 0.0;
  std::vector<double> counts(static_cast<std::size_t>(classes), 0.0);
  for (int y : labels) {
    if (y < 0 || y >= classes) throw ValidationError("label out of range");
    counts[static_cast<std::size_t>(y)] += 1.0;
  }
  const double n = static_cast<double>(labels.size());
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) h -= (c / n) * std::log(c / n);
  }
  return h;
}

Tensor rate_term(const GaussianEncoderOutput& enc, const Prior& prior) {
  const std::size_t batch = enc.sample.rows();
  Tensor rate({batch});
  for (std::size_t n = 0; n < batch; ++n) {
    rate[n] = gaussian_log_density(enc.sample.row(n), enc.mean.row(n),
                                   enc.log_variance.row(n)) -
              prior.log_density(enc.sample.row(n));
  }
  return rate;
}

RateGradients rate_gradients(const GaussianEncoderOutput& enc, const Prior& prior) {
  const auto& shape = enc.sample.shape();
  RateGradients g{Tensor(shape), Tensor(shape), Tensor(shape)};
  std::vector<double> prior_grad(enc.sample.cols());
  for (std::size_t n = 0; n < enc.sample.rows(); ++n) {
    prior.log_density_gradient(enc.sample.row(n), prior_grad);
    for (std::size_t k = 0; k < enc.sample.cols(); ++k) {
      const double diff = enc.sample(n, k) - enc.mean(n, k);
      const double variance = std::exp(enc.log_variance(n, k));
      g.sample(n, k) = -diff / variance - prior_grad[k];
      g.mean(n, k) = diff / variance;
      g.log_variance(n, k) = 0.5 * diff * diff / variance - 0.5;
    }
  }
  return g;
}

double LossBreakdown::marginal_sum() const {
  return std::accumulate(marginal_ll.begin(), marginal_ll.end(), 0.0);
}

double LossBreakdown::rate_sum() const {
  return std::accumulate(rate.begin(), rate.end(), 0.0);
}

LossBreakdown inl_loss(const Tensor& joint_pred, std::span<const Tensor> marginal_preds,
                       std::span<const Tensor> rates, std::span<const int> labels,
                       double s) {
  if (marginal_preds.size() != rates.size()) {
    throw ValidationError("marginal heads (" + std::to_string(marginal_preds.size()) +
                          ") and rate terms (" + std::to_string(rates.size()) +
                          ") disagree on J");
  }
  const std::size_t batch = labels.size();
  if (batch == 0 || joint_pred.rows() != batch) {
    throw ValidationError("prediction rows do not match label count");
  }
  const double inv_batch = 1.0 / static_cast<double>(batch);

  auto mean_ll = [&](const Tensor& pred) {
    if (pred.rows() != batch) throw ValidationError("prediction rows do not match labels");
    double acc = 0.0;
    for (std::size_t n = 0; n < batch; ++n) acc -= log_loss(labels[n], pred.row(n));
    return acc * inv_batch;
  };

  LossBreakdown out;
  out.s = s;
  out.joint_ll = mean_ll(joint_pred);
  double node_sum = 0.0;
  for (std::size_t j = 0; j < marginal_preds.size(); ++j) {
    if (rates[j].size() != batch) throw ValidationError("rate rows do not match labels");
    const double marginal = mean_ll(marginal_preds[j]);
    double rate = 0.0;
    for (double r : rates[j].data()) rate += r;
    rate *= inv_batch;
    out.marginal_ll.push_back(marginal);
    out.rate.push_back(rate);
    node_sum += marginal - rate;
  }
  out.total = out.joint_ll + s * node_sum;
  return out;
}

std::vector<Tensor> split_columns(const Tensor& fusion_input_error,
                                  std::span<const std::size_t> widths) {
  const std::size_t total = std::accumulate(widths.begin(), widths.end(), std::size_t{0});
  if (total != fusion_input_error.cols()) {
    throw ProtocolError(0, "slice widths sum to " + std::to_string(total) +
                               " but fusion input width is " +
                               std::to_string(fusion_input_error.cols()));
  }
  std::vector<Tensor> slices;
  std::size_t offset = 0;
  for (std::size_t w : widths) {
    slices.push_back(slice_cols(fusion_input_error, offset, w));
    offset += w;
  }
  return slices;
}

Tensor add_rate_correction(const Tensor& error_slice, const Tensor& rate_grad_sample,
                           double s) {
  require_same_shape(error_slice, rate_grad_sample, "add_rate_correction");
  Tensor out(error_slice.shape());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = error_slice[k] + s * rate_grad_sample[k];
  }
  return out;
}

std::vector<Tensor> split_output_grad(const Tensor& fusion_input_error,
                                      std::span<const std::size_t> node_slices,
                                      std::span<const Tensor> rate_grads, double s) {
  if (rate_grads.size() != node_slices.size()) {
    throw ValidationError("one rate gradient per node slice is required");
  }
  std::vector<Tensor> slices = split_columns(fusion_input_error, node_slices);
  for (std::size_t j = 0; j < slices.size(); ++j) {
    slices[j] = add_rate_correction(slices[j], rate_grads[j], s);
  }
  return slices;
}

EncoderHeadGradients encoder_head_gradients(const GaussianEncoderOutput& enc,
                                            const RateGradients& rate,
                                            const Tensor& sample_grad, double s) {
  require_same_shape(enc.sample, sample_grad, "encoder_head_gradients");
  EncoderHeadGradients g{Tensor(enc.sample.shape()), Tensor(enc.sample.shape())};
  for (std::size_t k = 0; k < sample_grad.size(); ++k) {
    // du/dmean = 1, du/dlogvar = exp(logvar / 2) * noise / 2.
    const double du_dlogvar = 0.5 * std::exp(enc.log_variance[k] / 2.0) * enc.noise[k];
    g.mean[k] = sample_grad[k] + s * rate.mean[k];
    g.log_variance[k] = sample_grad[k] * du_dlogvar + s * rate.log_variance[k];
  }
  return g;
}

}  // namespace innet::vib
