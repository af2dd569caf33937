#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "innet/rng.hpp"
#include "innet/tensor.hpp"

namespace innet::nn {

enum class Activation : std::uint32_t {
  Identity = 0,
  ReLU = 1,
  Sigmoid = 2,
  Tanh = 3,
  Softmax = 4,
};

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

// One fully connected layer: a = act(W x + b), W is [fan_out, fan_in].
struct DenseLayer {
  Tensor weights;
  Tensor biases;
  Activation activation = Activation::Identity;

  std::size_t fan_in() const noexcept { return weights.cols(); }
  std::size_t fan_out() const noexcept { return weights.rows(); }

  // Weights uniform in +-1/sqrt(fan_in), zero biases.
  static DenseLayer init(std::size_t fan_in, std::size_t fan_out,
                         Activation activation, Rng& rng);
  static DenseLayer zeros(std::size_t fan_in, std::size_t fan_out,
                          Activation activation);

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct LayerSpec {
  std::size_t width;
  Activation activation;
};

// Ordered stack of dense layers. Softmax may only appear as the last layer.
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<DenseLayer> layers);

  static Network build(std::size_t input_width, std::span<const LayerSpec> specs,
                       Rng& rng);

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  DenseLayer& layer(std::size_t l) { return layers_[l]; }
  const DenseLayer& layer(std::size_t l) const { return layers_[l]; }

  std::size_t layer_count() const noexcept { return layers_.size(); }
  std::size_t input_width() const;
  std::size_t output_width() const;
  std::size_t parameter_count() const noexcept;

  // Parameters in layer order, each layer as row-major weights then biases.
  std::vector<double> flatten() const;
  void assign(std::span<const double> params);

  friend bool operator==(const Network&, const Network&) = default;

 private:
  std::vector<DenseLayer> layers_;
};

// Per-layer pre-activations z[l] and activations a[l] for one mini-batch.
struct ForwardTrace {
  Tensor input;
  std::vector<Tensor> pre;
  std::vector<Tensor> post;

  const Tensor& output() const { return post.back(); }
  std::size_t batch() const noexcept { return input.rows(); }
};

ForwardTrace forward(const Network& net, const Tensor& input);

// Error vectors delta[l] = dl/dz[l] per sample, and the error at the input
// layer, W[0]^T delta[0], which carries no activation derivative.
struct BackwardResult {
  std::vector<Tensor> deltas;
  Tensor input_error;
};

// output_grad holds, per sample, the derivative of that sample's loss with
// respect to the final activation. Not valid for a Softmax output layer.
BackwardResult backward(const Network& net, const ForwardTrace& trace,
                        const Tensor& output_grad);

// Softmax output paired with scale * (-ln p[y]): the output error is
// scale * (p - onehot(y)), formed without the softmax Jacobian.
BackwardResult backward_log_loss(const Network& net, const ForwardTrace& trace,
                                 std::span<const int> labels, double scale = 1.0);

struct LayerGradient {
  Tensor weights;
  Tensor biases;
};
using Gradients = std::vector<LayerGradient>;

// Mini-batch mean of delta[l] a[l-1]^T and of delta[l].
Gradients parameter_gradients(const ForwardTrace& trace,
                              std::span<const Tensor> deltas);

void apply_gradients(Network& net, const Gradients& grads, double learning_rate);

// w <- w - lr * mean(delta a_prev^T), b <- b - lr * mean(delta).
void sgd_step(Network& net, std::span<const Tensor> deltas,
              const ForwardTrace& trace, double learning_rate);

std::vector<double> flatten(const Gradients& grads);

// Elementwise derivative of the activation, from z and a = act(z).
double activation_derivative(Activation act, double z, double a);

}  // namespace innet::nn
