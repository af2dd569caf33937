#include "innet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "innet/errors.hpp"

namespace innet::nn {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::ReLU: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Tanh: return "tanh";
    case Activation::Softmax: return "softmax";
  }
  return "unknown";
}

Activation activation_from_string(std::string_view name) {
  for (auto a : {Activation::Identity, Activation::ReLU, Activation::Sigmoid,
                 Activation::Tanh, Activation::Softmax}) {
    if (to_string(a) == name) return a;
  }
  throw ValidationError("unknown activation '" + std::string(name) + "'");
}

DenseLayer DenseLayer::init(std::size_t fan_in, std::size_t fan_out,
                            Activation activation, Rng& rng) {
  DenseLayer layer = zeros(fan_in, fan_out, activation);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& w : layer.weights.data()) w = rng.uniform(-bound, bound);
  return layer;
}

DenseLayer DenseLayer::zeros(std::size_t fan_in, std::size_t fan_out,
                             Activation activation) {
  return DenseLayer{Tensor({fan_out, fan_in}), Tensor({fan_out}), activation};
}

Network::Network(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const DenseLayer& layer = layers_[l];
    if (layer.weights.rank() != 2 || layer.biases.size() != layer.fan_out()) {
      throw DimensionError("layer " + std::to_string(l) +
                           ": biases do not match weights [fan_out, fan_in]");
    }
    if (l > 0 && layers_[l - 1].fan_out() != layer.fan_in()) {
      throw DimensionError("layer " + std::to_string(l) + ": fan_in " +
                           std::to_string(layer.fan_in()) +
                           " != previous fan_out " +
                           std::to_string(layers_[l - 1].fan_out()));
    }
    if (layer.activation == Activation::Softmax && l + 1 != layers_.size()) {
      throw ValidationError("layer " + std::to_string(l) +
                            ": softmax is only allowed as the output layer");
    }
  }
}

Network Network::build(std::size_t input_width, std::span<const LayerSpec> specs,
                       Rng& rng) {
  std::vector<DenseLayer> layers;
  std::size_t fan_in = input_width;
  for (const LayerSpec& spec : specs) {
    layers.push_back(DenseLayer::init(fan_in, spec.width, spec.activation, rng));
    fan_in = spec.width;
  }
  return Network(std::move(layers));
}

std::size_t Network::input_width() const {
  if (layers_.empty()) throw ConsistencyError("empty network");
  return layers_.front().fan_in();
}

std::size_t Network::output_width() const {
  if (layers_.empty()) throw ConsistencyError("empty network");
  return layers_.back().fan_out();
}

std::size_t Network::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const DenseLayer& layer : layers_) n += layer.weights.size() + layer.biases.size();
  return n;
}

std::vector<double> Network::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const DenseLayer& layer : layers_) {
    out.insert(out.end(), layer.weights.data().begin(), layer.weights.data().end());
    out.insert(out.end(), layer.biases.data().begin(), layer.biases.data().end());
  }
  return out;
}

void Network::assign(std::span<const double> params) {
  if (params.size() != parameter_count()) {
    throw DimensionError("assign: expected " + std::to_string(parameter_count()) +
                         " parameters, got " + std::to_string(params.size()));
  }
  std::size_t offset = 0;
  for (DenseLayer& layer : layers_) {
    for (double& w : layer.weights.data()) w = params[offset++];
    for (double& b : layer.biases.data()) b = params[offset++];
  }
}

namespace {

double apply_scalar(Activation act, double z) {
  switch (act) {
    case Activation::Identity: return z;
    case Activation::ReLU: return z > 0.0 ? z : 0.0;
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-z));
    case Activation::Tanh: return std::tanh(z);
    case Activation::Softmax: break;
  }
  return z;
}

void softmax_row(std::span<const double> z, std::span<double> a) {
  const double peak = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    a[k] = std::exp(z[k] - peak);
    total += a[k];
  }
  for (double& v : a) v /= total;
}

void check_trace(const Network& net, const ForwardTrace& trace) {
  if (trace.pre.size() != net.layer_count() || trace.post.size() != net.layer_count()) {
    throw ConsistencyError("trace has " + std::to_string(trace.pre.size()) +
                           " layers, network has " +
                           std::to_string(net.layer_count()));
  }
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const auto& shape = trace.pre[l].shape();
    if (shape.size() != 2 || shape[0] != trace.batch() ||
        shape[1] != net.layer(l).fan_out()) {
      throw ConsistencyError("trace layer " + std::to_string(l) +
                             " does not match network layer width");
    }
  }
}

// Propagates delta at the output layer back through the stack.
BackwardResult backpropagate(const Network& net, const ForwardTrace& trace,
                             Tensor last_delta) {
  const std::size_t count = net.layer_count();
  const std::size_t batch = trace.batch();
  BackwardResult result;
  result.deltas.resize(count);
  result.deltas[count - 1] = std::move(last_delta);

  for (std::size_t l = count; l-- > 0;) {
    const DenseLayer& layer = net.layer(l);
    const Tensor& delta = result.deltas[l];
    const std::size_t fan_in = layer.fan_in();
    const std::size_t fan_out = layer.fan_out();
    Tensor upstream({batch, fan_in});
    const double* w = layer.weights.data().data();
    const double* d = delta.data().data();
    double* up = upstream.data().data();
    // Sums over o in ascending order for every (n, i).
    for (std::size_t n = 0; n < batch; ++n) {
      double* up_row = up + n * fan_in;
      for (std::size_t o = 0; o < fan_out; ++o) {
        const double dv = d[n * fan_out + o];
        const double* w_row = w + o * fan_in;
        for (std::size_t i = 0; i < fan_in; ++i) up_row[i] += w_row[i] * dv;
      }
    }
    if (l == 0) {
      result.input_error = std::move(upstream);
    } else {
      const Activation act = net.layer(l - 1).activation;
      const Tensor& z = trace.pre[l - 1];
      const Tensor& a = trace.post[l - 1];
      for (std::size_t k = 0; k < upstream.size(); ++k) {
        upstream[k] *= activation_derivative(act, z[k], a[k]);
      }
      result.deltas[l - 1] = std::move(upstream);
    }
  }
  return result;
}

}  // namespace

double activation_derivative(Activation act, double z, double a) {
  switch (act) {
    case Activation::Identity: return 1.0;
    case Activation::ReLU: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Sigmoid: return a * (1.0 - a);
    case Activation::Tanh: return 1.0 - a * a;
    case Activation::Softmax: break;
  }
  throw ConsistencyError("softmax has no elementwise derivative");
}

ForwardTrace forward(const Network& net, const Tensor& input) {
  if (net.layer_count() == 0) throw ConsistencyError("empty network");
  if (input.rank() != 2 || input.cols() != net.input_width()) {
    throw DimensionError("layer 0: input width " + std::to_string(input.cols()) +
                         " != fan_in " + std::to_string(net.input_width()));
  }
  ForwardTrace trace;
  trace.input = input;
  const std::size_t batch = input.rows();
  const Tensor* prev = &trace.input;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const DenseLayer& layer = net.layer(l);
    const std::size_t fan_in = layer.fan_in();
    const std::size_t fan_out = layer.fan_out();
    Tensor z({batch, fan_out});
    const double* w = layer.weights.data().data();
    const double* x = prev->data().data();
    double* zp = z.data().data();
    for (std::size_t n = 0; n < batch; ++n) {
      const double* x_row = x + n * fan_in;
      for (std::size_t o = 0; o < fan_out; ++o) {
        const double* w_row = w + o * fan_in;
        double acc = 0.0;
        for (std::size_t i = 0; i < fan_in; ++i) acc += w_row[i] * x_row[i];
        zp[n * fan_out + o] = acc + layer.biases[o];
      }
    }
    Tensor a({batch, layer.fan_out()});
    if (layer.activation == Activation::Softmax) {
      for (std::size_t n = 0; n < batch; ++n) softmax_row(z.row(n), a.row(n));
    } else {
      for (std::size_t k = 0; k < z.size(); ++k) a[k] = apply_scalar(layer.activation, z[k]);
    }
    trace.pre.push_back(std::move(z));
    trace.post.push_back(std::move(a));
    prev = &trace.post.back();
  }
  return trace;
}

BackwardResult backward(const Network& net, const ForwardTrace& trace,
                        const Tensor& output_grad) {
  check_trace(net, trace);
  const DenseLayer& last = net.layer(net.layer_count() - 1);
  if (last.activation == Activation::Softmax) {
    throw ConsistencyError("softmax output requires backward_log_loss");
  }
  if (output_grad.shape() != trace.output().shape()) {
    throw ConsistencyError("output_grad shape does not match final activation");
  }
  Tensor delta = output_grad;
  const Tensor& z = trace.pre.back();
  const Tensor& a = trace.post.back();
  for (std::size_t k = 0; k < delta.size(); ++k) {
    delta[k] *= activation_derivative(last.activation, z[k], a[k]);
  }
  return backpropagate(net, trace, std::move(delta));
}

BackwardResult backward_log_loss(const Network& net, const ForwardTrace& trace,
                                 std::span<const int> labels, double scale) {
  check_trace(net, trace);
  if (net.layer(net.layer_count() - 1).activation != Activation::Softmax) {
    throw ConsistencyError("backward_log_loss requires a softmax output layer");
  }
  if (labels.size() != trace.batch()) {
    throw ConsistencyError("label count does not match batch size");
  }
  const Tensor& p = trace.output();
  Tensor delta({p.rows(), p.cols()});
  for (std::size_t n = 0; n < p.rows(); ++n) {
    for (std::size_t k = 0; k < p.cols(); ++k) {
      const double target = static_cast<std::size_t>(labels[n]) == k ? 1.0 : 0.0;
      delta(n, k) = scale * (p(n, k) - target);
    }
  }
  return backpropagate(net, trace, std::move(delta));
}

Gradients parameter_gradients(const ForwardTrace& trace,
                              std::span<const Tensor> deltas) {
  if (deltas.size() != trace.post.size()) {
    throw ConsistencyError("delta list length does not match trace");
  }
  const std::size_t batch = trace.batch();
  const double inv_batch = 1.0 / static_cast<double>(batch);
  Gradients grads(deltas.size());
  for (std::size_t l = 0; l < deltas.size(); ++l) {
    const Tensor& delta = deltas[l];
    const Tensor& prev = l == 0 ? trace.input : trace.post[l - 1];
    if (delta.rows() != batch || delta.cols() != trace.post[l].cols()) {
      throw ConsistencyError("delta " + std::to_string(l) + " has wrong shape");
    }
    const std::size_t fan_out = delta.cols();
    const std::size_t fan_in = prev.cols();
    Tensor gw({fan_out, fan_in});
    Tensor gb({fan_out});
    const double* d = delta.data().data();
    const double* x = prev.data().data();
    double* g = gw.data().data();
    // Sums over n in ascending order for every (o, i).
    for (std::size_t n = 0; n < batch; ++n) {
      const double* x_row = x + n * fan_in;
      for (std::size_t o = 0; o < fan_out; ++o) {
        const double dv = d[n * fan_out + o];
        double* g_row = g + o * fan_in;
        for (std::size_t i = 0; i < fan_in; ++i) g_row[i] += dv * x_row[i];
        gb[o] += dv;
      }
    }
    for (double& v : gw.data()) v *= inv_batch;
    for (double& v : gb.data()) v *= inv_batch;
    grads[l] = LayerGradient{std::move(gw), std::move(gb)};
  }
  return grads;
}

void apply_gradients(Network& net, const Gradients& grads, double learning_rate) {
  if (grads.size() != net.layer_count()) {
    throw ConsistencyError("gradient list does not match network depth");
  }
  for (std::size_t l = 0; l < grads.size(); ++l) {
    DenseLayer& layer = net.layer(l);
    if (grads[l].weights.shape() != layer.weights.shape() ||
        grads[l].biases.size() != layer.biases.size()) {
      throw ConsistencyError("gradient " + std::to_string(l) + " has wrong shape");
    }
    for (std::size_t k = 0; k < layer.weights.size(); ++k) {
      layer.weights[k] -= learning_rate * grads[l].weights[k];
    }
    for (std::size_t k = 0; k < layer.biases.size(); ++k) {
      layer.biases[k] -= learning_rate * grads[l].biases[k];
    }
  }
}

void sgd_step(Network& net, std::span<const Tensor> deltas,
              const ForwardTrace& trace, double learning_rate) {
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be > 0");
  apply_gradients(net, parameter_gradients(trace, deltas), learning_rate);
}

std::vector<double> flatten(const Gradients& grads) {
  std::vector<double> out;
  for (const LayerGradient& g : grads) {
    out.insert(out.end(), g.weights.data().begin(), g.weights.data().end());
    out.insert(out.end(), g.biases.data().begin(), g.biases.data().end());
  }
  return out;
}

}  // namespace innet::nn
