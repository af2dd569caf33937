#include "innet/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "innet/errors.hpp"
#include "innet/inl.hpp"

namespace innet::baselines {

BranchedModel::BranchedModel(std::vector<nn::Network> branches, nn::Network head)
    : branches_(std::move(branches)), head_(std::move(head)) {
  if (branches_.empty()) throw ValidationError("at least one branch is required");
  std::size_t cut = 0;
  for (const nn::Network& b : branches_) cut += b.output_width();
  if (cut != head_.input_width()) {
    throw ValidationError("branch outputs sum to " + std::to_string(cut) +
                          " but the head expects " + std::to_string(head_.input_width()));
  }
  if (head_.layer(head_.layer_count() - 1).activation != nn::Activation::Softmax) {
    throw ValidationError("head must end in softmax");
  }
}

BranchedModel BranchedModel::build(std::size_t branches, std::size_t input_width,
                                   std::span<const std::size_t> branch_hidden,
                                   std::size_t branch_output,
                                   std::span<const std::size_t> head_hidden,
                                   std::size_t classes, nn::Activation activation, Rng& rng) {
  std::vector<nn::Network> nets;
  for (std::size_t b = 0; b < branches; ++b) {
    std::vector<nn::LayerSpec> specs;
    for (std::size_t w : branch_hidden) specs.push_back({w, activation});
    specs.push_back({branch_output, activation});
    nets.push_back(nn::Network::build(input_width, specs, rng));
  }
  std::vector<nn::LayerSpec> specs;
  for (std::size_t w : head_hidden) specs.push_back({w, activation});
  specs.push_back({classes, nn::Activation::Softmax});
  nn::Network head = nn::Network::build(branches * branch_output, specs, rng);
  return BranchedModel(std::move(nets), std::move(head));
}

BranchedModel::ClientTrace BranchedModel::forward_client(std::span<const Tensor> inputs) const {
  if (inputs.size() != branches_.size()) {
    throw DimensionError("expected " + std::to_string(branches_.size()) + " inputs, got " +
                         std::to_string(inputs.size()));
  }
  ClientTrace t;
  std::vector<Tensor> outs;
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    t.branches.push_back(nn::forward(branches_[b], inputs[b]));
    outs.push_back(t.branches.back().output());
  }
  t.cut = concat_cols(outs);
  return t;
}

Tensor BranchedModel::server_step(const Tensor& cut, std::span<const int> labels, Grads& grads,
                                  double* mean_ll) const {
  const nn::ForwardTrace trace = nn::forward(head_, cut);
  if (mean_ll != nullptr) {
    double ll = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      ll += std::log(std::max(trace.output()(i, static_cast<std::size_t>(labels[i])), 1e-12));
    }
    *mean_ll = ll / static_cast<double>(labels.size());
  }
  const nn::BackwardResult back = nn::backward_log_loss(head_, trace, labels);
  grads.head = nn::parameter_gradients(trace, back.deltas);
  return back.input_error;
}

void BranchedModel::client_backward(const ClientTrace& trace, const Tensor& cut_error,
                                    Grads& grads) const {
  grads.branches.clear();
  std::size_t begin = 0;
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    const std::size_t width = branches_[b].output_width();
    const nn::BackwardResult back =
        nn::backward(branches_[b], trace.branches[b], slice_cols(cut_error, begin, width));
    grads.branches.push_back(nn::parameter_gradients(trace.branches[b], back.deltas));
    begin += width;
  }
}

double BranchedModel::train_batch(std::span<const Tensor> inputs, std::span<const int> labels,
                                  double learning_rate) {
  const ClientTrace trace = forward_client(inputs);
  Grads grads;
  double ll = 0.0;
  const Tensor cut_error = server_step(trace.cut, labels, grads, &ll);
  client_backward(trace, cut_error, grads);
  apply(grads, learning_rate);
  return ll;
}

void BranchedModel::apply(const Grads& grads, double learning_rate) {
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    nn::apply_gradients(branches_[b], grads.branches[b], learning_rate);
  }
  nn::apply_gradients(head_, grads.head, learning_rate);
}

Tensor BranchedModel::predict(std::span<const Tensor> inputs) const {
  return nn::forward(head_, forward_client(inputs).cut).output();
}

std::vector<double> BranchedModel::parameters() const {
  std::vector<double> out = client_parameters();
  const std::vector<double> h = head_.flatten();
  out.insert(out.end(), h.begin(), h.end());
  return out;
}

void BranchedModel::assign(std::span<const double> params) {
  if (params.size() != parameter_count()) {
    throw ValidationError("parameter vector has " + std::to_string(params.size()) +
                          " entries, model has " + std::to_string(parameter_count()));
  }
  const std::size_t client = client_parameter_count();
  assign_client(params.first(client));
  head_.assign(params.subspan(client));
}

std::size_t BranchedModel::parameter_count() const {
  return client_parameter_count() + head_.parameter_count();
}

std::size_t BranchedModel::client_parameter_count() const {
  std::size_t n = 0;
  for (const nn::Network& b : branches_) n += b.parameter_count();
  return n;
}

std::vector<double> BranchedModel::client_parameters() const {
  std::vector<double> out;
  for (const nn::Network& b : branches_) {
    const std::vector<double> p = b.flatten();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

void BranchedModel::assign_client(std::span<const double> params) {
  if (params.size() != client_parameter_count()) {
    throw ValidationError("client parameter vector has " + std::to_string(params.size()) +
                          " entries, expected " + std::to_string(client_parameter_count()));
  }
  std::size_t at = 0;
  for (nn::Network& b : branches_) {
    const std::size_t n = b.parameter_count();
    b.assign(params.subspan(at, n));
    at += n;
  }
}

namespace {

std::vector<Tensor> gather_inputs(std::span<const Tensor> inputs,
                                  std::span<const std::size_t> rows) {
  std::vector<Tensor> out;
  for (const Tensor& x : inputs) out.push_back(gather_rows(x, rows));
  return out;
}

std::vector<int> gather_labels(std::span<const int> labels, std::span<const std::size_t> rows) {
  std::vector<int> out;
  for (std::size_t r : rows) out.push_back(labels[r]);
  return out;
}

std::vector<std::size_t> shuffled_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  return order;
}

}  // namespace

double train_epoch(BranchedModel& model, std::span<const Tensor> inputs,
                   std::span<const int> labels, std::size_t batch_size,
                   double learning_rate, Rng& rng) {
  if (batch_size == 0) throw ValidationError("batch size must be positive");
  if (labels.empty()) return 0.0;
  const std::vector<std::size_t> order = shuffled_order(labels.size(), rng);
  double ll = 0.0;
  for (std::size_t at = 0; at < order.size(); at += batch_size) {
    const std::size_t n = std::min(batch_size, order.size() - at);
    const std::span<const std::size_t> rows(order.data() + at, n);
    ll += static_cast<double>(n) *
          model.train_batch(gather_inputs(inputs, rows), gather_labels(labels, rows),
                            learning_rate);
  }
  return ll / static_cast<double>(labels.size());
}

std::vector<double> federated_average(std::span<const std::vector<double>> params,
                                      std::span<const double> weights) {
  if (params.empty()) throw ValidationError("no parameter vectors to average");
  if (!weights.empty() && weights.size() != params.size()) {
    throw ValidationError("one weight per client is required");
  }
  const std::size_t n = params.front().size();
  for (const auto& p : params) {
    if (p.size() != n) throw ValidationError("parameter vectors differ in length");
  }
  double total_weight = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ValidationError("client weights must be non-negative");
    total_weight += w;
  }
  if (!weights.empty() && total_weight <= 0.0) throw ValidationError("client weights sum to 0");

  std::vector<double> out(n);
  std::vector<double> terms(params.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      terms[k] = weights.empty() ? params[k][i] : params[k][i] * (weights[k] / total_weight);
    }
    std::sort(terms.begin(), terms.end());
    double sum = 0.0;
    for (double t : terms) sum += t;
    out[i] = weights.empty() ? sum / static_cast<double>(params.size()) : sum;
  }
  return out;
}

FlRoundResult fl_round(std::vector<FlClient>& clients, std::span<const double> server_params,
                       const FlOptions& options, inl::Channel& channel, int epoch) {
  if (clients.empty()) throw ValidationError("no clients");
  for (const FlClient& c : clients) {
    if (c.model.parameter_count() != server_params.size()) {
      throw ValidationError("client " + std::to_string(c.id) + " has " +
                            std::to_string(c.model.parameter_count()) +
                            " parameters, server has " + std::to_string(server_params.size()));
    }
  }
  const std::uint64_t before = channel.log().total_bits();
  const std::uint64_t n = server_params.size();

  channel.set_round(epoch, 0, inl::Phase::Training);
  std::vector<std::vector<double>> uploads;
  std::vector<double> weights;
  double ll = 0.0;
  std::size_t samples = 0;
  for (FlClient& c : clients) {
    channel.send_count(inl::MessageKind::ModelDownload, c.id, n);
    c.model.assign(server_params);
    for (std::size_t e = 0; e < options.local_epochs; ++e) {
      const double client_ll = train_epoch(c.model, c.inputs, c.labels, options.batch_size,
                                           options.learning_rate, c.rng);
      if (e + 1 == options.local_epochs) {
        ll += client_ll * static_cast<double>(c.labels.size());
        samples += c.labels.size();
      }
    }
    channel.send_count(inl::MessageKind::ModelUpload, c.id, n);
    uploads.push_back(c.model.parameters());
    weights.push_back(static_cast<double>(c.labels.size()));
  }

  FlRoundResult result;
  result.params = options.weighted ? federated_average(uploads, weights)
                                   : federated_average(uploads);
  result.bits = channel.log().total_bits() - before;
  result.mean_ll = samples > 0 ? ll / static_cast<double>(samples) : 0.0;
  return result;
}

SlEpochResult sl_epoch(std::span<const SlClient> clients,
                       std::span<const std::vector<int>> labels, BranchedModel& model,
                       std::size_t batch_size, double learning_rate, Rng& rng,
                       inl::Channel& channel, int epoch) {
  if (clients.empty()) throw ValidationError("split learning needs at least one client");
  if (labels.size() != clients.size()) throw ValidationError("one label shard per client");
  if (batch_size == 0) throw ValidationError("batch size must be positive");
  const std::uint64_t before = channel.log().total_bits();
  const std::size_t handoff = model.client_parameter_count();

  double ll = 0.0;
  std::size_t samples = 0;
  int batch = 0;
  for (std::size_t k = 0; k < clients.size(); ++k) {
    const SlClient& c = clients[k];
    const std::vector<int>& y = labels[k];
    const std::vector<std::size_t> order = shuffled_order(y.size(), rng);
    for (std::size_t at = 0; at < order.size(); at += batch_size) {
      const std::size_t n = std::min(batch_size, order.size() - at);
      const std::span<const std::size_t> rows(order.data() + at, n);
      channel.set_round(epoch, batch++, inl::Phase::Training);

      const BranchedModel::ClientTrace trace = model.forward_client(gather_inputs(c.inputs, rows));
      const Tensor cut = channel.send(inl::MessageKind::ActivationBatch, c.id, trace.cut).payload;
      BranchedModel::Grads grads;
      double batch_ll = 0.0;
      const Tensor cut_error = model.server_step(cut, gather_labels(y, rows), grads, &batch_ll);
      const Tensor delivered =
          channel.send(inl::MessageKind::ErrorSlice, c.id, cut_error).payload;
      model.client_backward(trace, delivered, grads);
      model.apply(grads, learning_rate);
      ll += batch_ll * static_cast<double>(n);
      samples += n;
    }
    // Weights move to the next client; the last hands back to the first.
    channel.send_count(inl::MessageKind::WeightHandoff, c.id, handoff);
  }

  SlEpochResult result;
  result.mean_ll = samples > 0 ? ll / static_cast<double>(samples) : 0.0;
  result.bits = channel.log().total_bits() - before;
  return result;
}

double accuracy(const Tensor& probabilities, std::span<const int> labels) {
  return inl::accuracy(probabilities, labels);
}

}  // namespace innet::baselines
