#include "innet/inl.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "innet/errors.hpp"

namespace innet::inl {

EncoderNode::EncoderNode(int id, nn::Network net, vib::Prior prior, Tensor shard)
    : id_(id), net_(std::move(net)), prior_(std::move(prior)), shard_(std::move(shard)) {
  const auto& last = net_.layer(net_.layer_count() - 1);
  if (net_.output_width() % 2 != 0 || last.activation == nn::Activation::Softmax) {
    throw ValidationError("node " + std::to_string(id) +
                          ": encoder output must be [mean, log_variance] of even width");
  }
  latent_ = net_.output_width() / 2;
  if (prior_.kind == vib::Prior::Kind::FixedDiagonalGaussian &&
      prior_.mean.size() != latent_) {
    throw ValidationError("node " + std::to_string(id) + ": prior dimension mismatch");
  }
  if (!shard_.empty() && shard_.cols() != net_.input_width()) {
    throw DimensionError("node " + std::to_string(id) + ": shard width " +
                         std::to_string(shard_.cols()) + " != encoder input " +
                         std::to_string(net_.input_width()));
  }
}

Tensor EncoderNode::forward(std::span<const std::size_t> rows, const Tensor& noise) {
  if (noise.rows() != rows.size() || noise.cols() != latent_) {
    throw ProtocolError(id_, "noise must be [batch, latent]");
  }
  trace_ = nn::forward(net_, gather_rows(shard_, rows));
  const Tensor& out = trace_.output();
  code_ = vib::encode_reparam(slice_cols(out, 0, latent_),
                              slice_cols(out, latent_, latent_), noise);
  rate_ = vib::rate_term(code_, prior_);
  awaiting_error_ = true;
  return code_.sample;
}

nn::Gradients EncoderNode::backward(const Tensor& error_slice, double s) {
  if (!awaiting_error_) throw ProtocolError(id_, "error slice without a pending forward");
  if (error_slice.shape() != code_.sample.shape()) {
    throw ProtocolError(id_, "error slice is " + std::to_string(error_slice.rows()) + "x" +
                                 std::to_string(error_slice.cols()) + ", expected " +
                                 std::to_string(code_.sample.rows()) + "x" +
                                 std::to_string(latent_));
  }
  const vib::RateGradients rate = vib::rate_gradients(code_, prior_);
  const Tensor sample_grad = vib::add_rate_correction(error_slice, rate.sample, s);
  const vib::EncoderHeadGradients head =
      vib::encoder_head_gradients(code_, rate, sample_grad, s);
  const Tensor parts[] = {head.mean, head.log_variance};
  const nn::BackwardResult back = nn::backward(net_, trace_, concat_cols(parts));
  awaiting_error_ = false;
  return nn::parameter_gradients(trace_, back.deltas);
}

void EncoderNode::apply(const nn::Gradients& grads, double learning_rate) {
  nn::apply_gradients(net_, grads, learning_rate);
}

Tensor EncoderNode::encode_mean(const Tensor& view) const {
  const nn::ForwardTrace trace = nn::forward(net_, view);
  return slice_cols(trace.output(), 0, latent_);
}

FusionNode::FusionNode(nn::Network decoder, std::vector<nn::Network> heads,
                       std::vector<std::size_t> slice_widths, std::vector<int> labels)
    : decoder_(std::move(decoder)),
      heads_(std::move(heads)),
      widths_(std::move(slice_widths)),
      labels_(std::move(labels)) {
  const std::size_t total = std::accumulate(widths_.begin(), widths_.end(), std::size_t{0});
  if (decoder_.input_width() != total) {
    throw ValidationError("fusion input width " + std::to_string(decoder_.input_width()) +
                          " != sum of encoder output widths " + std::to_string(total));
  }
  if (decoder_.layer(decoder_.layer_count() - 1).activation != nn::Activation::Softmax) {
    throw ValidationError("fusion decoder must end in softmax");
  }
  if (heads_.size() != widths_.size()) {
    throw ValidationError("one marginal head per encoder node is required");
  }
  for (std::size_t j = 0; j < heads_.size(); ++j) {
    if (heads_[j].input_width() != widths_[j] ||
        heads_[j].output_width() != decoder_.output_width() ||
        heads_[j].layer(heads_[j].layer_count() - 1).activation != nn::Activation::Softmax) {
      throw ValidationError("marginal head " + std::to_string(j + 1) +
                            " must map the node code to a softmax over the classes");
    }
  }
  for (int y : labels_) {
    if (y < 0 || static_cast<std::size_t>(y) >= decoder_.output_width()) {
      throw ValidationError("label " + std::to_string(y) + " outside [0, K)");
    }
  }
  head_grads_.resize(heads_.size());
}

Tensor FusionNode::concat_checked(std::span<const Tensor> activations) const {
  if (activations.size() != widths_.size()) {
    throw ProtocolError(0, "expected " + std::to_string(widths_.size()) +
                               " activation batches, got " +
                               std::to_string(activations.size()));
  }
  for (std::size_t j = 0; j < activations.size(); ++j) {
    if (activations[j].cols() != widths_[j] ||
        activations[j].rows() != activations.front().rows()) {
      throw ProtocolError(static_cast<int>(j) + 1, "activation batch has wrong shape");
    }
  }
  return concat_cols(activations);
}

FusionNode::RoundResult FusionNode::process(std::span<const Tensor> activations,
                                            std::span<const std::size_t> rows, double s) {
  const Tensor fused = concat_checked(activations);
  if (fused.rows() != rows.size()) throw ProtocolError(0, "batch rows do not match labels");
  std::vector<int> labels(rows.size());
  for (std::size_t n = 0; n < rows.size(); ++n) labels[n] = labels_.at(rows[n]);

  const nn::ForwardTrace dec_trace = nn::forward(decoder_, fused);
  const nn::BackwardResult dec_back = nn::backward_log_loss(decoder_, dec_trace, labels);
  decoder_grad_ = nn::parameter_gradients(dec_trace, dec_back.deltas);

  RoundResult result;
  result.joint_pred = dec_trace.output();
  std::size_t offset = 0;
  for (std::size_t j = 0; j < heads_.size(); ++j) {
    const nn::ForwardTrace head_trace = nn::forward(heads_[j], activations[j]);
    const nn::BackwardResult head_back =
        nn::backward_log_loss(heads_[j], head_trace, labels, s);
    head_grads_[j] = nn::parameter_gradients(head_trace, head_back.deltas);

    Tensor slice = slice_cols(dec_back.input_error, offset, widths_[j]);
    for (std::size_t k = 0; k < slice.size(); ++k) slice[k] += head_back.input_error[k];
    result.error_slices.push_back(std::move(slice));
    result.marginal_preds.push_back(head_trace.output());
    offset += widths_[j];
  }
  return result;
}

void FusionNode::apply(double learning_rate) {
  nn::apply_gradients(decoder_, decoder_grad_, learning_rate);
  for (std::size_t j = 0; j < heads_.size(); ++j) {
    nn::apply_gradients(heads_[j], head_grads_[j], learning_rate);
  }
}

Tensor FusionNode::predict(std::span<const Tensor> activations) const {
  return nn::forward(decoder_, concat_checked(activations)).output();
}

std::vector<double> flatten(const SystemGradients& grads) {
  std::vector<double> out;
  auto append = [&out](const nn::Gradients& g) {
    const std::vector<double> flat = nn::flatten(g);
    out.insert(out.end(), flat.begin(), flat.end());
  };
  for (const auto& g : grads.encoders) append(g);
  append(grads.decoder);
  for (const auto& g : grads.heads) append(g);
  return out;
}

InlSystem::InlSystem(std::vector<EncoderNode> nodes, FusionNode fusion)
    : nodes_(std::move(nodes)), fusion_(std::move(fusion)) {
  if (nodes_.empty()) throw ValidationError("at least one encoder node is required");
  if (nodes_.size() != fusion_.slice_widths().size()) {
    throw ValidationError("fusion expects " + std::to_string(fusion_.slice_widths().size()) +
                          " nodes, got " + std::to_string(nodes_.size()));
  }
  for (std::size_t j = 0; j < nodes_.size(); ++j) {
    if (nodes_[j].id() != static_cast<int>(j) + 1) {
      throw ValidationError("encoder nodes must be ordered by id 1..J");
    }
    if (nodes_[j].latent_width() != fusion_.slice_widths()[j]) {
      throw ValidationError("node " + std::to_string(j + 1) + " emits " +
                            std::to_string(nodes_[j].latent_width()) +
                            " values but its fusion slice is " +
                            std::to_string(fusion_.slice_widths()[j]));
    }
    if (nodes_[j].shard().rows() != fusion_.labels().size()) {
      throw ValidationError("node " + std::to_string(j + 1) +
                            " shard is not aligned with the fusion labels");
    }
  }
}

SystemGradients InlSystem::compute_gradients(std::span<const std::size_t> rows,
                                             std::span<const Tensor> noise, double s,
                                             Channel& channel, vib::LossBreakdown* loss) {
  if (noise.size() != nodes_.size()) {
    throw ProtocolError(0, "one noise tensor per node is required");
  }
  std::vector<Tensor> delivered;
  delivered.reserve(nodes_.size());
  for (std::size_t j = 0; j < nodes_.size(); ++j) {
    const Tensor u = nodes_[j].forward(rows, noise[j]);
    delivered.push_back(channel.send(MessageKind::ActivationBatch, nodes_[j].id(), u).payload);
  }

  FusionNode::RoundResult round = fusion_.process(delivered, rows, s);

  SystemGradients grads;
  for (std::size_t j = 0; j < nodes_.size(); ++j) {
    const Message msg =
        channel.send(MessageKind::ErrorSlice, nodes_[j].id(), round.error_slices[j]);
    grads.encoders.push_back(nodes_[j].backward(msg.payload, s));
  }
  grads.decoder = fusion_.decoder_gradients();
  grads.heads = fusion_.head_gradients();

  if (loss != nullptr) {
    std::vector<Tensor> rates;
    for (const EncoderNode& node : nodes_) rates.push_back(node.last_rate());
    std::vector<int> labels(rows.size());
    for (std::size_t n = 0; n < rows.size(); ++n) labels[n] = fusion_.labels()[rows[n]];
    *loss = vib::inl_loss(round.joint_pred, round.marginal_preds, rates, labels, s);
  }
  return grads;
}

vib::LossBreakdown InlSystem::train_step(std::span<const std::size_t> rows,
                                         std::span<const Tensor> noise, double s,
                                         double learning_rate, Channel& channel) {
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be > 0");
  vib::LossBreakdown loss;
  const SystemGradients grads = compute_gradients(rows, noise, s, channel, &loss);
  for (std::size_t j = 0; j < nodes_.size(); ++j) {
    nodes_[j].apply(grads.encoders[j], learning_rate);
  }
  fusion_.apply(learning_rate);
  return loss;
}

EpochMetrics InlSystem::train_epoch(const TrainOptions& options, Rng& rng,
                                    Channel& channel, int epoch) {
  if (options.batch_size == 0 || options.samples == 0) {
    throw ValidationError("batch size and sample count must be positive");
  }
  const std::size_t n = sample_count();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);

  const std::uint64_t bits_before = channel.log().bits(Phase::Training);
  EpochMetrics metrics;
  metrics.loss.s = options.s;
  metrics.loss.marginal_ll.assign(nodes_.size(), 0.0);
  metrics.loss.rate.assign(nodes_.size(), 0.0);
  double weight_total = 0.0;

  int batch_index = 0;
  for (std::size_t start = 0; start < n; start += options.batch_size, ++batch_index) {
    const std::size_t stop = std::min(n, start + options.batch_size);
    std::vector<std::size_t> rows;
    rows.reserve((stop - start) * options.samples);
    for (std::size_t k = start; k < stop; ++k) {
      for (std::size_t m = 0; m < options.samples; ++m) rows.push_back(order[k]);
    }
    std::vector<Tensor> noise;
    for (const EncoderNode& node : nodes_) {
      noise.push_back(rng.normal_tensor(rows.size(), node.latent_width()));
    }
    channel.set_round(epoch, batch_index, Phase::Training);
    const vib::LossBreakdown loss =
        train_step(rows, noise, options.s, options.learning_rate, channel);

    const double w = static_cast<double>(stop - start);
    weight_total += w;
    metrics.loss.joint_ll += w * loss.joint_ll;
    metrics.loss.total += w * loss.total;
    for (std::size_t j = 0; j < nodes_.size(); ++j) {
      metrics.loss.marginal_ll[j] += w * loss.marginal_ll[j];
      metrics.loss.rate[j] += w * loss.rate[j];
    }
  }
  if (weight_total > 0.0) {
    metrics.loss.joint_ll /= weight_total;
    metrics.loss.total /= weight_total;
    for (std::size_t j = 0; j < nodes_.size(); ++j) {
      metrics.loss.marginal_ll[j] /= weight_total;
      metrics.loss.rate[j] /= weight_total;
    }
  }
  metrics.bits = channel.log().bits(Phase::Training) - bits_before;
  return metrics;
}

Tensor InlSystem::infer(std::span<const Tensor> views, Channel* channel) const {
  for (std::size_t j = 0; j < nodes_.size(); ++j) {
    if (j >= views.size() || views[j].empty()) {
      throw UnavailableViewError(static_cast<int>(j) + 1);
    }
  }
  std::vector<Tensor> delivered;
  for (std::size_t j = 0; j < nodes_.size(); ++j) {
    Tensor code = nodes_[j].encode_mean(views[j]);
    if (channel != nullptr) {
      code = channel->send(MessageKind::PredictionRequest, nodes_[j].id(), code).payload;
    }
    delivered.push_back(std::move(code));
  }
  Tensor probs = fusion_.predict(delivered);
  if (channel != nullptr) {
    channel->send_count(MessageKind::SoftPrediction, static_cast<int>(nodes_.size()) + 1,
                        probs.size());
  }
  return probs;
}

std::vector<double> InlSystem::parameters() const {
  std::vector<double> out;
  auto append = [&out](const nn::Network& net) {
    const std::vector<double> flat = net.flatten();
    out.insert(out.end(), flat.begin(), flat.end());
  };
  for (const EncoderNode& node : nodes_) append(node.net());
  append(fusion_.decoder());
  for (const nn::Network& head : fusion_.heads()) append(head);
  return out;
}

std::size_t InlSystem::parameter_count() const {
  std::size_t n = fusion_.decoder().parameter_count();
  for (const EncoderNode& node : nodes_) n += node.net().parameter_count();
  for (const nn::Network& head : fusion_.heads()) n += head.parameter_count();
  return n;
}

InlSystem build_inl_system(const InlArchitecture& arch, std::vector<Tensor> shards,
                           std::vector<int> labels, Rng& rng,
                           const std::vector<vib::Prior>& priors) {
  const std::size_t nodes = arch.input_widths.size();
  if (nodes == 0 || arch.latent_widths.size() != nodes || shards.size() != nodes) {
    throw ValidationError("architecture, latent widths and shards must agree on J");
  }
  if (!priors.empty() && priors.size() != nodes) {
    throw ValidationError("one prior per node is required");
  }
  std::vector<EncoderNode> encoders;
  for (std::size_t j = 0; j < nodes; ++j) {
    std::vector<nn::LayerSpec> specs;
    for (std::size_t w : arch.encoder_hidden) specs.push_back({w, arch.activation});
    specs.push_back({2 * arch.latent_widths[j], nn::Activation::Identity});
    encoders.emplace_back(static_cast<int>(j) + 1,
                          nn::Network::build(arch.input_widths[j], specs, rng),
                          priors.empty() ? vib::Prior::standard_normal() : priors[j],
                          std::move(shards[j]));
  }

  const std::size_t fused =
      std::accumulate(arch.latent_widths.begin(), arch.latent_widths.end(), std::size_t{0});
  std::vector<nn::LayerSpec> dec_specs;
  for (std::size_t w : arch.fusion_hidden) dec_specs.push_back({w, arch.activation});
  dec_specs.push_back({arch.classes, nn::Activation::Softmax});
  nn::Network decoder = nn::Network::build(fused, dec_specs, rng);

  std::vector<nn::Network> heads;
  for (std::size_t j = 0; j < nodes; ++j) {
    std::vector<nn::LayerSpec> specs;
    for (std::size_t w : arch.head_hidden) specs.push_back({w, arch.activation});
    specs.push_back({arch.classes, nn::Activation::Softmax});
    heads.push_back(nn::Network::build(arch.latent_widths[j], specs, rng));
  }

  FusionNode fusion(std::move(decoder), std::move(heads), arch.latent_widths,
                    std::move(labels));
  return InlSystem(std::move(encoders), std::move(fusion));
}

double accuracy(const Tensor& probabilities, std::span<const int> labels) {
  if (probabilities.rows() != labels.size()) {
    throw ValidationError("prediction rows do not match label count");
  }
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const auto row = probabilities.row(n);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == labels[n]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace innet::inl
