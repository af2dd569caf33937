#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "innet/nn.hpp"
#include "innet/protocol.hpp"
#include "innet/rng.hpp"
#include "innet/variational.hpp"

// In-network learning over a star topology: J encoder nodes each hold one
// view of the data, a fusion node holds the labels. Only activations
// (forward) and error slices (backward) cross the links.
namespace innet::inl {

// Encoder node j. Its network outputs [mean, log_variance] of a diagonal
// Gaussian code; the drawn code u_j is what it transmits.
class EncoderNode {
 public:
  EncoderNode(int id, nn::Network net, vib::Prior prior, Tensor shard);

  int id() const noexcept { return id_; }
  std::size_t latent_width() const noexcept { return latent_; }
  const nn::Network& net() const noexcept { return net_; }
  nn::Network& net() noexcept { return net_; }
  const vib::Prior& prior() const noexcept { return prior_; }
  const Tensor& shard() const noexcept { return shard_; }

  // Encodes the given rows of the local shard with the supplied standard
  // normal noise and returns the code to transmit.
  Tensor forward(std::span<const std::size_t> rows, const Tensor& noise);

  // Gradients of the node's parameters from its error slice: adds the
  // s-weighted rate gradient, then backpropagates locally.
  nn::Gradients backward(const Tensor& error_slice, double s);

  void apply(const nn::Gradients& grads, double learning_rate);

  // Per-sample rate term of the last forward call.
  const Tensor& last_rate() const noexcept { return rate_; }

  // Deterministic code (the mean) for a new observation.
  Tensor encode_mean(const Tensor& view) const;

 private:
  int id_;
  nn::Network net_;
  vib::Prior prior_;
  Tensor shard_;
  std::size_t latent_;

  nn::ForwardTrace trace_;
  vib::GaussianEncoderOutput code_;
  Tensor rate_;
  bool awaiting_error_ = false;
};

// Fusion node J+1: decoder network with softmax output (joint head) plus one
// marginal head per encoder, and the label shard.
class FusionNode {
 public:
  FusionNode(nn::Network decoder, std::vector<nn::Network> heads,
             std::vector<std::size_t> slice_widths, std::vector<int> labels);

  struct RoundResult {
    std::vector<Tensor> error_slices;
    Tensor joint_pred;
    std::vector<Tensor> marginal_preds;
  };

  // Concatenates the J activations in node order, runs the decoder and the
  // marginal heads on the labelled rows, and returns each node's slice of
  // the input-layer error.
  RoundResult process(std::span<const Tensor> activations,
                      std::span<const std::size_t> rows, double s);

  // Gradients computed by the last process call.
  const nn::Gradients& decoder_gradients() const noexcept { return decoder_grad_; }
  const std::vector<nn::Gradients>& head_gradients() const noexcept { return head_grads_; }
  void apply(double learning_rate);

  Tensor predict(std::span<const Tensor> activations) const;

  const nn::Network& decoder() const noexcept { return decoder_; }
  nn::Network& decoder() noexcept { return decoder_; }
  const std::vector<nn::Network>& heads() const noexcept { return heads_; }
  std::vector<nn::Network>& heads() noexcept { return heads_; }
  const std::vector<std::size_t>& slice_widths() const noexcept { return widths_; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  std::size_t classes() const { return decoder_.output_width(); }

 private:
  Tensor concat_checked(std::span<const Tensor> activations) const;

  nn::Network decoder_;
  std::vector<nn::Network> heads_;
  std::vector<std::size_t> widths_;
  std::vector<int> labels_;

  nn::Gradients decoder_grad_;
  std::vector<nn::Gradients> head_grads_;
};

// Gradients of the negated objective for every parameter in the system.
struct SystemGradients {
  std::vector<nn::Gradients> encoders;
  nn::Gradients decoder;
  std::vector<nn::Gradients> heads;
};

// Order: encoders 1..J, decoder, heads 1..J.
std::vector<double> flatten(const SystemGradients& grads);

struct TrainOptions {
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double s = 1.0;
  std::size_t samples = 1;  // reparametrization draws per datum
};

struct EpochMetrics {
  vib::LossBreakdown loss;  // sample-weighted mean over the epoch's batches
  std::uint64_t bits = 0;   // metered training bits of this epoch
};

class InlSystem {
 public:
  InlSystem(std::vector<EncoderNode> nodes, FusionNode fusion);

  std::size_t node_count() const noexcept { return nodes_.size(); }
  EncoderNode& node(std::size_t j) { return nodes_.at(j); }
  const EncoderNode& node(std::size_t j) const { return nodes_.at(j); }
  const std::vector<EncoderNode>& nodes() const noexcept { return nodes_; }
  FusionNode& fusion() noexcept { return fusion_; }
  const FusionNode& fusion() const noexcept { return fusion_; }
  std::size_t sample_count() const noexcept { return fusion_.labels().size(); }

  // One lock-step round: forward exchange, fusion backward, error slices,
  // local backward at each node. Gradients are returned, not applied.
  SystemGradients compute_gradients(std::span<const std::size_t> rows,
                                    std::span<const Tensor> noise, double s,
                                    Channel& channel, vib::LossBreakdown* loss = nullptr);

  // compute_gradients followed by the SGD update at every node.
  vib::LossBreakdown train_step(std::span<const std::size_t> rows,
                                std::span<const Tensor> noise, double s,
                                double learning_rate, Channel& channel);

  // Shuffled pass over all aligned samples; noise drawn from rng in node order.
  EpochMetrics train_epoch(const TrainOptions& options, Rng& rng, Channel& channel,
                           int epoch);

  // Joint-head distribution for new samples, using each node's mean code.
  // views[j] is node j+1's observation matrix.
  Tensor infer(std::span<const Tensor> views, Channel* channel = nullptr) const;

  std::vector<double> parameters() const;
  std::size_t parameter_count() const;

 private:
  std::vector<EncoderNode> nodes_;
  FusionNode fusion_;
};

struct InlArchitecture {
  std::vector<std::size_t> input_widths;   // per node
  std::vector<std::size_t> latent_widths;  // per node; sum is the fusion input width
  std::vector<std::size_t> encoder_hidden;
  std::vector<std::size_t> fusion_hidden;
  std::vector<std::size_t> head_hidden;  // empty: one dense layer + softmax
  std::size_t classes = 2;
  nn::Activation activation = nn::Activation::ReLU;
};

// Builds the J encoders (in node order), the decoder, then the heads, drawing
// initial weights from rng in that order.
InlSystem build_inl_system(const InlArchitecture& arch, std::vector<Tensor> shards,
                           std::vector<int> labels, Rng& rng,
                           const std::vector<vib::Prior>& priors = {});

// Fraction of rows whose argmax (lowest index on ties) equals the label.
double accuracy(const Tensor& probabilities, std::span<const int> labels);

}  // namespace innet::inl
