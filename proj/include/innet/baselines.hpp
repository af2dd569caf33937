#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "innet/nn.hpp"
#include "innet/protocol.hpp"
#include "innet/rng.hpp"

// Federated averaging and split learning on the same dense engine.
namespace innet::baselines {

// B parallel branch networks whose outputs are concatenated into a head
// network ending in softmax. Under split learning the branches are the
// client side and the head is the server side.
class BranchedModel {
 public:
  BranchedModel(std::vector<nn::Network> branches, nn::Network head);

  static BranchedModel build(std::size_t branches, std::size_t input_width,
                             std::span<const std::size_t> branch_hidden,
                             std::size_t branch_output,
                             std::span<const std::size_t> head_hidden, std::size_t classes,
                             nn::Activation activation, Rng& rng);

  struct ClientTrace {
    std::vector<nn::ForwardTrace> branches;
    Tensor cut;  // concatenated branch outputs
  };
  struct Grads {
    std::vector<nn::Gradients> branches;
    nn::Gradients head;
  };

  ClientTrace forward_client(std::span<const Tensor> inputs) const;
  // Server side: head forward plus log-loss backward. Returns the error at
  // the cut layer and stores the head gradients into grads.
  Tensor server_step(const Tensor& cut, std::span<const int> labels, Grads& grads,
                     double* mean_ll = nullptr) const;
  void client_backward(const ClientTrace& trace, const Tensor& cut_error, Grads& grads) const;

  // Whole-model step: forward, backward, SGD. Returns the batch mean
  // log-likelihood of the labels.
  double train_batch(std::span<const Tensor> inputs, std::span<const int> labels,
                     double learning_rate);

  void apply(const Grads& grads, double learning_rate);

  Tensor predict(std::span<const Tensor> inputs) const;

  std::vector<double> parameters() const;
  void assign(std::span<const double> params);
  std::size_t parameter_count() const;
  std::size_t client_parameter_count() const;
  std::vector<double> client_parameters() const;
  void assign_client(std::span<const double> params);

  std::size_t branch_count() const noexcept { return branches_.size(); }
  std::size_t cut_width() const { return head_.input_width(); }
  const std::vector<nn::Network>& branches() const noexcept { return branches_; }
  const nn::Network& head() const noexcept { return head_; }

 private:
  std::vector<nn::Network> branches_;
  nn::Network head_;
};

// One shuffled SGD pass; returns the sample-weighted mean log-likelihood.
double train_epoch(BranchedModel& model, std::span<const Tensor> inputs,
                   std::span<const int> labels, std::size_t batch_size,
                   double learning_rate, Rng& rng);

// Parameter average. Contributions are summed per coordinate in sorted order,
// so the result does not depend on client order. Empty weights: uniform.
std::vector<double> federated_average(std::span<const std::vector<double>> params,
                                      std::span<const double> weights = {});

struct FlClient {
  int id;
  BranchedModel model;
  std::vector<Tensor> inputs;
  std::vector<int> labels;
  Rng rng;
};

struct FlOptions {
  std::size_t local_epochs = 1;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  bool weighted = false;  // weight clients by shard size
};

struct FlRoundResult {
  std::vector<double> params;
  std::uint64_t bits = 0;
  double mean_ll = 0.0;
};

// Download server parameters to every client, train locally, upload and
// average. Meters one ModelDownload and one ModelUpload of N values per client.
FlRoundResult fl_round(std::vector<FlClient>& clients, std::span<const double> server_params,
                       const FlOptions& options, inl::Channel& channel, int epoch);

struct SlClient {
  int id;
  std::vector<Tensor> inputs;
};

struct SlEpochResult {
  double mean_ll = 0.0;
  std::uint64_t bits = 0;
};

// Clients train in order against the server head, exchanging cut
// activations and cut errors per batch; after its pass each client hands its
// branch weights to the next (the last one to the first). labels[k] are the
// labels of client k's rows, held by the server.
SlEpochResult sl_epoch(std::span<const SlClient> clients,
                       std::span<const std::vector<int>> labels, BranchedModel& model,
                       std::size_t batch_size, double learning_rate, Rng& rng,
                       inl::Channel& channel, int epoch);

double accuracy(const Tensor& probabilities, std::span<const int> labels);

}  // namespace innet::baselines
