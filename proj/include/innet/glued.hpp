#pragma once

#include <span>
#include <vector>

#include "innet/inl.hpp"

namespace innet::inl {

// Single-process model holding every encoder, the decoder and the marginal
// heads side by side. Computes the full gradient of the negated objective
// in one pass over the glued graph, with no links, messages or slicing
// protocol. Used as the reference for the split protocol.
class GluedModel {
 public:
  GluedModel(std::vector<nn::Network> encoders, std::vector<vib::Prior> priors,
             nn::Network decoder, std::vector<nn::Network> heads,
             std::vector<Tensor> views, std::vector<int> labels);

  // Deep copy of a system's parameters and data.
  static GluedModel from(const InlSystem& system);

  struct Evaluation {
    vib::LossBreakdown loss;
    SystemGradients gradients;
  };

  // Objective and, if requested, its gradient on the given rows with fixed
  // reparametrization noise (one [rows, d_u] tensor per encoder).
  Evaluation evaluate(std::span<const std::size_t> rows, std::span<const Tensor> noise,
                      double s, bool with_gradients = true) const;

  void step(std::span<const std::size_t> rows, std::span<const Tensor> noise, double s,
            double learning_rate);

  // Same order as InlSystem::parameters().
  std::vector<double> parameters() const;
  void assign(std::span<const double> params);

  const std::vector<nn::Network>& encoders() const noexcept { return encoders_; }
  const nn::Network& decoder() const noexcept { return decoder_; }
  const std::vector<nn::Network>& heads() const noexcept { return heads_; }

 private:
  std::vector<nn::Network> encoders_;
  std::vector<vib::Prior> priors_;
  nn::Network decoder_;
  std::vector<nn::Network> heads_;
  std::vector<Tensor> views_;
  std::vector<int> labels_;
};

}  // namespace innet::inl
