#include "innet/glued.hpp"

#include <string>

#include "innet/errors.hpp"

namespace innet::inl {

GluedModel::GluedModel(std::vector<nn::Network> encoders, std::vector<vib::Prior> priors,
                       nn::Network decoder, std::vector<nn::Network> heads,
                       std::vector<Tensor> views, std::vector<int> labels)
    : encoders_(std::move(encoders)),
      priors_(std::move(priors)),
      decoder_(std::move(decoder)),
      heads_(std::move(heads)),
      views_(std::move(views)),
      labels_(std::move(labels)) {
  const std::size_t nodes = encoders_.size();
  if (priors_.size() != nodes || heads_.size() != nodes || views_.size() != nodes) {
    throw ValidationError("glued model: encoders, priors, heads and views must agree on J");
  }
}

GluedModel GluedModel::from(const InlSystem& system) {
  std::vector<nn::Network> encoders;
  std::vector<vib::Prior> priors;
  std::vector<Tensor> views;
  for (const EncoderNode& node : system.nodes()) {
    encoders.push_back(node.net());
    priors.push_back(node.prior());
    views.push_back(node.shard());
  }
  return GluedModel(std::move(encoders), std::move(priors), system.fusion().decoder(),
                    system.fusion().heads(), std::move(views), system.fusion().labels());
}

GluedModel::Evaluation GluedModel::evaluate(std::span<const std::size_t> rows,
                                            std::span<const Tensor> noise, double s,
                                            bool with_gradients) const {
  const std::size_t nodes = encoders_.size();
  if (noise.size() != nodes) throw ValidationError("one noise tensor per encoder is required");

  std::vector<int> labels(rows.size());
  for (std::size_t n = 0; n < rows.size(); ++n) labels[n] = labels_.at(rows[n]);

  std::vector<nn::ForwardTrace> enc_traces;
  std::vector<vib::GaussianEncoderOutput> codes;
  std::vector<Tensor> samples;
  std::vector<Tensor> rates;
  std::vector<std::size_t> widths;
  for (std::size_t j = 0; j < nodes; ++j) {
    enc_traces.push_back(nn::forward(encoders_[j], gather_rows(views_[j], rows)));
    const Tensor& out = enc_traces.back().output();
    const std::size_t d = out.cols() / 2;
    codes.push_back(vib::encode_reparam(slice_cols(out, 0, d), slice_cols(out, d, d), noise[j]));
    samples.push_back(codes.back().sample);
    rates.push_back(vib::rate_term(codes.back(), priors_[j]));
    widths.push_back(d);
  }

  const nn::ForwardTrace dec_trace = nn::forward(decoder_, concat_cols(samples));
  std::vector<nn::ForwardTrace> head_traces;
  std::vector<Tensor> marginal_preds;
  for (std::size_t j = 0; j < nodes; ++j) {
    head_traces.push_back(nn::forward(heads_[j], samples[j]));
    marginal_preds.push_back(head_traces.back().output());
  }

  Evaluation eval;
  eval.loss = vib::inl_loss(dec_trace.output(), marginal_preds, rates, labels, s);
  if (!with_gradients) return eval;

  const nn::BackwardResult dec_back = nn::backward_log_loss(decoder_, dec_trace, labels);
  eval.gradients.decoder = nn::parameter_gradients(dec_trace, dec_back.deltas);

  // Error at the glued code layer: decoder input error plus each head's
  // input error placed at that head's columns.
  std::vector<Tensor> head_errors;
  for (std::size_t j = 0; j < nodes; ++j) {
    const nn::BackwardResult head_back =
        nn::backward_log_loss(heads_[j], head_traces[j], labels, s);
    eval.gradients.heads.push_back(nn::parameter_gradients(head_traces[j], head_back.deltas));
    head_errors.push_back(head_back.input_error);
  }
  Tensor code_error = dec_back.input_error;
  const Tensor head_error = concat_cols(head_errors);
  for (std::size_t k = 0; k < code_error.size(); ++k) {
    code_error[k] = dec_back.input_error[k] + head_error[k];
  }

  std::vector<vib::RateGradients> rate_grads;
  std::vector<Tensor> rate_sample_grads;
  for (std::size_t j = 0; j < nodes; ++j) {
    rate_grads.push_back(vib::rate_gradients(codes[j], priors_[j]));
    rate_sample_grads.push_back(rate_grads.back().sample);
  }
  const std::vector<Tensor> sample_grads =
      vib::split_output_grad(code_error, widths, rate_sample_grads, s);

  for (std::size_t j = 0; j < nodes; ++j) {
    const vib::EncoderHeadGradients head =
        vib::encoder_head_gradients(codes[j], rate_grads[j], sample_grads[j], s);
    const Tensor parts[] = {head.mean, head.log_variance};
    const nn::BackwardResult back =
        nn::backward(encoders_[j], enc_traces[j], concat_cols(parts));
    eval.gradients.encoders.push_back(nn::parameter_gradients(enc_traces[j], back.deltas));
  }
  return eval;
}

void GluedModel::step(std::span<const std::size_t> rows, std::span<const Tensor> noise,
                      double s, double learning_rate) {
  const Evaluation eval = evaluate(rows, noise, s);
  for (std::size_t j = 0; j < encoders_.size(); ++j) {
    nn::apply_gradients(encoders_[j], eval.gradients.encoders[j], learning_rate);
  }
  nn::apply_gradients(decoder_, eval.gradients.decoder, learning_rate);
  for (std::size_t j = 0; j < heads_.size(); ++j) {
    nn::apply_gradients(heads_[j], eval.gradients.heads[j], learning_rate);
  }
}

std::vector<double> GluedModel::parameters() const {
  std::vector<double> out;
  auto append = [&out](const nn::Network& net) {
    const std::vector<double> flat = net.flatten();
    out.insert(out.end(), flat.begin(), flat.end());
  };
  for (const auto& e : encoders_) append(e);
  append(decoder_);
  for (const auto& h : heads_) append(h);
  return out;
}

void GluedModel::assign(std::span<const double> params) {
  std::size_t offset = 0;
  auto take = [&](nn::Network& net) {
    const std::size_t n = net.parameter_count();
    if (offset + n > params.size()) throw DimensionError("glued assign: too few parameters");
    net.assign(params.subspan(offset, n));
    offset += n;
  };
  for (auto& e : encoders_) take(e);
  take(decoder_);
  for (auto& h : heads_) take(h);
  if (offset != params.size()) throw DimensionError("glued assign: too many parameters");
}

}  // namespace innet::inl
