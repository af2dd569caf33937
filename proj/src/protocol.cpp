#include "innet/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "innet/errors.hpp"

namespace innet::inl {

std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::ActivationBatch: return "activation_batch";
    case MessageKind::ErrorSlice: return "error_slice";
    case MessageKind::PredictionRequest: return "prediction_request";
    case MessageKind::SoftPrediction: return "soft_prediction";
    case MessageKind::ModelDownload: return "model_download";
    case MessageKind::ModelUpload: return "model_upload";
    case MessageKind::WeightHandoff: return "weight_handoff";
  }
  return "unknown";
}

std::string_view to_string(Direction direction) {
  return direction == Direction::Forward ? "fwd" : "bwd";
}

Direction direction_of(MessageKind kind) {
  switch (kind) {
    case MessageKind::ErrorSlice:
    case MessageKind::ModelDownload:
      return Direction::Backward;
    default:
      return Direction::Forward;
  }
}

Quantizer Quantizer::uniform(int bits, double range) {
  if (bits < 1 || bits > 32) throw ValidationError("quantizer bits must be in [1, 32]");
  if (!(range > 0.0)) throw ValidationError("quantizer range must be > 0");
  return Quantizer{Mode::UniformFixedWidth, bits, range};
}

Tensor Quantizer::apply(const Tensor& payload) const {
  if (mode == Mode::Off) return payload;
  const double levels = std::ldexp(1.0, bits) - 1.0;
  const double step = 2.0 * range / levels;
  Tensor out = payload;
  for (double& v : out.data()) {
    const double clamped = std::clamp(v, -range, range);
    v = std::round((clamped + range) / step) * step - range;
  }
  return out;
}

std::uint64_t meter(std::span<const MessageRecord> records) {
  std::uint64_t total = 0;
  for (const MessageRecord& r : records) total += r.bits;
  return total;
}

std::uint64_t MessageLog::total_bits() const { return meter(records_); }

std::uint64_t MessageLog::bits(Phase phase) const {
  std::uint64_t total = 0;
  for (const MessageRecord& r : records_) {
    if (r.phase == phase) total += r.bits;
  }
  return total;
}

std::uint64_t MessageLog::bits(Phase phase, Direction direction) const {
  std::uint64_t total = 0;
  for (const MessageRecord& r : records_) {
    if (r.phase == phase && r.direction == direction) total += r.bits;
  }
  return total;
}

void MessageLog::write_csv(std::ostream& out) const {
  out << "epoch,batch,direction,node,elements,bits\n";
  for (const MessageRecord& r : records_) {
    out << r.epoch << ',' << r.batch << ',' << to_string(r.direction) << ','
        << r.node << ',' << r.elements << ',' << r.bits << '\n';
  }
}

Channel::Channel(MessageLog& log, int s_bits, Quantizer quantizer)
    : log_(&log), s_bits_(s_bits), quantizer_(quantizer) {
  if (s_bits <= 0) throw ValidationError("s_bits must be positive");
}

void Channel::set_round(int epoch, int batch, Phase phase) {
  epoch_ = epoch;
  batch_ = batch;
  phase_ = phase;
}

Message Channel::send(MessageKind kind, int node, const Tensor& payload) {
  const std::uint64_t elements = payload.size();
  const std::uint64_t bits =
      elements * static_cast<std::uint64_t>(quantizer_.element_bits(s_bits_));
  log_->append({epoch_, batch_, phase_, direction_of(kind), kind, node, elements, bits});
  return Message{kind, node, quantizer_.apply(payload), bits};
}

void Channel::send_count(MessageKind kind, int node, std::uint64_t elements) {
  const std::uint64_t bits =
      elements * static_cast<std::uint64_t>(quantizer_.element_bits(s_bits_));
  log_->append({epoch_, batch_, phase_, direction_of(kind), kind, node, elements, bits});
}

std::vector<std::string> audit_inl_log(const MessageLog& log,
                                       std::span<const std::size_t> slice_widths,
                                       std::size_t classes) {
  std::vector<std::string> issues;
  const auto& records = log.records();
  const int fusion_id = static_cast<int>(slice_widths.size()) + 1;
  const std::size_t nodes = slice_widths.size();

  auto where = [](const MessageRecord& r) {
    return "epoch " + std::to_string(r.epoch) + " batch " + std::to_string(r.batch) +
           " node " + std::to_string(r.node) + " " + std::string(to_string(r.kind));
  };

  std::size_t i = 0;
  while (i < records.size()) {
    const MessageRecord& head = records[i];
    const bool training = head.phase == Phase::Training;
    const MessageKind up = training ? MessageKind::ActivationBatch
                                    : MessageKind::PredictionRequest;
    const std::size_t round_len = training ? 2 * nodes : nodes + 1;
    if (i + round_len > records.size()) {
      issues.push_back("truncated round at " + where(head));
      break;
    }
    std::uint64_t rows = 0;
    for (std::size_t k = 0; k < round_len; ++k) {
      const MessageRecord& r = records[i + k];
      if (r.epoch != head.epoch || r.batch != head.batch || r.phase != head.phase) {
        issues.push_back("round interleaved with another round at " + where(r));
        continue;
      }
      MessageKind expected_kind;
      int expected_node;
      std::size_t width;
      if (k < nodes) {
        expected_kind = up;
        expected_node = static_cast<int>(k) + 1;
        width = slice_widths[k];
      } else if (training) {
        expected_kind = MessageKind::ErrorSlice;
        expected_node = static_cast<int>(k - nodes) + 1;
        width = slice_widths[k - nodes];
      } else {
        expected_kind = MessageKind::SoftPrediction;
        expected_node = fusion_id;
        width = classes;
      }
      if (r.kind != expected_kind || r.node != expected_node) {
        issues.push_back("unexpected message " + where(r) + ", expected " +
                         std::string(to_string(expected_kind)) + " for node " +
                         std::to_string(expected_node));
        continue;
      }
      if (width == 0 || r.elements % width != 0) {
        issues.push_back("payload width mismatch at " + where(r));
        continue;
      }
      const std::uint64_t r_rows = r.elements / width;
      if (k == 0) rows = r_rows;
      if (r_rows != rows) issues.push_back("batch rows differ at " + where(r));
    }
    i += round_len;
  }
  return issues;
}

}  // namespace innet::inl
