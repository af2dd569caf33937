#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "innet/tensor.hpp"

namespace innet::inl {

enum class MessageKind {
  ActivationBatch,    // encoder -> fusion, training forward
  ErrorSlice,         // fusion -> encoder, training backward
  PredictionRequest,  // encoder -> fusion, inference
  SoftPrediction,     // fusion output distribution, inference
  ModelDownload,      // server -> client parameters (FL)
  ModelUpload,        // client -> server parameters (FL)
  WeightHandoff,      // client -> next client weights (SL)
};

enum class Direction { Forward, Backward };
enum class Phase { Training, Inference };

std::string_view to_string(MessageKind kind);
std::string_view to_string(Direction direction);
Direction direction_of(MessageKind kind);

// Link payload encoding. Off keeps values exact and charges s_bits per
// element; UniformFixedWidth clamps to [-range, range], rounds to 2^bits
// levels and charges bits per element.
struct Quantizer {
  enum class Mode { Off, UniformFixedWidth };

  Mode mode = Mode::Off;
  int bits = 0;
  double range = 0.0;

  static Quantizer off() { return {}; }
  static Quantizer uniform(int bits, double range);

  Tensor apply(const Tensor& payload) const;
  int element_bits(int s_bits) const { return mode == Mode::Off ? s_bits : bits; }
};

struct Message {
  MessageKind kind;
  int node;  // 1-based encoder id; J + 1 for the fusion node
  Tensor payload;
  std::uint64_t payload_bits;
};

struct MessageRecord {
  int epoch = 0;
  int batch = 0;
  Phase phase = Phase::Training;
  Direction direction = Direction::Forward;
  MessageKind kind = MessageKind::ActivationBatch;
  int node = 0;
  std::uint64_t elements = 0;
  std::uint64_t bits = 0;
};

// Append-only record of every message, in send order.
class MessageLog {
 public:
  void append(const MessageRecord& record) { records_.push_back(record); }
  const std::vector<MessageRecord>& records() const noexcept { return records_; }
  bool empty() const noexcept { return records_.empty(); }

  std::uint64_t total_bits() const;
  std::uint64_t bits(Phase phase) const;
  std::uint64_t bits(Phase phase, Direction direction) const;

  // epoch,batch,direction,node,elements,bits
  void write_csv(std::ostream& out) const;

 private:
  std::vector<MessageRecord> records_;
};

// Sum of payload bits.
std::uint64_t meter(std::span<const MessageRecord> records);

// Simulated error-free link: quantizes the payload, meters it and returns
// the delivered message.
class Channel {
 public:
  Channel(MessageLog& log, int s_bits, Quantizer quantizer = Quantizer::off());

  void set_round(int epoch, int batch, Phase phase);
  Message send(MessageKind kind, int node, const Tensor& payload);
  // Meters a transfer of `elements` values without materializing a payload.
  void send_count(MessageKind kind, int node, std::uint64_t elements);

  int s_bits() const noexcept { return s_bits_; }
  const Quantizer& quantizer() const noexcept { return quantizer_; }
  const MessageLog& log() const noexcept { return *log_; }

 private:
  MessageLog* log_;
  int s_bits_;
  Quantizer quantizer_;
  int epoch_ = 0;
  int batch_ = 0;
  Phase phase_ = Phase::Training;
};

// Checks an INL message log against the exchange contract: per training
// round, one ActivationBatch per node in id order followed by one ErrorSlice
// per node in id order, each of width slice_widths[j]; per inference request,
// PredictionRequests in id order then one SoftPrediction from node J + 1.
// Returns one line per violation.
std::vector<std::string> audit_inl_log(const MessageLog& log,
                                       std::span<const std::size_t> slice_widths,
                                       std::size_t classes);

}  // namespace innet::inl
