#include "innet/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "innet/errors.hpp"

namespace innet::nn {

namespace {

constexpr std::size_t kMagicLength = sizeof(kCheckpointMagic) - 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> bytes;
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes.data(), bytes.size());
}

void put_f64(std::ostream& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  std::array<char, 8> bytes;
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes.data(), bytes.size());
}

std::uint64_t get_le(std::istream& in, int width) {
  std::array<unsigned char, 8> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), width);
  if (in.gcount() != width) throw ValidationError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Network& net) {
  out.write(kCheckpointMagic, kMagicLength);
  for (const DenseLayer& layer : net.layers()) {
    put_u32(out, static_cast<std::uint32_t>(layer.fan_in()));
    put_u32(out, static_cast<std::uint32_t>(layer.fan_out()));
    put_u32(out, static_cast<std::uint32_t>(layer.activation));
    for (double w : layer.weights.data()) put_f64(out, w);
    for (double b : layer.biases.data()) put_f64(out, b);
  }
}

Network read_checkpoint(std::istream& in) {
  std::array<char, kMagicLength> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) ||
      std::memcmp(magic.data(), kCheckpointMagic, kMagicLength) != 0) {
    throw ValidationError("not an INNET1 checkpoint");
  }
  std::vector<DenseLayer> layers;
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto fan_in = static_cast<std::size_t>(get_le(in, 4));
    const auto fan_out = static_cast<std::size_t>(get_le(in, 4));
    const auto tag = static_cast<std::uint32_t>(get_le(in, 4));
    if (tag > static_cast<std::uint32_t>(Activation::Softmax)) {
      throw ValidationError("checkpoint has unknown activation tag " +
                            std::to_string(tag));
    }
    DenseLayer layer = DenseLayer::zeros(fan_in, fan_out, static_cast<Activation>(tag));
    for (double& w : layer.weights.data()) w = std::bit_cast<double>(get_le(in, 8));
    for (double& b : layer.biases.data()) b = std::bit_cast<double>(get_le(in, 8));
    layers.push_back(std::move(layer));
  }
  return Network(std::move(layers));
}

void save_checkpoint(const std::filesystem::path& path, const Network& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_checkpoint(out, net);
}

Network load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read_checkpoint(in);
}

}  // namespace innet::nn
