#pragma once

#include <filesystem>
#include <iosfwd>

#include "innet/nn.hpp"

namespace innet::nn {

// Binary network checkpoint:
//   "INNET1"
//   per layer, until end of stream:
//     u32 fan_in, u32 fan_out, u32 activation tag,
//     f64 weights[fan_out * fan_in] (row-major), f64 biases[fan_out]
// All integers and floats little-endian.
inline constexpr char kCheckpointMagic[] = "INNET1";

void write_checkpoint(std::ostream& out, const Network& net);
Network read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Network& net);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace innet::nn
