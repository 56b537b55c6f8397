#pragma once

#include <string>

#include "isoprune/nn.hpp"

namespace isoprune {

// Binary checkpoint format, little-endian throughout:
//   magic "ISOPRUNE1" (9 bytes)
//   payload:
//     u32 arch-name length, arch-name bytes
//     u32 tensor count
//     per tensor: u32 name length, name bytes, u32 rank, rank x u32 dims,
//                 values as 64-bit IEEE doubles
//   u64 FNV-1a checksum of the payload
// Weight tensors are named w0, w1, ... in parameterized-layer order. Loading
// rebuilds the layer structure from the architecture pattern with the stored
// shapes, so pruned networks round-trip with their reduced dimensions.
void save_checkpoint(const Network& net, const std::string& path);
Network load_checkpoint(const std::string& path);

}  // namespace isoprune
