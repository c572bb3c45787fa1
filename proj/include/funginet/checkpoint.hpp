#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "funginet/graph.hpp"

namespace funginet {

// Binary layout (all integers little-endian):
//   magic "FGNT", version byte 0x01,
//   u32 tensor count,
//   per tensor: u32 name length, UTF-8 name, u8 dtype (0=float32, 1=float64),
//               u8 rank, rank x u64 extents, raw row-major values,
//   u32 provenance length, provenance UTF-8 JSON
//     {"architecture": ..., "num_classes": ..., "seed": ...}.
// No timestamps anywhere: two saves of one model are byte-identical.

struct CheckpointProvenance {
  std::string architecture = "custom";
  int num_classes = 0;
  std::uint64_t seed = 0;
};

struct LoadedCheckpoint {
  std::vector<std::pair<std::string, Tensor>> tensors;
  CheckpointProvenance provenance;
};

// Writes every model parameter (running statistics included) in registration
// order. Atomic: temp file + rename. Non-finite parameter values are an
// error.
void save_checkpoint(const ModelGraph& model, const std::string& path);

// Validates magic, version and length consistency before returning.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace funginet
