#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pdt/tensor.hpp"
#include "pdt/training.hpp"

namespace pdt {

// Training-state archive, little-endian throughout:
//   "PDTC" magic, u32 format version,
//   u32 record count, records of (u16 name length, UTF-8 name, u8 rank,
//   u32 per dimension, raw IEEE-754 binary32 data),
//   u32 metadata length, UTF-8 metadata text of "key\tvalue" lines.
// Numeric metadata uses enough digits to round-trip exactly, so
// save -> load -> save reproduces the file byte for byte.
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[5] = "PDTC";
inline constexpr char kRngAlgorithmId[] = "splitmix64-counter";

// Raw file view: named tensors in file order plus the metadata text.
struct CheckpointData {
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::string metadata;
};

void write_checkpoint_file(const std::string& path,
                           const CheckpointData& data);
CheckpointData read_checkpoint_file(const std::string& path);

// Metadata lines in file order.
std::vector<std::pair<std::string, std::string>> parse_metadata(
    const std::string& text);

// Persists everything a resumed run needs: the four networks' parameters
// and normalization statistics, optimizer state, sampling-stream positions,
// the configuration echo, and the epoch counter.
void save_training_state(const std::string& path, TrainingState& st);

// Rebuilds a training state from an archive. Every tensor the state
// declares must be present with its declared shape, and vice versa.
TrainingState load_training_state(const std::string& path);

}  // namespace pdt
