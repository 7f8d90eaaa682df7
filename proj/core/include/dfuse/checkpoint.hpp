#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "dfuse/encoder.hpp"
#include "dfuse/objective.hpp"

namespace dfuse {

// Binary, little-endian:
//   "DFCK0001"
//   u64 input_dim_video, input_dim_text, hidden_dim, embed_dim, n_frames, seed
//   f64 sigma, f64 lambda, u8 distill_on_labeled
//   u32 tensor count; per tensor: u32 name length, name, u32 rank, u64 dims[rank]
//   u64 value count; f64 values[count]
//   u64 step; f64 val_loss
//   u32 CRC-32 of the value bytes
inline constexpr std::string_view kCheckpointMagic = "DFCK0001";

struct Checkpoint {
  EncoderConfig enc;
  LossConfig loss;
  ParamVector params;
  std::uint64_t step = 0;
  double val_loss = 0.0;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
// Throws CheckpointMagicError, CheckpointLayoutError, CheckpointChecksumError,
// or CheckpointError for truncated/trailing bytes.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dfuse
