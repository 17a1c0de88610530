#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bmssl/params.hpp"
#include "bmssl/run_config.hpp"

namespace bmssl {

struct Checkpoint {
  ParamSet params;
  RunConfig config;
  std::size_t meta_step = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// "BMSL", u32 version, u32 tensor count, tensors (u16 name length, name,
// u8 rank, u64 dims, f64 data), then the config text with a meta_step line
// appended, prefixed by its u32 byte length.
std::vector<unsigned char> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::vector<unsigned char> bytes, const std::string& context = "checkpoint");

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace bmssl
