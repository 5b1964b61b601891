#pragma once

#include "stec/params.hpp"

#include <cstdint>
#include <string>

namespace stec::model {

// Single-file checkpoint: versioned header, JSON manifest (names, shapes,
// flags, config hash, step, blob checksum), then one flat little-endian
// 64-bit blob covering params, EMA shadows and optimizer buffers.
struct Checkpoint {
  ParamStore store;
  std::uint64_t config_hash = 0;
  long step = 0;
  std::string config_text;  // canonical run configuration, when recorded
};

void save_checkpoint(const ParamStore& store, const std::string& path,
                     std::uint64_t config_hash, long step,
                     const std::string& config_text = "");
Checkpoint load_checkpoint(const std::string& path);

}  // namespace stec::model
