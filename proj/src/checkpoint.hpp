#pragma once

#include <cstdint>
#include <string>

#include "param_store.hpp"

namespace mdbert {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

// Binary layout: magic "MDB1", format version u32, config length u32 +
// UTF-8 config text, then per parameter (store order): name length u32,
// name bytes, rank u32, dims u64, data as little-endian f32.
std::string serialize_checkpoint(const ParamStore<float>& params, const std::string& config_text);
void save_checkpoint(const std::string& path, const ParamStore<float>& params, const std::string& config_text);

struct LoadedCheckpoint {
  std::string config_text;
  ParamStore<float> params;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace mdbert
