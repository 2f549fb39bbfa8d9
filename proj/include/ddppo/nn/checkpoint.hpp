#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ddppo/nn/network.hpp"
#include "json.hpp"

namespace ddppo::nn {

// Binary layout (all integers little-endian):
//   "DDPP" | u16 version | u64 layout hash | u64 param count |
//   param count x f64 | UTF-8 JSON trailer (rest of file)
inline constexpr char kCheckpointMagic[4] = {'D', 'D', 'P', 'P'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  NetSpec spec;
  ParamVector params;
  std::int64_t train_step = 0;
  std::string rng_state;
};

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);

// Throws ConfigError on malformed input, or when `expected` is given and its
// layout hash differs from the stored one.
Checkpoint decode_checkpoint(std::span<const unsigned char> bytes,
                             const std::optional<NetSpec>& expected = std::nullopt);

void to_json(nlohmann::json& j, const NetSpec& spec);
void from_json(const nlohmann::json& j, NetSpec& spec);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<NetSpec>& expected = std::nullopt);

}  // namespace ddppo::nn
