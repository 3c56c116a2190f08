// Checkpoint format: magic "DBIPCKPT", u32 version, a JSON header (network
// config, RNG algorithm id, step/epoch counters, Adam flag, loss kind), a
// parameter table in the network's fixed parameter order (name, 4-dim shape,
// little-endian f32 data), then optional Adam moments in the same order.
// Round trips are bit-exact; config or version mismatches are hard errors.
#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "blindpaint/adam.hpp"
#include "blindpaint/loss.hpp"
#include "blindpaint/network.hpp"

namespace blindpaint::train {

struct CheckpointMeta {
  model::NetworkConfig config;
  std::string rng_algorithm = Rng::kAlgorithmId;
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  bool has_adam = false;
  nn::LossKind loss = nn::LossKind::L1;
};

void save_checkpoint(const std::string& path, model::Network<float>& net,
                     const nn::AdamState<float>* adam, CheckpointMeta meta);

// Loads into an existing network; the stored config must match exactly.
CheckpointMeta load_checkpoint(const std::string& path, model::Network<float>& net,
                               nn::AdamState<float>* adam = nullptr);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  model::Network<float> network;
};

// Builds the network described by the stored config, then loads it.
LoadedCheckpoint open_checkpoint(const std::string& path);

}  // namespace blindpaint::train
