#pragma once

#include <filesystem>
#include <string>

#include "muse/config.hpp"
#include "muse/model.hpp"
#include "muse/params.hpp"

namespace muse {

inline constexpr char kCheckpointMagic[9] = {'M', 'U', 'S', 'E', 'C', 'K', 'P', 'T', '1'};

/// Where a model's inputs came from; echoed into the checkpoint header.
struct CheckpointMeta {
  std::string dataset;
  std::string embeddings;  // empty = fallback embeddings
};

struct Checkpoint {
  TrainConfig config;
  CheckpointMeta meta;
  ModelShape shape;
  ModelParams params;
  std::string header_json;
};

/// Layout (little-endian): "MUSECKPT1", u32 header length, canonical JSON
/// header {config, dataset, embeddings, shape}, then one record per tensor
/// until EOF: u32 name length, name, u32 rank, rank x u32 dims, f32 data in
/// row-major order.
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const CheckpointMeta& meta);

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace muse
