#pragma once

#include <filesystem>
#include <string>

#include "muse/kg.hpp"
#include "muse/prior.hpp"
#include "muse/synthetic.hpp"

namespace muse::testing {

/// Writes a synthetic dataset under the temp dir and returns its directory.
inline std::filesystem::path synthetic_dir(const SyntheticOptions& opts, const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("muse_syn_" + tag + "_" + std::to_string(opts.seed));
  write_synthetic(generate_synthetic(opts), dir);
  return dir;
}

struct LoadedDataset {
  KnowledgeGraph graph;
  EmbeddingStore store;
};

inline LoadedDataset load_synthetic(const SyntheticOptions& opts, const std::string& tag) {
  const auto dir = synthetic_dir(opts, tag);
  auto g = load_dataset(dir);
  auto store = load_embeddings(dir / "embeddings.bin", g);
  return {std::move(g), std::move(store)};
}

}  // namespace muse::testing
