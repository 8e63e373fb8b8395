#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "muse/prior.hpp"

namespace muse {

/// Generator for a typed, compositional toy knowledge graph.
///
/// Entities carry one of `types` hidden types. Base relation `base{k}` links
/// h -> t with k = (type(h) + type(t)) mod 4, so it is recoverable from
/// entity types alone. Composite relation `comp{k}` holds for (h, t) when
/// h -base{k}-> x -base{k+1 mod 4}-> t for some x, so it is recoverable from
/// the two-step path but not from types. Entity embeddings are a per-type
/// unit vector plus uniform noise of standard deviation `embedding_noise`,
/// standing in for descriptions that mention the entity's type.
struct SyntheticOptions {
  std::size_t entities = 200;
  std::size_t types = 4;
  std::size_t base_out_degree = 2;
  double valid_fraction = 0.1;
  double test_fraction = 0.1;
  std::size_t embedding_dim = 16;
  double embedding_noise = 0.1;
  std::uint64_t seed = 1;
};

using NamedTriplet = std::array<std::string, 3>;

struct SyntheticDataset {
  std::vector<NamedTriplet> train;
  std::vector<NamedTriplet> valid;
  std::vector<NamedTriplet> test;
  std::vector<EmbeddingRecord> embeddings;
  std::vector<std::size_t> entity_type;
};

inline constexpr std::size_t kSyntheticRelations = 8;

SyntheticDataset generate_synthetic(const SyntheticOptions& opts);

/// Writes train.txt, valid.txt, test.txt and embeddings.bin into `dir`.
void write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir);

}  // namespace muse
