#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "muse/kg.hpp"

namespace muse {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class EmbeddingSource : std::uint8_t { kFile, kFallback };

/// Deterministic stand-in for a description embedding: a SplitMix64 stream
/// seeded from FNV-1a(name) and `seed`, drawn uniform in [-1, 1) and
/// normalized to unit L2 norm.
Vec fallback_embedding(std::string_view name, std::size_t dim, std::uint64_t seed);

/// One record of a `MUSEEMB1` file.
struct EmbeddingRecord {
  std::string name;
  std::vector<float> values;
};

inline constexpr char kEmbeddingMagic[8] = {'M', 'U', 'S', 'E', 'E', 'M', 'B', '1'};

/// Reads and validates a `MUSEEMB1` file without resolving names.
std::vector<EmbeddingRecord> read_embedding_file(const std::filesystem::path& path,
                                                 std::uint32_t* dim_out = nullptr);

/// Writes a `MUSEEMB1` file. All records must share one dimension.
void write_embedding_file(const std::filesystem::path& path, std::uint32_t dim,
                          std::span<const EmbeddingRecord> records);

/// Per-entity prior vectors. Every graph entity resolves: entities missing
/// from the source file get `fallback_embedding(name, dim, fallback_seed)`.
class EmbeddingStore {
 public:
  /// Pure fallback store over every entity of `g`.
  static EmbeddingStore fallback(const KnowledgeGraph& g, std::size_t dim,
                                 std::uint64_t seed = 0);

  std::size_t dim() const { return dim_; }
  EmbeddingSource source() const { return source_; }
  std::size_t size() const { return vectors_.size(); }

  const Vec& vector(EntityId v) const;
  bool from_file(EntityId v) const { return v < from_file_.size() && from_file_[v]; }
  std::size_t file_backed_count() const;

 private:
  friend EmbeddingStore load_embeddings(const std::filesystem::path&, const KnowledgeGraph&,
                                        std::uint64_t);
  EmbeddingStore(std::size_t dim, EmbeddingSource source) : dim_(dim), source_(source) {}

  std::size_t dim_;
  EmbeddingSource source_;
  std::vector<Vec> vectors_;
  std::vector<bool> from_file_;
};

/// Loads a `MUSEEMB1` file. Names absent from `g` are an error naming the entity.
EmbeddingStore load_embeddings(const std::filesystem::path& path, const KnowledgeGraph& g,
                               std::uint64_t fallback_seed = 0);

struct PriorBranchParams {
  Mat w1;  // (2*prior_dim) x hidden
  Vec b1;  // hidden
  Mat w2;  // hidden x |R|
  Vec b2;  // |R|
};

struct PriorTrace {
  Vec input;  // concat(emb(h), emb(t))
  Vec pre;    // w1^T input + b1
  Vec act;    // relu(pre)
};

/// Prior-knowledge logits: a two-layer ReLU MLP over concat(emb(h), emb(t)).
Vec prior_logits(EntityId h, EntityId t, const EmbeddingStore& store, const PriorBranchParams& p,
                 PriorTrace* trace = nullptr);

/// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(logits).
void prior_backward(const PriorTrace& trace, const Vec& dlogits, const PriorBranchParams& p,
                    PriorBranchParams& grad);

}  // namespace muse
