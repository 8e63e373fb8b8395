#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "muse/kg.hpp"
#include "muse/prior.hpp"

namespace muse {

struct PathStep {
  RelationId relation = 0;
  Direction direction = Direction::kForward;

  friend auto operator<=>(const PathStep&, const PathStep&) = default;
};

/// A relation/direction sequence; entities along the walk are not recorded.
using RelationalPath = std::vector<PathStep>;

std::string describe(const RelationalPath& path, const Vocabulary& relations);

/// Every walk from `h` to `t` with 1..max_len steps over train edges, each
/// edge traversable in either direction, no edge-id used twice, `exclude`
/// never used. Sorted lexicographically by step sequence; a step sequence
/// reached through different edges appears once per walk.
std::vector<RelationalPath> enumerate_paths(const KnowledgeGraph& g, EntityId h, EntityId t,
                                            std::size_t max_len,
                                            std::optional<EdgeId> exclude = std::nullopt);

/// Path-type index. Id 0 is the reserved UNK row; known types are 1..size().
class PathVocabulary {
 public:
  static constexpr std::size_t kUnknown = 0;

  /// Ids in first-appearance order over enumerate_paths of each train
  /// triplet, each query excluding its own edge.
  static PathVocabulary build(const KnowledgeGraph& g, std::size_t max_len);

  std::size_t add(const RelationalPath& path);
  std::size_t id(const RelationalPath& path) const;
  const RelationalPath& path(std::size_t id) const;

  /// Number of known path types (UNK not counted).
  std::size_t size() const { return paths_.size(); }
  std::size_t rows() const { return paths_.size() + 1; }
  std::size_t max_len() const { return max_len_; }

 private:
  std::size_t max_len_ = 0;
  std::vector<RelationalPath> paths_;
  std::map<RelationalPath, std::size_t> ids_;
};

struct PathBranchParams {
  Mat path_embed;  // (vocab.size() + 1) x hidden, row 0 = UNK
  Mat out_proj;    // hidden x |R|
  Vec out_bias;    // |R|
};

struct PathTrace {
  std::vector<double> weights;  // one per path instance
  Vec rep;
};

/// Attention over path instances: weights = softmax(path_embed[id] . s_ht),
/// result = sum of weighted rows. No paths gives the zero vector.
Vec aggregate_paths(std::span<const std::size_t> path_ids, const Vec& s_ht,
                    const PathBranchParams& p, PathTrace* trace = nullptr);

Vec aggregate_paths(std::span<const RelationalPath> paths, const Vec& s_ht,
                    const PathVocabulary& vocab, const PathBranchParams& p);

Vec path_logits(const Vec& rep, const PathBranchParams& p);

/// Gradient of the path branch given d(loss)/d(logits). Accumulates into
/// `grad` and returns d(loss)/d(s_ht).
Vec path_backward(std::span<const std::size_t> path_ids, const Vec& s_ht, const PathTrace& trace,
                  const Vec& dlogits, const PathBranchParams& p, PathBranchParams& grad);

}  // namespace muse
