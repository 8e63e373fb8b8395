#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace muse {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;
using EdgeId = std::uint32_t;

/// Raised for malformed dataset or binary input; carries file/line context in what().
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for out-of-vocabulary ids or names.
class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

enum class Direction : std::uint8_t { kForward = 0, kBackward = 1 };

struct Triplet {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend auto operator<=>(const Triplet&, const Triplet&) = default;
};

struct IncidentEdge {
  EdgeId edge = 0;
  Direction direction = Direction::kForward;

  friend auto operator<=>(const IncidentEdge&, const IncidentEdge&) = default;
};

/// Bijective string <-> dense id map, ids assigned in insertion order.
class Vocabulary {
 public:
  std::uint32_t add(std::string_view name);
  std::optional<std::uint32_t> find(std::string_view name) const;
  std::uint32_t at(std::string_view name) const;
  const std::string& name(std::uint32_t id) const;
  std::size_t size() const { return names_.size(); }
  std::span<const std::string> names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

enum class Bucket : std::uint8_t { kLIS, kRIS };

std::string_view to_string(Bucket b);

inline constexpr std::uint32_t kDefaultLisThreshold = 3;

struct DegreeRecord {
  EntityId entity = 0;
  std::uint32_t in_degree = 0;
  std::uint32_t out_degree = 0;
  std::uint32_t degree = 0;
  Bucket bucket = Bucket::kLIS;
};

/// Immutable triplet store. Adjacency (`incident`) is built from the train
/// split only; vocabularies cover every split.
class KnowledgeGraph {
 public:
  KnowledgeGraph(Vocabulary entities, Vocabulary relations, std::vector<Triplet> train,
                 std::vector<Triplet> valid, std::vector<Triplet> test);

  const Vocabulary& entities() const { return entities_; }
  const Vocabulary& relations() const { return relations_; }
  std::size_t num_entities() const { return entities_.size(); }
  std::size_t num_relations() const { return relations_.size(); }

  std::span<const Triplet> train() const { return train_; }
  std::span<const Triplet> valid() const { return valid_; }
  std::span<const Triplet> test() const { return test_; }

  const Triplet& edge(EdgeId e) const;

  /// All train edges touching `v`, ascending edge-id; a self-loop appears
  /// twice (forward then backward).
  std::span<const IncidentEdge> incident(EntityId v) const;

  /// `incident(v)` minus every entry for `exclude`.
  std::vector<IncidentEdge> incident_edges(EntityId v,
                                           std::optional<EdgeId> exclude = std::nullopt) const;

  DegreeRecord degree(EntityId v, std::uint32_t lis_threshold = kDefaultLisThreshold) const;

  /// First train edge equal to `t`, if any.
  std::optional<EdgeId> find_train_edge(const Triplet& t) const;

  /// Endpoint reached by traversing `e` in direction `dir`.
  EntityId other_end(EdgeId e, Direction dir) const {
    const Triplet& t = train_[e];
    return dir == Direction::kForward ? t.tail : t.head;
  }

  void check_entity(EntityId v) const;

 private:
  Vocabulary entities_;
  Vocabulary relations_;
  std::vector<Triplet> train_;
  std::vector<Triplet> valid_;
  std::vector<Triplet> test_;
  // CSR adjacency over train edges.
  std::vector<std::uint32_t> offsets_;
  std::vector<IncidentEdge> incident_;
  std::map<Triplet, EdgeId> first_edge_;
};

/// Parse one split in `head<TAB>relation<TAB>tail` form, growing the vocabularies.
/// `source` names the input in error messages.
std::vector<Triplet> parse_triplets(std::istream& in, std::string_view source,
                                    Vocabulary& entities, Vocabulary& relations);

/// Loads `train.txt`, `valid.txt` and `test.txt` from `dir`.
KnowledgeGraph load_dataset(const std::filesystem::path& dir);

void write_triplets(std::ostream& out, const KnowledgeGraph& g, std::span<const Triplet> split);

struct DatasetStats {
  std::size_t entities = 0;
  std::size_t relations = 0;
  std::size_t train = 0;
  std::size_t valid = 0;
  std::size_t test = 0;
  double degree_mean = 0.0;
  double degree_variance = 0.0;  // population variance over all entities
  double lis_fraction = 0.0;
  std::uint32_t lis_threshold = kDefaultLisThreshold;
};

DatasetStats compute_stats(const KnowledgeGraph& g,
                           std::uint32_t lis_threshold = kDefaultLisThreshold);

}  // namespace muse
