#include "muse/kg.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace muse {

std::uint32_t Vocabulary::add(std::string_view name) {
  auto it = ids_.find(std::string(name));
  if (it != ids_.end()) return it->second;
  const auto id = static_cast<std::uint32_t>(names_.size());
  names_.emplace_back(name);
  ids_.emplace(names_.back(), id);
  return id;
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view name) const {
  auto it = ids_.find(std::string(name));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t Vocabulary::at(std::string_view name) const {
  if (auto id = find(name)) return *id;
  throw LookupError("unknown name '" + std::string(name) + "'");
}

const std::string& Vocabulary::name(std::uint32_t id) const {
  if (id >= names_.size()) {
    throw LookupError("id " + std::to_string(id) + " out of range (size " +
                      std::to_string(names_.size()) + ")");
  }
  return names_[id];
}

std::string_view to_string(Bucket b) { return b == Bucket::kLIS ? "LIS" : "RIS"; }

KnowledgeGraph::KnowledgeGraph(Vocabulary entities, Vocabulary relations,
                               std::vector<Triplet> train, std::vector<Triplet> valid,
                               std::vector<Triplet> test)
    : entities_(std::move(entities)),
      relations_(std::move(relations)),
      train_(std::move(train)),
      valid_(std::move(valid)),
      test_(std::move(test)) {
  const auto n = entities_.size();
  auto check = [&](const Triplet& t, std::string_view split) {
    if (t.head >= n || t.tail >= n || t.relation >= relations_.size()) {
      throw LookupError("triplet id out of vocabulary bounds in " + std::string(split) + " split");
    }
  };
  for (const auto& t : train_) check(t, "train");
  for (const auto& t : valid_) check(t, "valid");
  for (const auto& t : test_) check(t, "test");

  std::vector<std::uint32_t> counts(n, 0);
  for (const auto& t : train_) {
    ++counts[t.head];
    ++counts[t.tail];
  }
  offsets_.assign(n + 1, 0);
  for (std::size_t v = 0; v < n; ++v) offsets_[v + 1] = offsets_[v] + counts[v];
  incident_.resize(offsets_[n]);
  std::vector<std::uint32_t> cursor(offsets_.begin(), offsets_.end() - 1);
  for (EdgeId e = 0; e < train_.size(); ++e) {
    const auto& t = train_[e];
    incident_[cursor[t.head]++] = {e, Direction::kForward};
    incident_[cursor[t.tail]++] = {e, Direction::kBackward};
    first_edge_.emplace(t, e);
  }
}

const Triplet& KnowledgeGraph::edge(EdgeId e) const {
  if (e >= train_.size()) throw LookupError("edge id " + std::to_string(e) + " out of range");
  return train_[e];
}

void KnowledgeGraph::check_entity(EntityId v) const {
  if (v >= entities_.size()) {
    throw LookupError("entity id " + std::to_string(v) + " out of range (size " +
                      std::to_string(entities_.size()) + ")");
  }
}

std::span<const IncidentEdge> KnowledgeGraph::incident(EntityId v) const {
  check_entity(v);
  return {incident_.data() + offsets_[v], incident_.data() + offsets_[v + 1]};
}

std::vector<IncidentEdge> KnowledgeGraph::incident_edges(EntityId v,
                                                         std::optional<EdgeId> exclude) const {
  std::vector<IncidentEdge> out;
  for (const auto& ie : incident(v)) {
    if (exclude && ie.edge == *exclude) continue;
    out.push_back(ie);
  }
  return out;
}

DegreeRecord KnowledgeGraph::degree(EntityId v, std::uint32_t lis_threshold) const {
  DegreeRecord rec;
  rec.entity = v;
  for (const auto& ie : incident(v)) {
    if (ie.direction == Direction::kForward) {
      ++rec.out_degree;
    } else {
      ++rec.in_degree;
    }
  }
  rec.degree = rec.in_degree + rec.out_degree;
  rec.bucket = rec.degree < lis_threshold ? Bucket::kLIS : Bucket::kRIS;
  return rec;
}

std::optional<EdgeId> KnowledgeGraph::find_train_edge(const Triplet& t) const {
  auto it = first_edge_.find(t);
  if (it == first_edge_.end()) return std::nullopt;
  return it->second;
}

std::vector<Triplet> parse_triplets(std::istream& in, std::string_view source,
                                    Vocabulary& entities, Vocabulary& relations) {
  std::vector<Triplet> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string_view rest(line);
    std::string_view fields[3];
    std::size_t nfields = 0;
    bool too_many = false;
    while (true) {
      const auto tab = rest.find('\t');
      if (nfields == 3) {
        too_many = true;
        break;
      }
      fields[nfields++] = rest.substr(0, tab);
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    if (too_many || nfields != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty()) {
      std::ostringstream msg;
      msg << source << ":" << line_no << ": expected 3 tab-separated fields";
      throw ParseError(msg.str());
    }
    Triplet t;
    t.head = entities.add(fields[0]);
    t.relation = relations.add(fields[1]);
    t.tail = entities.add(fields[2]);
    out.push_back(t);
  }
  return out;
}

namespace {

std::vector<Triplet> parse_file(const std::filesystem::path& path, Vocabulary& entities,
                                Vocabulary& relations) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  return parse_triplets(in, path.string(), entities, relations);
}

}  // namespace

KnowledgeGraph load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw ParseError("dataset directory not found: " + dir.string());
  }
  Vocabulary entities;
  Vocabulary relations;
  auto train = parse_file(dir / "train.txt", entities, relations);
  if (train.empty()) throw ParseError((dir / "train.txt").string() + ": empty train split");
  auto valid = parse_file(dir / "valid.txt", entities, relations);
  auto test = parse_file(dir / "test.txt", entities, relations);
  return KnowledgeGraph(std::move(entities), std::move(relations), std::move(train),
                        std::move(valid), std::move(test));
}

void write_triplets(std::ostream& out, const KnowledgeGraph& g, std::span<const Triplet> split) {
  for (const auto& t : split) {
    out << g.entities().name(t.head) << '\t' << g.relations().name(t.relation) << '\t'
        << g.entities().name(t.tail) << '\n';
  }
}

DatasetStats compute_stats(const KnowledgeGraph& g, std::uint32_t lis_threshold) {
  DatasetStats s;
  s.entities = g.num_entities();
  s.relations = g.num_relations();
  s.train = g.train().size();
  s.valid = g.valid().size();
  s.test = g.test().size();
  s.lis_threshold = lis_threshold;
  if (s.entities == 0) return s;

  double sum = 0.0;
  std::size_t lis = 0;
  for (EntityId v = 0; v < s.entities; ++v) {
    const auto rec = g.degree(v, lis_threshold);
    sum += rec.degree;
    if (rec.bucket == Bucket::kLIS) ++lis;
  }
  const double n = static_cast<double>(s.entities);
  s.degree_mean = sum / n;
  double sq = 0.0;
  for (EntityId v = 0; v < s.entities; ++v) {
    const double d = g.degree(v, lis_threshold).degree - s.degree_mean;
    sq += d * d;
  }
  s.degree_variance = sq / n;
  s.lis_fraction = static_cast<double>(lis) / n;
  return s;
}

}  // namespace muse
