#include "muse/prior.hpp"

#include <fstream>
#include <unordered_set>

#include "binary_io.hpp"
#include "muse/random.hpp"

namespace muse {

namespace {

constexpr std::uint32_t kMaxNameLen = 1u << 20;
constexpr std::uint32_t kMaxDim = 1u << 16;

}  // namespace

Vec fallback_embedding(std::string_view name, std::size_t dim, std::uint64_t seed) {
  SplitMix64 rng(mix_seed(fnv1a(name), seed));
  Vec v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(-1.0, 1.0);
  double norm = v.norm();
  // All-zero draw is impossible in practice; guard anyway so the norm invariant holds.
  if (norm == 0.0) {
    v.setZero();
    v[0] = 1.0;
    norm = 1.0;
  }
  return v / norm;
}

std::vector<EmbeddingRecord> read_embedding_file(const std::filesystem::path& path,
                                                 std::uint32_t* dim_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  detail::Reader r(in, path.string());

  char magic[8];
  r.read(magic, 8, "magic");
  if (std::memcmp(magic, kEmbeddingMagic, 8) != 0) {
    throw ParseError(path.string() + ": bad magic (expected MUSEEMB1)");
  }
  const auto count = r.u32("count");
  const auto dim = r.u32("dim");
  if (dim == 0 || dim > kMaxDim) {
    throw ParseError(path.string() + ": invalid dim " + std::to_string(dim));
  }
  std::vector<EmbeddingRecord> records;
  records.reserve(std::min<std::uint32_t>(count, 1u << 20));
  std::unordered_set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.u32("name length");
    if (len > kMaxNameLen) {
      throw ParseError(path.string() + ": record " + std::to_string(i) + " name length " +
                       std::to_string(len) + " exceeds limit");
    }
    EmbeddingRecord rec;
    rec.name = r.bytes(len, "name");
    rec.values.resize(dim);
    for (auto& x : rec.values) x = r.f32("vector");
    if (!seen.insert(rec.name).second) {
      throw ParseError(path.string() + ": duplicate entity '" + rec.name + "'");
    }
    records.push_back(std::move(rec));
  }
  if (!r.at_eof()) throw ParseError(path.string() + ": trailing bytes after " +
                                    std::to_string(count) + " records");
  if (dim_out) *dim_out = dim;
  return records;
}

void write_embedding_file(const std::filesystem::path& path, std::uint32_t dim,
                          std::span<const EmbeddingRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kEmbeddingMagic, 8);
  detail::write_u32(out, static_cast<std::uint32_t>(records.size()));
  detail::write_u32(out, dim);
  for (const auto& rec : records) {
    if (rec.values.size() != dim) {
      throw std::invalid_argument("embedding '" + rec.name + "' has length " +
                                  std::to_string(rec.values.size()) + ", expected " +
                                  std::to_string(dim));
    }
    detail::write_u32(out, static_cast<std::uint32_t>(rec.name.size()));
    detail::write_bytes(out, rec.name);
    for (float x : rec.values) detail::write_f32(out, x);
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

EmbeddingStore EmbeddingStore::fallback(const KnowledgeGraph& g, std::size_t dim,
                                        std::uint64_t seed) {
  if (dim == 0) throw std::invalid_argument("embedding dim must be positive");
  EmbeddingStore s(dim, EmbeddingSource::kFallback);
  s.vectors_.reserve(g.num_entities());
  for (EntityId v = 0; v < g.num_entities(); ++v) {
    s.vectors_.push_back(fallback_embedding(g.entities().name(v), dim, seed));
  }
  s.from_file_.assign(g.num_entities(), false);
  return s;
}

const Vec& EmbeddingStore::vector(EntityId v) const {
  if (v >= vectors_.size()) {
    throw LookupError("no embedding for entity id " + std::to_string(v));
  }
  return vectors_[v];
}

std::size_t EmbeddingStore::file_backed_count() const {
  std::size_t n = 0;
  for (bool b : from_file_) n += b ? 1 : 0;
  return n;
}

EmbeddingStore load_embeddings(const std::filesystem::path& path, const KnowledgeGraph& g,
                               std::uint64_t fallback_seed) {
  std::uint32_t dim = 0;
  auto records = read_embedding_file(path, &dim);
  EmbeddingStore s(dim, EmbeddingSource::kFile);
  s.vectors_.resize(g.num_entities());
  s.from_file_.assign(g.num_entities(), false);
  for (auto& rec : records) {
    auto id = g.entities().find(rec.name);
    if (!id) throw LookupError(path.string() + ": unknown entity '" + rec.name + "'");
    Vec v(dim);
    for (std::uint32_t i = 0; i < dim; ++i) v[i] = static_cast<double>(rec.values[i]);
    s.vectors_[*id] = std::move(v);
    s.from_file_[*id] = true;
  }
  for (EntityId v = 0; v < g.num_entities(); ++v) {
    if (!s.from_file_[v]) s.vectors_[v] = fallback_embedding(g.entities().name(v), dim, fallback_seed);
  }
  return s;
}

Vec prior_logits(EntityId h, EntityId t, const EmbeddingStore& store, const PriorBranchParams& p,
                 PriorTrace* trace) {
  const auto d = static_cast<Eigen::Index>(store.dim());
  if (p.w1.rows() != 2 * d || p.w1.cols() != p.b1.size() || p.w2.rows() != p.b1.size() ||
      p.w2.cols() != p.b2.size()) {
    throw std::invalid_argument("prior branch: parameter shapes inconsistent with embedding dim " +
                                std::to_string(d));
  }
  Vec input(2 * d);
  input << store.vector(h), store.vector(t);
  Vec pre = p.w1.transpose() * input + p.b1;
  Vec act = pre.cwiseMax(0.0);
  Vec logits = p.w2.transpose() * act + p.b2;
  if (trace) {
    trace->input = std::move(input);
    trace->pre = std::move(pre);
    trace->act = std::move(act);
  }
  return logits;
}

void prior_backward(const PriorTrace& trace, const Vec& dlogits, const PriorBranchParams& p,
                    PriorBranchParams& grad) {
  grad.w2.noalias() += trace.act * dlogits.transpose();
  grad.b2 += dlogits;
  Vec dpre = (p.w2 * dlogits).cwiseProduct((trace.pre.array() > 0.0).cast<double>().matrix());
  grad.w1.noalias() += trace.input * dpre.transpose();
  grad.b1 += dpre;
}

}  // namespace muse
