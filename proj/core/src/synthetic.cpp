#include "muse/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "muse/random.hpp"

namespace muse {

namespace {

constexpr std::size_t kRuleModulus = 4;

std::string entity_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "e%03zu", i);
  return buf;
}

std::string base_name(std::size_t k) { return "base" + std::to_string(k); }
std::string comp_name(std::size_t k) { return "comp" + std::to_string(k); }

struct Fact {
  std::size_t head;
  std::size_t tail;
  std::string relation;
  bool composite;
  // Supporting base edges (indices into the base list), composites only.
  std::vector<std::size_t> support;
};

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticOptions& opts) {
  if (opts.entities < 4 || opts.types == 0 || opts.base_out_degree == 0 ||
      opts.embedding_dim == 0) {
    throw std::invalid_argument("synthetic: degenerate options");
  }
  if (opts.valid_fraction < 0 || opts.test_fraction < 0 ||
      opts.valid_fraction + opts.test_fraction >= 1.0) {
    throw std::invalid_argument("synthetic: held-out fractions must sum below 1");
  }
  SplitMix64 rng(mix_seed(opts.seed, 0x5E7));
  const std::size_t n = opts.entities;

  SyntheticDataset out;
  out.entity_type.resize(n);
  for (auto& t : out.entity_type) t = static_cast<std::size_t>(rng.below(opts.types));

  // Base edges: each entity points at `base_out_degree` distinct others.
  std::vector<Fact> base;
  std::set<std::pair<std::size_t, std::size_t>> linked;  // ordered (h, t) pairs with any fact
  std::vector<std::vector<std::size_t>> out_edges(n);
  for (std::size_t h = 0; h < n; ++h) {
    std::size_t added = 0;
    std::size_t attempts = 0;
    while (added < opts.base_out_degree && attempts < 100 * opts.base_out_degree) {
      ++attempts;
      const auto t = static_cast<std::size_t>(rng.below(n));
      if (t == h || linked.count({h, t}) || linked.count({t, h})) continue;
      const auto k = (out.entity_type[h] + out.entity_type[t]) % kRuleModulus;
      out_edges[h].push_back(base.size());
      base.push_back({h, t, base_name(k), false, {}});
      linked.insert({h, t});
      ++added;
    }
  }

  // Composites: h -base{k}-> x -base{k+1}-> t  =>  (h, comp{k}, t).
  std::map<std::pair<std::size_t, std::size_t>, std::map<std::size_t, std::vector<std::size_t>>>
      candidates;
  for (std::size_t e1 = 0; e1 < base.size(); ++e1) {
    const auto& first = base[e1];
    const auto k = (out.entity_type[first.head] + out.entity_type[first.tail]) % kRuleModulus;
    for (const auto e2 : out_edges[first.tail]) {
      const auto& second = base[e2];
      const auto k2 = (out.entity_type[second.head] + out.entity_type[second.tail]) % kRuleModulus;
      if (k2 != (k + 1) % kRuleModulus || second.tail == first.head) continue;
      auto& supports = candidates[{first.head, second.tail}][k];
      supports.push_back(e1);
      supports.push_back(e2);
    }
  }
  std::vector<Fact> composite;
  for (const auto& [pair, by_rule] : candidates) {
    // One relation per ordered pair: skip pairs already linked or ambiguous.
    if (by_rule.size() != 1 || linked.count(pair) || linked.count({pair.second, pair.first})) {
      continue;
    }
    const auto& [k, support] = *by_rule.begin();
    composite.push_back({pair.first, pair.second, comp_name(k), true, support});
    linked.insert(pair);
  }

  // Held-out facts: composites whose supports stay in train, then base facts
  // that no held-out composite depends on.
  const std::size_t total = base.size() + composite.size();
  const auto n_valid = static_cast<std::size_t>(std::llround(opts.valid_fraction * total));
  const auto n_test = static_cast<std::size_t>(std::llround(opts.test_fraction * total));
  const double comp_share = static_cast<double>(composite.size()) / static_cast<double>(total);
  const auto want_comp = static_cast<std::size_t>(std::llround(comp_share * (n_valid + n_test)));

  std::vector<std::size_t> comp_order(composite.size());
  for (std::size_t i = 0; i < comp_order.size(); ++i) comp_order[i] = i;
  rng.shuffle(comp_order);
  std::vector<std::size_t> held_comp(comp_order.begin(),
                                     comp_order.begin() + std::min(want_comp, comp_order.size()));
  std::vector<bool> protected_base(base.size(), false);
  for (auto c : held_comp) {
    for (auto e : composite[c].support) protected_base[e] = true;
  }
  std::vector<std::size_t> base_order;
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (!protected_base[i]) base_order.push_back(i);
  }
  rng.shuffle(base_order);
  const std::size_t want_base = std::min(n_valid + n_test - held_comp.size(), base_order.size());
  std::vector<std::size_t> held_base(base_order.begin(), base_order.begin() + want_base);

  // Interleave held-out facts, then deal them into valid / test.
  std::vector<const Fact*> held;
  for (auto c : held_comp) held.push_back(&composite[c]);
  for (auto b : held_base) held.push_back(&base[b]);
  rng.shuffle(held);
  std::set<const Fact*> held_set(held.begin(), held.end());

  auto named = [&](const Fact& f) {
    return NamedTriplet{entity_name(f.head), f.relation, entity_name(f.tail)};
  };
  std::vector<NamedTriplet> train;
  for (const auto& f : base) {
    if (!held_set.count(&f)) train.push_back(named(f));
  }
  for (const auto& f : composite) {
    if (!held_set.count(&f)) train.push_back(named(f));
  }
  SplitMix64 order_rng(mix_seed(opts.seed, 0x0D3));
  order_rng.shuffle(train);
  out.train = std::move(train);
  for (std::size_t i = 0; i < held.size(); ++i) {
    (i < n_valid ? out.valid : out.test).push_back(named(*held[i]));
  }

  // Type prototypes + noise; uniform(-a, a) with a = sqrt(3) * sigma has std sigma.
  std::vector<std::vector<double>> prototypes(opts.types, std::vector<double>(opts.embedding_dim));
  for (auto& p : prototypes) {
    double norm = 0.0;
    for (auto& x : p) {
      x = rng.uniform(-1.0, 1.0);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : p) x /= norm;
  }
  const double a = std::sqrt(3.0) * opts.embedding_noise;
  out.embeddings.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    EmbeddingRecord rec;
    rec.name = entity_name(i);
    rec.values.resize(opts.embedding_dim);
    for (std::size_t d = 0; d < opts.embedding_dim; ++d) {
      rec.values[d] = static_cast<float>(prototypes[out.entity_type[i]][d] + rng.uniform(-a, a));
    }
    out.embeddings.push_back(std::move(rec));
  }
  return out;
}

void write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto dump = [&](const char* file, const std::vector<NamedTriplet>& split) {
    std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir / file).string());
    for (const auto& t : split) out << t[0] << '\t' << t[1] << '\t' << t[2] << '\n';
  };
  dump("train.txt", data.train);
  dump("valid.txt", data.valid);
  dump("test.txt", data.test);
  const auto dim = data.embeddings.empty() ? 0u
                                           : static_cast<std::uint32_t>(data.embeddings[0].values.size());
  write_embedding_file(dir / "embeddings.bin", dim, data.embeddings);
}

}  // namespace muse
