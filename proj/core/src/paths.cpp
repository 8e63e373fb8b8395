#include "muse/paths.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace muse {

std::string describe(const RelationalPath& path, const Vocabulary& relations) {
  std::string out;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i) out += " / ";
    if (path[i].direction == Direction::kBackward) out += "^-1 ";
    out += relations.name(path[i].relation);
  }
  return out;
}

namespace {

struct WalkState {
  const KnowledgeGraph& g;
  EntityId target;
  std::size_t max_len;
  std::optional<EdgeId> exclude;
  std::vector<EdgeId> used;
  RelationalPath steps;
  std::vector<RelationalPath> out;

  void extend(EntityId v) {
    if (steps.size() == max_len) return;
    for (const auto& ie : g.incident(v)) {
      if (exclude && ie.edge == *exclude) continue;
      if (std::find(used.begin(), used.end(), ie.edge) != used.end()) continue;
      const EntityId next = g.other_end(ie.edge, ie.direction);
      used.push_back(ie.edge);
      steps.push_back({g.edge(ie.edge).relation, ie.direction});
      if (next == target) out.push_back(steps);
      extend(next);
      steps.pop_back();
      used.pop_back();
    }
  }
};

}  // namespace

std::vector<RelationalPath> enumerate_paths(const KnowledgeGraph& g, EntityId h, EntityId t,
                                            std::size_t max_len, std::optional<EdgeId> exclude) {
  if (max_len == 0) throw std::invalid_argument("max path length must be >= 1");
  g.check_entity(h);
  g.check_entity(t);
  WalkState state{g, t, max_len, exclude, {}, {}, {}};
  state.used.reserve(max_len);
  state.steps.reserve(max_len);
  state.extend(h);
  std::sort(state.out.begin(), state.out.end());
  return std::move(state.out);
}

PathVocabulary PathVocabulary::build(const KnowledgeGraph& g, std::size_t max_len) {
  PathVocabulary vocab;
  vocab.max_len_ = max_len;
  const auto train = g.train();
  for (EdgeId e = 0; e < train.size(); ++e) {
    for (const auto& p : enumerate_paths(g, train[e].head, train[e].tail, max_len, e)) {
      vocab.add(p);
    }
  }
  return vocab;
}

std::size_t PathVocabulary::add(const RelationalPath& path) {
  auto [it, inserted] = ids_.emplace(path, paths_.size() + 1);
  if (inserted) paths_.push_back(path);
  return it->second;
}

std::size_t PathVocabulary::id(const RelationalPath& path) const {
  auto it = ids_.find(path);
  return it == ids_.end() ? kUnknown : it->second;
}

const RelationalPath& PathVocabulary::path(std::size_t id) const {
  if (id == kUnknown || id > paths_.size()) {
    throw LookupError("path id " + std::to_string(id) + " has no path");
  }
  return paths_[id - 1];
}

Vec aggregate_paths(std::span<const std::size_t> path_ids, const Vec& s_ht,
                    const PathBranchParams& p, PathTrace* trace) {
  if (s_ht.size() != p.path_embed.cols()) {
    throw std::invalid_argument("aggregate_paths: s_ht length " + std::to_string(s_ht.size()) +
                                " != hidden " + std::to_string(p.path_embed.cols()));
  }
  Vec rep = Vec::Zero(p.path_embed.cols());
  std::vector<double> weights(path_ids.size());
  if (!path_ids.empty()) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < path_ids.size(); ++j) {
      if (path_ids[j] >= static_cast<std::size_t>(p.path_embed.rows())) {
        throw std::out_of_range("aggregate_paths: path id beyond embedding table");
      }
      weights[j] = p.path_embed.row(static_cast<Eigen::Index>(path_ids[j])).dot(s_ht);
      mx = std::max(mx, weights[j]);
    }
    double z = 0.0;
    for (double& w : weights) {
      w = std::exp(w - mx);
      z += w;
    }
    for (std::size_t j = 0; j < path_ids.size(); ++j) {
      weights[j] /= z;
      rep += weights[j] * p.path_embed.row(static_cast<Eigen::Index>(path_ids[j])).transpose();
    }
  }
  if (trace) {
    trace->weights = std::move(weights);
    trace->rep = rep;
  }
  return rep;
}

Vec aggregate_paths(std::span<const RelationalPath> paths, const Vec& s_ht,
                    const PathVocabulary& vocab, const PathBranchParams& p) {
  std::vector<std::size_t> ids;
  ids.reserve(paths.size());
  for (const auto& path : paths) ids.push_back(vocab.id(path));
  return aggregate_paths(ids, s_ht, p);
}

Vec path_logits(const Vec& rep, const PathBranchParams& p) {
  if (rep.size() != p.out_proj.rows()) {
    throw std::invalid_argument("path_logits: rep length " + std::to_string(rep.size()) +
                                " != hidden " + std::to_string(p.out_proj.rows()));
  }
  return p.out_proj.transpose() * rep + p.out_bias;
}

Vec path_backward(std::span<const std::size_t> path_ids, const Vec& s_ht, const PathTrace& trace,
                  const Vec& dlogits, const PathBranchParams& p, PathBranchParams& grad) {
  grad.out_proj.noalias() += trace.rep * dlogits.transpose();
  grad.out_bias += dlogits;
  Vec ds = Vec::Zero(s_ht.size());
  if (path_ids.empty()) return ds;
  const Vec drep = p.out_proj * dlogits;
  std::vector<double> dalpha(path_ids.size());
  double mean = 0.0;
  for (std::size_t j = 0; j < path_ids.size(); ++j) {
    dalpha[j] = p.path_embed.row(static_cast<Eigen::Index>(path_ids[j])).dot(drep);
    mean += trace.weights[j] * dalpha[j];
  }
  for (std::size_t j = 0; j < path_ids.size(); ++j) {
    const auto row = static_cast<Eigen::Index>(path_ids[j]);
    const double dscore = trace.weights[j] * (dalpha[j] - mean);
    grad.path_embed.row(row) += trace.weights[j] * drep.transpose() + dscore * s_ht.transpose();
    ds += dscore * p.path_embed.row(row).transpose();
  }
  return ds;
}

}  // namespace muse
