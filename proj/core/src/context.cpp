#include "muse/context.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <unordered_map>

namespace muse {

namespace {

void check_shapes(const ContextBranchParams& p) {
  const auto h = p.rel_embed.cols();
  if (p.w.empty()) throw std::invalid_argument("context branch: at least one iteration required");
  if (p.w.size() != p.b.size()) throw std::invalid_argument("context branch: w/b count mismatch");
  for (std::size_t d = 0; d < p.w.size(); ++d) {
    if (p.w[d].rows() != 3 * h || p.w[d].cols() != h || p.b[d].size() != h) {
      throw std::invalid_argument("context branch: iteration " + std::to_string(d) +
                                  " weights have wrong shape");
    }
  }
  if (p.w_pair.rows() != 2 * h || p.w_pair.cols() != h || p.b_pair.size() != h ||
      p.attn_proj.cols() != h || p.out_proj.rows() != h ||
      p.out_proj.cols() != p.out_bias.size()) {
    throw std::invalid_argument("context branch: parameter shapes inconsistent");
  }
}

// Stable softmax; `scores` is overwritten with the weights.
void softmax_inplace(std::vector<double>& scores) {
  if (scores.empty()) return;
  const double mx = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double& s : scores) {
    s = std::exp(s - mx);
    z += s;
  }
  for (double& s : scores) s /= z;
}

}  // namespace

Query make_query(const KnowledgeGraph& g, EntityId head, EntityId tail) {
  g.check_entity(head);
  g.check_entity(tail);
  return Query{head, tail, std::nullopt};
}

Query make_query(const KnowledgeGraph& g, const Triplet& t) {
  Query q = make_query(g, t.head, t.tail);
  q.exclude = g.find_train_edge(t);
  return q;
}

Neighborhood collect_neighborhood(const KnowledgeGraph& g, const Query& q, std::size_t k_hops) {
  if (k_hops == 0) throw std::invalid_argument("neighborhood radius must be >= 1");
  g.check_entity(q.head);
  g.check_entity(q.tail);

  Neighborhood nb;
  std::unordered_map<EntityId, std::uint32_t> local;
  auto local_of = [&](EntityId v) {
    auto [it, inserted] = local.emplace(v, static_cast<std::uint32_t>(nb.nodes.size()));
    if (inserted) nb.nodes.push_back(v);
    return it->second;
  };
  nb.head_node = local_of(q.head);
  nb.tail_node = local_of(q.tail);

  // BFS: nodes at distance < k_hops contribute all their incident edges.
  std::unordered_map<EntityId, std::size_t> dist{{q.head, 0}, {q.tail, 0}};
  std::deque<EntityId> frontier{q.head};
  if (q.tail != q.head) frontier.push_back(q.tail);
  std::vector<EdgeId> edges;
  while (!frontier.empty()) {
    const EntityId v = frontier.front();
    frontier.pop_front();
    const std::size_t dv = dist[v];
    if (dv >= k_hops) continue;
    for (const auto& ie : g.incident(v)) {
      if (q.exclude && ie.edge == *q.exclude) continue;
      edges.push_back(ie.edge);
      const EntityId u = g.other_end(ie.edge, ie.direction);
      if (dist.emplace(u, dv + 1).second) frontier.push_back(u);
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  nb.edges = std::move(edges);

  nb.ends.reserve(nb.edges.size());
  for (const EdgeId e : nb.edges) {
    const auto& t = g.edge(e);
    nb.ends.push_back({local_of(t.head), local_of(t.tail)});
  }
  nb.node_edges.assign(nb.nodes.size(), {});
  for (std::uint32_t row = 0; row < nb.edges.size(); ++row) {
    // Self-loops land twice on the same node, matching the incident lists.
    nb.node_edges[nb.ends[row][0]].push_back(row);
    nb.node_edges[nb.ends[row][1]].push_back(row);
  }
  return nb;
}

std::optional<Eigen::Index> EdgeStateTable::row(EdgeId e) const {
  auto it = std::lower_bound(edges.begin(), edges.end(), e);
  if (it == edges.end() || *it != e) return std::nullopt;
  return static_cast<Eigen::Index>(it - edges.begin());
}

EdgeStateTable init_edge_states(const KnowledgeGraph& g, const Query& q, std::size_t k_hops,
                                const ContextBranchParams& p) {
  const auto nb = collect_neighborhood(g, q, k_hops);
  EdgeStateTable table;
  table.edges = nb.edges;
  table.iteration = 0;
  table.states.resize(static_cast<Eigen::Index>(nb.edges.size()), p.rel_embed.cols());
  for (std::size_t i = 0; i < nb.edges.size(); ++i) {
    table.states.row(static_cast<Eigen::Index>(i)) = p.rel_embed.row(g.edge(nb.edges[i]).relation);
  }
  return table;
}

Vec node_message(EntityId v, const EdgeStateTable& table, const KnowledgeGraph& g,
                 std::optional<EdgeId> exclude) {
  Vec m = Vec::Zero(table.states.cols());
  for (const auto& ie : g.incident_edges(v, exclude)) {
    if (auto r = table.row(ie.edge)) m += table.states.row(*r).transpose();
  }
  return m;
}

Vec edge_update(EdgeId e, const EdgeStateTable& table, const KnowledgeGraph& g,
                const ContextBranchParams& p) {
  check_shapes(p);
  const auto d = table.iteration;
  if (d >= p.iterations()) {
    throw std::invalid_argument("edge_update: iteration " + std::to_string(d) +
                                " has no weights (K = " + std::to_string(p.iterations()) + ")");
  }
  const auto r = table.row(e);
  if (!r) throw std::invalid_argument("edge_update: edge " + std::to_string(e) + " not in table");
  const auto h = p.rel_embed.cols();
  if (table.states.cols() != h) throw std::invalid_argument("edge_update: state width mismatch");
  const auto& t = g.edge(e);
  Vec x(3 * h);
  x << node_message(t.head, table, g), node_message(t.tail, table, g),
      table.states.row(*r).transpose();
  return (p.w[d].transpose() * x + p.b[d]).cwiseMax(0.0);
}

EdgeStateTable propagate(const EdgeStateTable& table, const KnowledgeGraph& g,
                         const ContextBranchParams& p) {
  EdgeStateTable next;
  next.edges = table.edges;
  next.iteration = table.iteration + 1;
  next.states.resize(table.states.rows(), table.states.cols());
  for (std::size_t i = 0; i < table.edges.size(); ++i) {
    next.states.row(static_cast<Eigen::Index>(i)) = edge_update(table.edges[i], table, g, p).transpose();
  }
  return next;
}

std::optional<std::vector<std::pair<EdgeId, double>>> edge_attention(
    EntityId v, const EdgeStateTable& table, const KnowledgeGraph& g,
    const EmbeddingStore& store, const ContextBranchParams& p) {
  if (p.attn_proj.rows() != static_cast<Eigen::Index>(store.dim())) {
    throw std::invalid_argument("edge_attention: attn_proj rows != embedding dim");
  }
  const Vec query = p.attn_proj.transpose() * store.vector(v);
  std::vector<EdgeId> ids;
  std::vector<double> scores;
  for (const auto& ie : g.incident(v)) {
    if (auto r = table.row(ie.edge)) {
      ids.push_back(ie.edge);
      scores.push_back(table.states.row(*r).dot(query));
    }
  }
  if (ids.empty()) return std::nullopt;
  softmax_inplace(scores);
  std::vector<std::pair<EdgeId, double>> out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) out.emplace_back(ids[i], scores[i]);
  return out;
}

Vec pair_representation(const Query& q, const KnowledgeGraph& g, const EmbeddingStore& store,
                        const ContextBranchParams& p, std::size_t k_hops) {
  check_shapes(p);
  auto table = init_edge_states(g, q, k_hops, p);
  for (std::size_t d = 0; d < p.iterations(); ++d) table = propagate(table, g, p);

  const auto h = p.rel_embed.cols();
  auto attended = [&](EntityId v) {
    Vec m = Vec::Zero(h);
    if (auto weights = edge_attention(v, table, g, store, p)) {
      for (const auto& [e, a] : *weights) m += a * table.states.row(*table.row(e)).transpose();
    }
    return m;
  };
  Vec pair_in(2 * h);
  pair_in << attended(q.head), attended(q.tail);
  return (p.w_pair.transpose() * pair_in + p.b_pair).cwiseMax(0.0);
}

Vec context_logits(const Vec& rep, const ContextBranchParams& p) {
  if (rep.size() != p.out_proj.rows()) {
    throw std::invalid_argument("context_logits: rep length " + std::to_string(rep.size()) +
                                " != hidden " + std::to_string(p.out_proj.rows()));
  }
  return p.out_proj.transpose() * rep + p.out_bias;
}

Vec context_logits_backward(const Vec& rep, const Vec& dlogits, const ContextBranchParams& p,
                            ContextBranchParams& grad) {
  grad.out_proj.noalias() += rep * dlogits.transpose();
  grad.out_bias += dlogits;
  return p.out_proj * dlogits;
}

Vec context_forward(const Neighborhood& nb, const KnowledgeGraph& g, const EmbeddingStore& store,
                    const ContextBranchParams& p, ContextTrace* trace) {
  check_shapes(p);
  const auto h = p.rel_embed.cols();
  const auto n_edges = static_cast<Eigen::Index>(nb.edges.size());
  const auto n_nodes = static_cast<Eigen::Index>(nb.nodes.size());
  const std::size_t k = p.iterations();

  ContextTrace local;
  ContextTrace& tr = trace ? *trace : local;
  tr.states.assign(k + 1, RowMat());
  tr.inputs.assign(k, RowMat());
  tr.pre.assign(k, RowMat());

  RowMat& s0 = tr.states[0];
  s0.resize(n_edges, h);
  for (Eigen::Index i = 0; i < n_edges; ++i) {
    s0.row(i) = p.rel_embed.row(g.edge(nb.edges[static_cast<std::size_t>(i)]).relation);
  }

  RowMat messages(n_nodes, h);
  for (std::size_t d = 0; d < k; ++d) {
    const RowMat& s = tr.states[d];
    messages.setZero();
    for (Eigen::Index n = 0; n < n_nodes; ++n) {
      for (auto row : nb.node_edges[static_cast<std::size_t>(n)]) messages.row(n) += s.row(row);
    }
    RowMat& x = tr.inputs[d];
    x.resize(n_edges, 3 * h);
    for (Eigen::Index i = 0; i < n_edges; ++i) {
      const auto& ends = nb.ends[static_cast<std::size_t>(i)];
      x.row(i).segment(0, h) = messages.row(ends[0]);
      x.row(i).segment(h, h) = messages.row(ends[1]);
      x.row(i).segment(2 * h, h) = s.row(i);
    }
    RowMat& z = tr.pre[d];
    z.noalias() = x * p.w[d];
    z.rowwise() += p.b[d].transpose();
    tr.states[d + 1] = z.cwiseMax(0.0);
  }

  const RowMat& sk = tr.states[k];
  const std::array<std::uint32_t, 2> endpoint_nodes{nb.head_node, nb.tail_node};
  for (std::size_t which = 0; which < 2; ++which) {
    auto& ep = tr.endpoints[which];
    const auto node = endpoint_nodes[which];
    const auto& rows = nb.node_edges[node];
    ep.message = Vec::Zero(h);
    ep.weights.clear();
    if (rows.empty()) {
      ep.query = Vec::Zero(h);
      continue;
    }
    ep.query = p.attn_proj.transpose() * store.vector(nb.nodes[node]);
    ep.weights.reserve(rows.size());
    for (auto row : rows) ep.weights.push_back(sk.row(row).dot(ep.query));
    softmax_inplace(ep.weights);
    for (std::size_t j = 0; j < rows.size(); ++j) {
      ep.message += ep.weights[j] * sk.row(rows[j]).transpose();
    }
  }

  tr.pair_in.resize(2 * h);
  tr.pair_in << tr.endpoints[0].message, tr.endpoints[1].message;
  tr.pair_pre = p.w_pair.transpose() * tr.pair_in + p.b_pair;
  tr.rep = tr.pair_pre.cwiseMax(0.0);
  return tr.rep;
}

void context_backward(const Neighborhood& nb, const KnowledgeGraph& g,
                      const EmbeddingStore& store, const ContextBranchParams& p,
                      const ContextTrace& tr, const Vec& drep, ContextBranchParams& grad) {
  const auto h = p.rel_embed.cols();
  const auto n_edges = static_cast<Eigen::Index>(nb.edges.size());
  const auto n_nodes = static_cast<Eigen::Index>(nb.nodes.size());
  const std::size_t k = p.iterations();

  const Vec dpair_pre = drep.cwiseProduct((tr.pair_pre.array() > 0.0).cast<double>().matrix());
  grad.w_pair.noalias() += tr.pair_in * dpair_pre.transpose();
  grad.b_pair += dpair_pre;
  const Vec dpair_in = p.w_pair * dpair_pre;

  RowMat ds = RowMat::Zero(n_edges, h);
  const RowMat& sk = tr.states[k];
  const std::array<std::uint32_t, 2> endpoint_nodes{nb.head_node, nb.tail_node};
  for (std::size_t which = 0; which < 2; ++which) {
    const auto& ep = tr.endpoints[which];
    const auto node = endpoint_nodes[which];
    const auto& rows = nb.node_edges[node];
    if (rows.empty()) continue;
    const Vec dm = dpair_in.segment(static_cast<Eigen::Index>(which) * h, h);
    std::vector<double> dalpha(rows.size());
    double mean = 0.0;
    for (std::size_t j = 0; j < rows.size(); ++j) {
      dalpha[j] = sk.row(rows[j]).dot(dm);
      mean += ep.weights[j] * dalpha[j];
    }
    Vec dquery = Vec::Zero(h);
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const double dscore = ep.weights[j] * (dalpha[j] - mean);
      ds.row(rows[j]) += ep.weights[j] * dm.transpose() + dscore * ep.query.transpose();
      dquery += dscore * sk.row(rows[j]).transpose();
    }
    grad.attn_proj.noalias() += store.vector(nb.nodes[node]) * dquery.transpose();
  }

  RowMat dmessages(n_nodes, h);
  for (std::size_t step = k; step-- > 0;) {
    const RowMat dz = ds.cwiseProduct((tr.pre[step].array() > 0.0).cast<double>().matrix());
    grad.w[step].noalias() += tr.inputs[step].transpose() * dz;
    grad.b[step] += dz.colwise().sum().transpose();
    const RowMat dx = dz * p.w[step].transpose();
    ds = dx.middleCols(2 * h, h);
    dmessages.setZero();
    for (Eigen::Index i = 0; i < n_edges; ++i) {
      const auto& ends = nb.ends[static_cast<std::size_t>(i)];
      dmessages.row(ends[0]) += dx.row(i).segment(0, h);
      dmessages.row(ends[1]) += dx.row(i).segment(h, h);
    }
    for (Eigen::Index n = 0; n < n_nodes; ++n) {
      for (auto row : nb.node_edges[static_cast<std::size_t>(n)]) ds.row(row) += dmessages.row(n);
    }
  }
  for (Eigen::Index i = 0; i < n_edges; ++i) {
    grad.rel_embed.row(g.edge(nb.edges[static_cast<std::size_t>(i)]).relation) += ds.row(i);
  }
}

}  // namespace muse
