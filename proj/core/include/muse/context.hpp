#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "muse/kg.hpp"
#include "muse/prior.hpp"

namespace muse {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A relation-prediction query. `exclude` is the train edge that carries the
/// answer when the query itself is a train triplet; it is removed from every
/// structure the graph branches look at.
struct Query {
  EntityId head = 0;
  EntityId tail = 0;
  std::optional<EdgeId> exclude;
};

/// Query over (h, t) with no excluded edge.
Query make_query(const KnowledgeGraph& g, EntityId head, EntityId tail);

/// Query for a known triplet; excludes the matching train edge, if any.
Query make_query(const KnowledgeGraph& g, const Triplet& t);

struct ContextBranchParams {
  Mat rel_embed;       // |R| x hidden, initial edge state per relation type
  std::vector<Mat> w;  // per iteration: (3*hidden) x hidden
  std::vector<Vec> b;  // per iteration: hidden
  Mat w_pair;          // (2*hidden) x hidden
  Vec b_pair;          // hidden
  Mat attn_proj;       // prior_dim x hidden
  Mat out_proj;        // hidden x |R|
  Vec out_bias;        // |R|

  std::size_t hidden() const { return static_cast<std::size_t>(rel_embed.cols()); }
  std::size_t iterations() const { return w.size(); }
};

/// Train edges within `k_hops` of the query endpoints, with local indexing.
/// An edge is within k hops when one of its endpoints is at BFS distance
/// < k from {head, tail}; the BFS never crosses the excluded edge.
struct Neighborhood {
  std::vector<EdgeId> edges;                       // ascending
  std::vector<EntityId> nodes;                     // local node -> entity
  std::vector<std::array<std::uint32_t, 2>> ends;  // per edge row: local (head, tail)
  std::vector<std::vector<std::uint32_t>> node_edges;  // per local node: incident edge rows
  std::uint32_t head_node = 0;
  std::uint32_t tail_node = 0;
};

Neighborhood collect_neighborhood(const KnowledgeGraph& g, const Query& q, std::size_t k_hops);

/// Edge hidden states s_e^d for the edges of one query neighborhood.
struct EdgeStateTable {
  std::vector<EdgeId> edges;  // ascending; row i of `states` belongs to edges[i]
  RowMat states;
  std::size_t iteration = 0;

  std::optional<Eigen::Index> row(EdgeId e) const;
};

/// s_e^0 = rel_embed[relation(e)] for every neighborhood edge.
EdgeStateTable init_edge_states(const KnowledgeGraph& g, const Query& q, std::size_t k_hops,
                                const ContextBranchParams& p);

/// Sum of the states of table edges incident to `v` (self-loops count twice).
Vec node_message(EntityId v, const EdgeStateTable& table, const KnowledgeGraph& g,
                 std::optional<EdgeId> exclude = std::nullopt);

/// s_e^{d+1} = relu(concat(m_head(e), m_tail(e), s_e^d) w_d + b_d), d = table.iteration.
Vec edge_update(EdgeId e, const EdgeStateTable& table, const KnowledgeGraph& g,
                const ContextBranchParams& p);

/// One synchronous sweep of `edge_update` over every table edge.
EdgeStateTable propagate(const EdgeStateTable& table, const KnowledgeGraph& g,
                         const ContextBranchParams& p);

/// Softmax over table edges incident to `v` of <s_e, attn_proj^T emb(v)>.
/// Returns nullopt ("no context") when `v` has no incident table edge.
std::optional<std::vector<std::pair<EdgeId, double>>> edge_attention(
    EntityId v, const EdgeStateTable& table, const KnowledgeGraph& g,
    const EmbeddingStore& store, const ContextBranchParams& p);

/// S_(h,t) computed edge-at-a-time through the operations above.
Vec pair_representation(const Query& q, const KnowledgeGraph& g, const EmbeddingStore& store,
                        const ContextBranchParams& p, std::size_t k_hops);

Vec context_logits(const Vec& rep, const ContextBranchParams& p);

/// Saved activations of the batched forward pass.
struct ContextTrace {
  std::vector<RowMat> states;  // K + 1 tables of E x hidden
  std::vector<RowMat> inputs;  // K tables of E x (3*hidden)
  std::vector<RowMat> pre;     // K tables of E x hidden
  struct Endpoint {
    Vec query;                   // attn_proj^T emb(v)
    std::vector<double> weights;  // one per node_edges entry
    Vec message;                 // m_v^K
  };
  std::array<Endpoint, 2> endpoints;  // head, tail
  Vec pair_in;
  Vec pair_pre;
  Vec rep;  // S_(h,t)
};

/// Batched S_(h,t) over a precomputed neighborhood; equal to `pair_representation`.
Vec context_forward(const Neighborhood& nb, const KnowledgeGraph& g, const EmbeddingStore& store,
                    const ContextBranchParams& p, ContextTrace* trace = nullptr);

/// Accumulates gradients of every context parameter given d(loss)/d(S_(h,t)).
void context_backward(const Neighborhood& nb, const KnowledgeGraph& g,
                      const EmbeddingStore& store, const ContextBranchParams& p,
                      const ContextTrace& trace, const Vec& drep, ContextBranchParams& grad);

/// Gradients of the output projection; returns d(loss)/d(rep).
Vec context_logits_backward(const Vec& rep, const Vec& dlogits, const ContextBranchParams& p,
                            ContextBranchParams& grad);

}  // namespace muse
