#pragma once

#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "muse/config.hpp"
#include "muse/context.hpp"
#include "muse/kg.hpp"
#include "muse/params.hpp"
#include "muse/paths.hpp"
#include "muse/prior.hpp"

namespace muse {

inline constexpr double kLogClamp = 1e-30;

/// Softmax distribution over relations plus the ranking derived from it.
struct Prediction {
  std::vector<double> probs;
  std::vector<RelationId> ranked;  // descending prob, ties by ascending id
};

/// Builds a Prediction from fused logits.
Prediction make_prediction(const Vec& logits);

/// Per-branch logits before weighting; branches outside the mask are zero.
struct BranchLogits {
  Vec prior;
  Vec context;
  Vec path;
};

/// Everything the graph branches need for one query, computed once.
struct QueryPlan {
  Query query;
  Neighborhood neighborhood;
  std::vector<std::size_t> path_ids;  // one per enumerated path instance
};

/// The fused three-branch relation predictor.
///
/// The pair representation S_(h,t) is computed by the context encoder and is
/// shared: it feeds the context head and also serves as the attention query
/// of the path branch. It is therefore evaluated whenever either graph branch
/// is active, which keeps fused logits an exact sum of per-mask logits.
class Model {
 public:
  Model(const KnowledgeGraph& g, const EmbeddingStore& store, PathVocabulary vocab,
        TrainConfig cfg, ModelParams params);

  /// Builds the path vocabulary from the train split and draws initial
  /// parameters from `cfg.seed`.
  static Model initialize(const KnowledgeGraph& g, const EmbeddingStore& store,
                          const TrainConfig& cfg);

  QueryPlan plan(const Query& q) const;
  std::vector<QueryPlan> plan_split(std::span<const Triplet> split) const;

  BranchLogits branch_logits(const QueryPlan& plan) const;
  Vec logits(const QueryPlan& plan) const;
  Prediction forward(const QueryPlan& plan) const;
  Prediction forward(const Query& q) const { return forward(plan(q)); }

  /// Sum over the batch of -log P(r | h, t), log clamped at 1e-30. Train
  /// triplets exclude their own edge.
  double loss(std::span<const Triplet> batch) const;

  /// Loss of one example; adds its exact gradient into `grad`.
  double loss_and_gradient(const QueryPlan& plan, RelationId label, ModelParams& grad) const;

  /// `loss(batch)` plus its gradient, accumulated into `grad` in batch order.
  double loss_and_gradient(std::span<const Triplet> batch, ModelParams& grad) const;

  /// Top-k (relation, probability); k is clamped to |R|.
  std::vector<std::pair<RelationId, double>> predict(EntityId h, EntityId t, std::size_t k) const;

  /// ReLU pre-activations of every unit the batch touches, in a fixed order.
  /// Used by gradient checks to detect kinks crossed by a perturbation.
  std::vector<double> relu_inputs(std::span<const Triplet> batch) const;

  const KnowledgeGraph& graph() const { return *graph_; }
  const EmbeddingStore& store() const { return *store_; }
  const PathVocabulary& vocab() const { return vocab_; }
  const TrainConfig& config() const { return cfg_; }
  TrainConfig& config() { return cfg_; }
  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }

 private:
  bool graph_active() const {
    return cfg_.branches.has(Branch::kContext) || cfg_.branches.has(Branch::kPath);
  }

  const KnowledgeGraph* graph_;
  const EmbeddingStore* store_;
  PathVocabulary vocab_;
  TrainConfig cfg_;
  ModelParams params_;
};

/// Validation metrics logged after each epoch.
struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean per-example loss over the epoch
  std::size_t valid_n = 0;
  double valid_mrr = 0.0;
  double valid_hits1 = 0.0;
  double valid_hits3 = 0.0;
};

std::string to_json_line(const EpochRecord& rec);

struct TrainResult {
  Model model;
  std::vector<EpochRecord> log;
  std::size_t selected_epoch = 0;  // epoch whose parameters `model` holds
};

/// Raised when the training loss becomes non-finite.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mini-batch Adam over the train split; deterministic in `cfg.seed` and
/// independent of `cfg.workers`.
TrainResult train(const KnowledgeGraph& g, const EmbeddingStore& store, const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace muse
