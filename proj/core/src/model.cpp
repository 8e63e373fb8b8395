#include "muse/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

namespace muse {

Prediction make_prediction(const Vec& logits) {
  Prediction pred;
  const auto n = static_cast<std::size_t>(logits.size());
  pred.probs.resize(n);
  if (n == 0) return pred;
  const double mx = logits.maxCoeff();
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    pred.probs[i] = std::exp(logits[static_cast<Eigen::Index>(i)] - mx);
    z += pred.probs[i];
  }
  for (double& p : pred.probs) p /= z;
  pred.ranked.resize(n);
  std::iota(pred.ranked.begin(), pred.ranked.end(), RelationId{0});
  std::stable_sort(pred.ranked.begin(), pred.ranked.end(),
                   [&](RelationId a, RelationId b) { return pred.probs[a] > pred.probs[b]; });
  return pred;
}

Model::Model(const KnowledgeGraph& g, const EmbeddingStore& store, PathVocabulary vocab,
             TrainConfig cfg, ModelParams params)
    : graph_(&g), store_(&store), vocab_(std::move(vocab)), cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  const ModelShape s = params_.shape();
  if (s.num_relations != g.num_relations() || s.prior_dim != store.dim() ||
      s.path_rows != vocab_.rows() || s.hidden != cfg_.hidden || s.k_iters != cfg_.k_iters) {
    throw std::invalid_argument(
        "model parameters do not match graph/embeddings/path vocabulary/config dimensions");
  }
}

Model Model::initialize(const KnowledgeGraph& g, const EmbeddingStore& store,
                        const TrainConfig& cfg) {
  cfg.validate();
  auto vocab = PathVocabulary::build(g, cfg.max_path_len);
  ModelShape shape;
  shape.num_relations = g.num_relations();
  shape.hidden = cfg.hidden;
  shape.prior_dim = store.dim();
  shape.path_rows = vocab.rows();
  shape.k_iters = cfg.k_iters;
  return Model(g, store, std::move(vocab), cfg, ModelParams::glorot(shape, cfg.seed));
}

QueryPlan Model::plan(const Query& q) const {
  QueryPlan plan;
  plan.query = q;
  plan.neighborhood = collect_neighborhood(*graph_, q, cfg_.context_layers);
  for (const auto& p : enumerate_paths(*graph_, q.head, q.tail, cfg_.max_path_len, q.exclude)) {
    plan.path_ids.push_back(vocab_.id(p));
  }
  return plan;
}

std::vector<QueryPlan> Model::plan_split(std::span<const Triplet> split) const {
  std::vector<QueryPlan> plans(split.size());
  parallel_for(split.size(), cfg_.workers,
               [&](std::size_t i) { plans[i] = plan(make_query(*graph_, split[i])); });
  return plans;
}

BranchLogits Model::branch_logits(const QueryPlan& plan) const {
  const auto r = static_cast<Eigen::Index>(graph_->num_relations());
  BranchLogits out{Vec::Zero(r), Vec::Zero(r), Vec::Zero(r)};
  const auto& mask = cfg_.branches;
  if (mask.has(Branch::kPrior)) {
    out.prior = prior_logits(plan.query.head, plan.query.tail, *store_, params_.prior);
  }
  if (graph_active()) {
    const Vec rep = context_forward(plan.neighborhood, *graph_, *store_, params_.context);
    if (mask.has(Branch::kContext)) out.context = context_logits(rep, params_.context);
    if (mask.has(Branch::kPath)) {
      out.path = path_logits(aggregate_paths(plan.path_ids, rep, params_.path), params_.path);
    }
  }
  return out;
}

Vec Model::logits(const QueryPlan& plan) const {
  const auto b = branch_logits(plan);
  const auto& w = cfg_.branch_weights;
  return w[0] * b.prior + w[1] * b.context + w[2] * b.path;
}

Prediction Model::forward(const QueryPlan& plan) const { return make_prediction(logits(plan)); }

namespace {

// -log softmax(logits)[label], clamped; also returns probabilities.
double clamped_nll(const Vec& logits, RelationId label, Vec* probs_out) {
  const double mx = logits.maxCoeff();
  const Vec e = (logits.array() - mx).exp().matrix();
  const double z = e.sum();
  const double log_p = logits[label] - mx - std::log(z);
  if (probs_out) *probs_out = e / z;
  return -std::max(log_p, std::log(kLogClamp));
}

}  // namespace

double Model::loss(std::span<const Triplet> batch) const {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  double total = 0.0;
  for (const auto& t : batch) {
    total += clamped_nll(logits(plan(make_query(*graph_, t))), t.relation, nullptr);
  }
  return total;
}

double Model::loss_and_gradient(const QueryPlan& plan, RelationId label, ModelParams& grad) const {
  const auto& mask = cfg_.branches;
  const auto& w = cfg_.branch_weights;
  const auto r = static_cast<Eigen::Index>(graph_->num_relations());

  PriorTrace prior_trace;
  ContextTrace ctx_trace;
  PathTrace path_trace;
  Vec fused = Vec::Zero(r);
  Vec rep;
  if (mask.has(Branch::kPrior)) {
    fused += w[0] * prior_logits(plan.query.head, plan.query.tail, *store_, params_.prior,
                                 &prior_trace);
  }
  if (graph_active()) {
    rep = context_forward(plan.neighborhood, *graph_, *store_, params_.context, &ctx_trace);
    if (mask.has(Branch::kContext)) fused += w[1] * context_logits(rep, params_.context);
    if (mask.has(Branch::kPath)) {
      const Vec path_rep = aggregate_paths(plan.path_ids, rep, params_.path, &path_trace);
      fused += w[2] * path_logits(path_rep, params_.path);
    }
  }

  Vec probs;
  const double loss = clamped_nll(fused, label, &probs);
  if (probs[label] < kLogClamp) return loss;  // clamp active: constant in the parameters
  Vec dlogits = probs;
  dlogits[label] -= 1.0;

  if (mask.has(Branch::kPrior)) prior_backward(prior_trace, w[0] * dlogits, params_.prior, grad.prior);
  if (graph_active()) {
    Vec drep = Vec::Zero(rep.size());
    if (mask.has(Branch::kContext)) {
      drep += context_logits_backward(rep, w[1] * dlogits, params_.context, grad.context);
    }
    if (mask.has(Branch::kPath)) {
      drep += path_backward(plan.path_ids, rep, path_trace, w[2] * dlogits, params_.path, grad.path);
    }
    context_backward(plan.neighborhood, *graph_, *store_, params_.context, ctx_trace, drep,
                     grad.context);
  }
  return loss;
}

double Model::loss_and_gradient(std::span<const Triplet> batch, ModelParams& grad) const {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  double total = 0.0;
  for (const auto& t : batch) {
    total += loss_and_gradient(plan(make_query(*graph_, t)), t.relation, grad);
  }
  return total;
}

std::vector<std::pair<RelationId, double>> Model::predict(EntityId h, EntityId t,
                                                          std::size_t k) const {
  const auto pred = forward(make_query(*graph_, h, t));
  k = std::min(k, pred.ranked.size());
  std::vector<std::pair<RelationId, double>> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.emplace_back(pred.ranked[i], pred.probs[pred.ranked[i]]);
  return out;
}

std::vector<double> Model::relu_inputs(std::span<const Triplet> batch) const {
  std::vector<double> out;
  auto append = [&](const auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) out.push_back(m.data()[i]);
  };
  for (const auto& t : batch) {
    const auto p = plan(make_query(*graph_, t));
    if (cfg_.branches.has(Branch::kPrior)) {
      PriorTrace tr;
      prior_logits(p.query.head, p.query.tail, *store_, params_.prior, &tr);
      append(tr.pre);
    }
    if (graph_active()) {
      ContextTrace tr;
      context_forward(p.neighborhood, *graph_, *store_, params_.context, &tr);
      for (const auto& z : tr.pre) append(z);
      append(tr.pair_pre);
    }
  }
  return out;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace muse
