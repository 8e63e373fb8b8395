#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "muse/metrics.hpp"
#include "muse/model.hpp"
#include "muse/random.hpp"

namespace muse {

namespace {

// Examples per gradient buffer. Fixed (not tied to the worker count) so the
// floating-point reduction order, and hence every parameter bit, is the same
// for any number of workers.
constexpr std::size_t kChunk = 8;

}  // namespace

std::string to_json_line(const EpochRecord& rec) {
  nlohmann::json j;
  j["epoch"] = rec.epoch;
  j["train_loss"] = rec.train_loss;
  j["valid"] = {{"n", rec.valid_n},
                {"mrr", rec.valid_mrr},
                {"hits1", rec.valid_hits1},
                {"hits3", rec.valid_hits3}};
  return j.dump();
}

TrainResult train(const KnowledgeGraph& g, const EmbeddingStore& store, const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  if (g.train().empty()) throw std::invalid_argument("train: empty train split");
  TrainResult result{Model::initialize(g, store, cfg), {}, 0};
  Model& model = result.model;

  const auto train_split = g.train();
  const auto plans = model.plan_split(train_split);
  const ModelShape shape = model.params().shape();
  AdamOptimizer adam(shape, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);

  std::vector<std::size_t> order(train_split.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  const std::size_t max_chunks = (cfg.batch_size + kChunk - 1) / kChunk;
  std::vector<ModelParams> chunk_grads(max_chunks, ModelParams::zeros(shape));
  std::vector<double> chunk_loss(max_chunks, 0.0);
  ModelParams grad = ModelParams::zeros(shape);
  const bool select = cfg.keep_best_valid && !g.valid().empty();
  std::optional<ModelParams> best;
  double best_hits1 = -1.0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    SplitMix64 rng(mix_seed(cfg.seed, epoch));
    rng.shuffle(order);
    double epoch_loss = 0.0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::size_t n_chunks = (end - start + kChunk - 1) / kChunk;
      parallel_for(n_chunks, cfg.workers, [&](std::size_t c) {
        ModelParams& cg = chunk_grads[c];
        cg.set_zero();
        double loss = 0.0;
        const std::size_t lo = start + c * kChunk;
        const std::size_t hi = std::min(end, lo + kChunk);
        for (std::size_t i = lo; i < hi; ++i) {
          const auto idx = order[i];
          loss += model.loss_and_gradient(plans[idx], train_split[idx].relation, cg);
        }
        chunk_loss[c] = loss;
      });
      grad.set_zero();
      double batch_loss = 0.0;
      for (std::size_t c = 0; c < n_chunks; ++c) {
        grad.add(chunk_grads[c]);
        batch_loss += chunk_loss[c];
      }
      if (!std::isfinite(batch_loss)) {
        std::ostringstream msg;
        msg << "non-finite training loss at epoch " << epoch << ", batch starting at " << start;
        throw TrainingDiverged(msg.str());
      }
      epoch_loss += batch_loss;
      adam.step(model.params(), grad, BranchMask::all());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(order.size());
    if (!g.valid().empty()) {
      const auto report = evaluate(g.valid(), model);
      rec.valid_n = report.overall.n;
      rec.valid_mrr = report.overall.mrr;
      rec.valid_hits1 = report.overall.hits1;
      rec.valid_hits3 = report.overall.hits3;
    }
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (select && rec.valid_hits1 > best_hits1) {
      best_hits1 = rec.valid_hits1;
      best = model.params();
      result.selected_epoch = epoch;
    }
  }
  if (best) {
    model.params() = std::move(*best);
  } else {
    result.selected_epoch = cfg.epochs;
  }
  return result;
}

}  // namespace muse
