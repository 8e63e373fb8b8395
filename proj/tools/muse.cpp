// muse: dataset statistics, training, evaluation, ablation and prediction.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "muse/checkpoint.hpp"
#include "muse/config.hpp"
#include "muse/kg.hpp"
#include "muse/metrics.hpp"
#include "muse/model.hpp"
#include "muse/prior.hpp"
#include "muse/synthetic.hpp"

namespace fs = std::filesystem;
using namespace muse;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

/// Bad flags, config or paths; reported with exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainFlags {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<std::size_t> batch;
  std::optional<std::size_t> hidden;
  std::optional<std::size_t> k_iters;
  std::optional<std::size_t> context_layers;
  std::optional<std::size_t> max_path_len;
  std::optional<std::string> branches;
  std::optional<std::size_t> workers;
  bool last_epoch = false;
};

struct Options {
  std::optional<std::string> dataset;
  std::optional<std::string> embeddings;
  std::string out = "muse_out";
  bool out_given = false;
  std::optional<std::string> config_file;
  std::optional<std::string> preset;
  std::string buckets = "none";
  std::string split = "test";
  std::optional<std::string> checkpoint;
  std::string head;
  std::string tail;
  std::size_t top_k = 10;
  std::size_t repeats = 1;
  bool json_output = false;
  TrainFlags flags;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--epochs", f.epochs, "Training epochs");
  cmd->add_option("--lr", f.lr, "Adam learning rate");
  cmd->add_option("--batch", f.batch, "Mini-batch size");
  cmd->add_option("--hidden", f.hidden, "Hidden width");
  cmd->add_option("--k-iters", f.k_iters, "Message-passing iterations K");
  cmd->add_option("--context-layers", f.context_layers, "Neighborhood radius in hops");
  cmd->add_option("--max-path-len", f.max_path_len, "Maximum relational path length");
  cmd->add_option("--branches", f.branches, "Comma list of prior,context,path (or all)");
  cmd->add_option("--workers", f.workers, "Worker threads (results do not depend on it)");
  cmd->add_flag("--last-epoch", f.last_epoch,
                "Keep the final parameters instead of the best-validation epoch");
}

/// Preset, then config file, then explicit flags.
TrainConfig resolve_config(Options& o) {
  TrainConfig cfg;
  if (o.preset) {
    auto p = dataset_preset(*o.preset);
    if (!p) throw UsageError("unknown preset '" + *o.preset + "'");
    cfg = *p;
  }
  if (o.config_file) {
    std::ifstream in(*o.config_file);
    if (!in) throw UsageError("cannot read config file " + *o.config_file);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw UsageError("config file " + *o.config_file + ": " + e.what());
    }
    if (!j.is_object()) throw UsageError("config file must hold a JSON object");
    // Run-level keys live next to the training keys.
    auto take = [&](const char* key, auto& dst) {
      if (j.contains(key)) {
        dst = j[key].get<std::string>();
        j.erase(key);
      }
    };
    std::optional<std::string> out;
    if (!o.dataset) take("dataset", o.dataset);
    else j.erase("dataset");
    if (!o.embeddings) take("embeddings", o.embeddings);
    else j.erase("embeddings");
    take("out", out);
    if (out && !o.out_given) o.out = *out;
    if (j.contains("buckets")) {
      if (o.buckets == "none") o.buckets = j["buckets"].get<std::string>();
      j.erase("buckets");
    }
    try {
      cfg = config_from_json(j.dump(), cfg);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  const auto& f = o.flags;
  if (f.seed) cfg.seed = *f.seed;
  if (f.epochs) cfg.epochs = *f.epochs;
  if (f.lr) cfg.learning_rate = *f.lr;
  if (f.batch) cfg.batch_size = *f.batch;
  if (f.hidden) cfg.hidden = *f.hidden;
  if (f.k_iters) cfg.k_iters = *f.k_iters;
  if (f.context_layers) cfg.context_layers = *f.context_layers;
  if (f.max_path_len) cfg.max_path_len = *f.max_path_len;
  if (f.workers) cfg.workers = *f.workers;
  if (f.last_epoch) cfg.keep_best_valid = false;
  try {
    if (f.branches) cfg.branches = BranchMask::parse(*f.branches);
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

fs::path require_dataset(const Options& o) {
  if (!o.dataset) throw UsageError("--dataset is required");
  if (!fs::is_directory(*o.dataset)) throw UsageError("dataset directory not found: " + *o.dataset);
  return *o.dataset;
}

void require_embeddings_file(const std::optional<std::string>& path) {
  if (path && !path->empty() && !fs::is_regular_file(*path)) {
    throw UsageError("embeddings file not found: " + *path);
  }
}

EmbeddingStore make_store(const KnowledgeGraph& g, const std::optional<std::string>& path,
                          const TrainConfig& cfg) {
  if (path && !path->empty()) return load_embeddings(*path, g, cfg.fallback_seed);
  return EmbeddingStore::fallback(g, cfg.fallback_dim, cfg.fallback_seed);
}

std::string format_metrics(const RankSummary& s) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "n=%zu mrr=%.4f hits1=%.4f hits3=%.4f", s.n, s.mrr, s.hits1,
                s.hits3);
  return buf;
}

// ----------------------------------------------------------------- stats

int cmd_stats(Options& o) {
  const auto dir = require_dataset(o);
  const auto g = load_dataset(dir);
  const auto s = compute_stats(g);
  if (o.json_output) {
    json j{{"entities", s.entities},     {"relations", s.relations},
           {"train", s.train},           {"valid", s.valid},
           {"test", s.test},             {"degree_mean", s.degree_mean},
           {"degree_variance", s.degree_variance},
           {"lis_fraction", s.lis_fraction}, {"lis_threshold", s.lis_threshold}};
    std::cout << j.dump() << "\n";
    return kExitOk;
  }
  std::printf("dataset          %s\n", dir.string().c_str());
  std::printf("entities         %zu\n", s.entities);
  std::printf("relations        %zu\n", s.relations);
  std::printf("triplets         train=%zu valid=%zu test=%zu\n", s.train, s.valid, s.test);
  std::printf("degree mean      %.4f\n", s.degree_mean);
  std::printf("degree variance  %.4f\n", s.degree_variance);
  std::printf("LIS (degree<%u)   %.2f%%\n", s.lis_threshold, 100.0 * s.lis_fraction);
  return kExitOk;
}

// ----------------------------------------------------------------- train

int cmd_train(Options& o) {
  const auto cfg = resolve_config(o);
  const auto dir = require_dataset(o);
  require_embeddings_file(o.embeddings);

  const auto g = load_dataset(dir);
  const auto store = make_store(g, o.embeddings, cfg);
  const fs::path out(o.out);
  fs::create_directories(out);

  json resolved = json::parse(to_json(cfg));
  resolved["dataset"] = dir.string();
  resolved["embeddings"] = o.embeddings.value_or("");
  resolved["out"] = out.string();
  std::cout << "config " << resolved.dump() << "\n";
  {
    std::ofstream cf(out / "config.json");
    cf << resolved.dump(2) << "\n";
  }

  std::ofstream log(out / "metrics.jsonl", std::ios::trunc);
  auto result = train(g, store, cfg, [&](const EpochRecord& rec) {
    const auto line = to_json_line(rec);
    log << line << "\n";
    log.flush();
    std::cout << line << "\n";
  });

  save_checkpoint(out / "model.ckpt", result.model,
                  CheckpointMeta{dir.string(), o.embeddings.value_or("")});
  std::cout << "selected_epoch " << result.selected_epoch << "\n";
  if (!g.test().empty()) {
    const auto report = evaluate(g.test(), result.model);
    std::cout << "test " << format_metrics(report.overall) << "\n";
  }
  std::cout << "checkpoint " << (out / "model.ckpt").string() << "\n";
  return kExitOk;
}

// ------------------------------------------------------- checkpoint loads

struct LoadedModel {
  std::unique_ptr<KnowledgeGraph> graph;
  std::unique_ptr<EmbeddingStore> store;
  std::unique_ptr<Model> model;
};

LoadedModel load_model(Options& o) {
  const fs::path ckpt_path = o.checkpoint ? fs::path(*o.checkpoint) : fs::path(o.out) / "model.ckpt";
  if (!fs::is_regular_file(ckpt_path)) throw UsageError("checkpoint not found: " + ckpt_path.string());
  auto ck = load_checkpoint(ckpt_path);
  if (!o.dataset) o.dataset = ck.meta.dataset;
  if (!o.embeddings && !ck.meta.embeddings.empty()) o.embeddings = ck.meta.embeddings;
  const auto dir = require_dataset(o);
  require_embeddings_file(o.embeddings);
  if (o.flags.workers) ck.config.workers = *o.flags.workers;

  LoadedModel lm;
  lm.graph = std::make_unique<KnowledgeGraph>(load_dataset(dir));
  lm.store = std::make_unique<EmbeddingStore>(make_store(*lm.graph, o.embeddings, ck.config));
  auto vocab = PathVocabulary::build(*lm.graph, ck.config.max_path_len);
  lm.model = std::make_unique<Model>(*lm.graph, *lm.store, std::move(vocab), ck.config,
                                     std::move(ck.params));
  return lm;
}

// ------------------------------------------------------------------ eval

int cmd_eval(Options& o) {
  BucketMode mode;
  try {
    mode = parse_bucket_mode(o.buckets);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  auto lm = load_model(o);
  std::span<const Triplet> split;
  if (o.split == "test") split = lm.graph->test();
  else if (o.split == "valid") split = lm.graph->valid();
  else if (o.split == "train") split = lm.graph->train();
  else throw UsageError("--split must be test, valid or train");

  const auto report = evaluate(split, *lm.model, mode);
  std::cout << report_table(report);
  std::cout << report_json(report) << "\n";
  if (o.out_given) {
    fs::create_directories(o.out);
    std::ofstream(fs::path(o.out) / "eval.json") << report_json(report) << "\n";
  }
  return kExitOk;
}

// --------------------------------------------------------------- predict

int cmd_predict(Options& o) {
  auto lm = load_model(o);
  const auto& ents = lm.graph->entities();
  std::string missing;
  for (const auto* name : {&o.head, &o.tail}) {
    if (!ents.find(*name)) missing += (missing.empty() ? "" : ", ") + ("'" + *name + "'");
  }
  if (!missing.empty()) throw LookupError("unknown entity: " + missing);
  const auto top = lm.model->predict(ents.at(o.head), ents.at(o.tail), o.top_k);
  std::printf("%4s  %-40s %10s\n", "rank", "relation", "prob");
  for (std::size_t i = 0; i < top.size(); ++i) {
    std::printf("%4zu  %-40s %10.6f\n", i + 1, lm.graph->relations().name(top[i].first).c_str(),
                top[i].second);
  }
  return kExitOk;
}

// ---------------------------------------------------------------- ablate

int cmd_ablate(Options& o) {
  const auto base_cfg = resolve_config(o);
  const auto dir = require_dataset(o);
  require_embeddings_file(o.embeddings);
  if (o.repeats == 0) throw UsageError("--repeats must be positive");
  const auto g = load_dataset(dir);
  if (g.test().empty()) throw UsageError("ablation needs a nonempty test split");
  const auto store = make_store(g, o.embeddings, base_cfg);

  static constexpr std::uint8_t kMasks[] = {1, 2, 4, 3, 5, 6, 7};
  json rows = json::array();
  std::printf("%-22s %8s %8s %8s\n", "branches", "MRR", "H@1", "H@3");
  for (auto bits : kMasks) {
    double mrr = 0, h1 = 0, h3 = 0;
    for (std::size_t r = 0; r < o.repeats; ++r) {
      auto cfg = base_cfg;
      cfg.branches = BranchMask(bits);
      cfg.seed = base_cfg.seed + r;
      const auto result = train(g, store, cfg);
      const auto rep = evaluate(g.test(), result.model).overall;
      mrr += rep.mrr;
      h1 += rep.hits1;
      h3 += rep.hits3;
    }
    const double n = static_cast<double>(o.repeats);
    const auto label = BranchMask(bits).to_string();
    std::printf("%-22s %8.4f %8.4f %8.4f\n", label.c_str(), mrr / n, h1 / n, h3 / n);
    std::fflush(stdout);
    rows.push_back({{"branches", label}, {"mrr", mrr / n}, {"hits1", h1 / n}, {"hits3", h3 / n},
                    {"repeats", o.repeats}});
  }
  fs::create_directories(o.out);
  std::ofstream(fs::path(o.out) / "ablation.json") << rows.dump(2) << "\n";
  return kExitOk;
}

// ----------------------------------------------------------------- synth

int cmd_synth(Options& o, const SyntheticOptions& so) {
  if (!o.out_given) throw UsageError("--out is required");
  const auto data = generate_synthetic(so);
  write_synthetic(data, o.out);
  std::printf("wrote %s: train=%zu valid=%zu test=%zu entities=%zu\n", o.out.c_str(),
              data.train.size(), data.valid.size(), data.test.size(), data.embeddings.size());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"muse: multi-knowledge relation prediction for knowledge graphs"};
  app.require_subcommand(1);
  Options o;
  SyntheticOptions so;

  auto out_opt = [&](CLI::App* cmd) {
    cmd->add_option_function<std::string>(
        "--out",
        [&](const std::string& v) {
          o.out = v;
          o.out_given = true;
        },
        "Output directory");
  };

  auto* stats = app.add_subcommand("stats", "Dataset counts, degree statistics and LIS share");
  stats->add_option("--dataset", o.dataset, "Directory with train/valid/test.txt");
  stats->add_flag("--json", o.json_output, "Emit JSON");

  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  train_cmd->add_option("--dataset", o.dataset, "Directory with train/valid/test.txt");
  train_cmd->add_option("--embeddings", o.embeddings, "MUSEEMB1 embedding file");
  train_cmd->add_option("--config", o.config_file, "JSON config file (flags override it)");
  train_cmd->add_option("--preset", o.preset, "FB15k-237, WN18, WN18RR or NELL995 settings");
  out_opt(train_cmd);
  add_train_flags(train_cmd, o.flags);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint (default <out>/model.ckpt)");
  eval_cmd->add_option("--dataset", o.dataset, "Dataset directory (default: from checkpoint)");
  eval_cmd->add_option("--embeddings", o.embeddings, "Embedding file (default: from checkpoint)");
  eval_cmd->add_option("--buckets", o.buckets, "none | lis_ris | degree | path_count");
  eval_cmd->add_option("--split", o.split, "test | valid | train");
  eval_cmd->add_option("--workers", o.flags.workers, "Worker threads");
  out_opt(eval_cmd);

  auto* predict_cmd = app.add_subcommand("predict", "Rank relations for one (head, tail) pair");
  predict_cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint (default <out>/model.ckpt)");
  predict_cmd->add_option("--dataset", o.dataset, "Dataset directory (default: from checkpoint)");
  predict_cmd->add_option("--embeddings", o.embeddings, "Embedding file (default: from checkpoint)");
  predict_cmd->add_option("--head", o.head, "Head entity name")->required();
  predict_cmd->add_option("--tail", o.tail, "Tail entity name")->required();
  predict_cmd->add_option("--top-k", o.top_k, "Number of relations to list");
  out_opt(predict_cmd);

  auto* ablate_cmd = app.add_subcommand("ablate", "Train and test all 7 branch subsets");
  ablate_cmd->add_option("--dataset", o.dataset, "Directory with train/valid/test.txt");
  ablate_cmd->add_option("--embeddings", o.embeddings, "MUSEEMB1 embedding file");
  ablate_cmd->add_option("--config", o.config_file, "JSON config file (flags override it)");
  ablate_cmd->add_option("--preset", o.preset, "FB15k-237, WN18, WN18RR or NELL995 settings");
  ablate_cmd->add_option("--repeats", o.repeats, "Seeds per subset (seed, seed+1, ...)");
  out_opt(ablate_cmd);
  add_train_flags(ablate_cmd, o.flags);

  auto* synth_cmd = app.add_subcommand("synth", "Write the synthetic typed/compositional KG");
  out_opt(synth_cmd);
  synth_cmd->add_option("--seed", so.seed, "Generator seed");
  synth_cmd->add_option("--entities", so.entities, "Number of entities");
  synth_cmd->add_option("--base-degree", so.base_out_degree, "Base edges drawn per entity");
  synth_cmd->add_option("--noise", so.embedding_noise, "Embedding noise standard deviation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*stats) return cmd_stats(o);
    if (*train_cmd) return cmd_train(o);
    if (*eval_cmd) return cmd_eval(o);
    if (*predict_cmd) return cmd_predict(o);
    if (*ablate_cmd) return cmd_ablate(o);
    if (*synth_cmd) return cmd_synth(o, so);
  } catch (const UsageError& e) {
    std::cerr << "muse: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "muse: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
