#include "muse/config.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

#include <json.hpp>

namespace muse {

using nlohmann::json;

std::string_view to_string(Branch b) {
  switch (b) {
    case Branch::kPrior:
      return "prior";
    case Branch::kContext:
      return "context";
    case Branch::kPath:
      return "path";
  }
  return "?";
}

BranchMask BranchMask::parse(std::string_view text) {
  std::uint8_t bits = 0;
  while (!text.empty()) {
    const auto comma = text.find(',');
    std::string token(text.substr(0, comma));
    std::erase_if(token, [](unsigned char c) { return std::isspace(c); });
    std::transform(token.begin(), token.end(), token.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (token == "all") {
      bits = 7;
    } else if (token == "prior") {
      bits |= static_cast<std::uint8_t>(Branch::kPrior);
    } else if (token == "context") {
      bits |= static_cast<std::uint8_t>(Branch::kContext);
    } else if (token == "path") {
      bits |= static_cast<std::uint8_t>(Branch::kPath);
    } else if (!token.empty()) {
      throw std::invalid_argument("unknown branch '" + token +
                                  "' (expected prior, context, path or all)");
    }
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return BranchMask(bits);
}

int BranchMask::count() const {
  return ((bits_ >> 0) & 1) + ((bits_ >> 1) & 1) + ((bits_ >> 2) & 1);
}

std::string BranchMask::to_string() const {
  std::string out;
  for (auto b : kAllBranches) {
    if (!has(b)) continue;
    if (!out.empty()) out += ',';
    out += muse::to_string(b);
  }
  return out;
}

void TrainConfig::validate() const {
  auto positive = [](auto v, const char* name) {
    if (!(v > 0)) throw std::invalid_argument(std::string(name) + " must be positive");
  };
  positive(learning_rate, "learning_rate");
  positive(batch_size, "batch_size");
  positive(epochs, "epochs");
  positive(hidden, "hidden");
  positive(k_iters, "k_iters");
  positive(context_layers, "context_layers");
  positive(max_path_len, "max_path_len");
  positive(workers, "workers");
  positive(fallback_dim, "fallback_dim");
  positive(epsilon, "epsilon");
  if (branches.empty()) throw std::invalid_argument("branch mask must be nonempty");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
}

std::optional<TrainConfig> dataset_preset(std::string_view dataset_name) {
  std::string key(dataset_name);
  std::transform(key.begin(), key.end(), key.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  struct Row {
    const char* name;
    std::size_t context_layers;
    std::size_t max_path_len;
    double lr;
  };
  static constexpr Row kRows[] = {
      {"fb15k-237", 2, 3, 1e-4},
      {"wn18", 3, 3, 1e-4},
      {"wn18rr", 3, 4, 5e-4},
      {"nell995", 2, 5, 1e-4},
  };
  for (const auto& row : kRows) {
    if (key == row.name) {
      TrainConfig cfg;
      cfg.context_layers = row.context_layers;
      cfg.max_path_len = row.max_path_len;
      cfg.learning_rate = row.lr;
      return cfg;
    }
  }
  return std::nullopt;
}

std::string to_json(const TrainConfig& cfg) {
  json j;
  j["learning_rate"] = cfg.learning_rate;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["hidden"] = cfg.hidden;
  j["k_iters"] = cfg.k_iters;
  j["context_layers"] = cfg.context_layers;
  j["max_path_len"] = cfg.max_path_len;
  j["seed"] = cfg.seed;
  j["branches"] = cfg.branches.to_string();
  j["workers"] = cfg.workers;
  j["keep_best_valid"] = cfg.keep_best_valid;
  j["beta1"] = cfg.beta1;
  j["beta2"] = cfg.beta2;
  j["epsilon"] = cfg.epsilon;
  j["branch_weights"] = cfg.branch_weights;
  j["fallback_dim"] = cfg.fallback_dim;
  j["fallback_seed"] = cfg.fallback_seed;
  j["lis_threshold"] = cfg.lis_threshold;
  return j.dump();
}

TrainConfig config_from_json(std::string_view text, TrainConfig cfg) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    const auto& v = it.value();
    try {
      if (k == "learning_rate") cfg.learning_rate = v.get<double>();
      else if (k == "batch_size") cfg.batch_size = v.get<std::size_t>();
      else if (k == "epochs") cfg.epochs = v.get<std::size_t>();
      else if (k == "hidden") cfg.hidden = v.get<std::size_t>();
      else if (k == "k_iters") cfg.k_iters = v.get<std::size_t>();
      else if (k == "context_layers") cfg.context_layers = v.get<std::size_t>();
      else if (k == "max_path_len") cfg.max_path_len = v.get<std::size_t>();
      else if (k == "seed") cfg.seed = v.get<std::uint64_t>();
      else if (k == "branches") cfg.branches = BranchMask::parse(v.get<std::string>());
      else if (k == "workers") cfg.workers = v.get<std::size_t>();
      else if (k == "keep_best_valid") cfg.keep_best_valid = v.get<bool>();
      else if (k == "beta1") cfg.beta1 = v.get<double>();
      else if (k == "beta2") cfg.beta2 = v.get<double>();
      else if (k == "epsilon") cfg.epsilon = v.get<double>();
      else if (k == "branch_weights") cfg.branch_weights = v.get<std::array<double, 3>>();
      else if (k == "fallback_dim") cfg.fallback_dim = v.get<std::size_t>();
      else if (k == "fallback_seed") cfg.fallback_seed = v.get<std::uint64_t>();
      else if (k == "lis_threshold") cfg.lis_threshold = v.get<std::uint32_t>();
      else throw std::invalid_argument("config: unknown key '" + k + "'");
    } catch (const json::exception& e) {
      throw std::invalid_argument("config: bad value for '" + k + "': " + e.what());
    }
  }
  return cfg;
}

}  // namespace muse
