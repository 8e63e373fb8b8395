#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "muse/kg.hpp"

namespace muse {

enum class Branch : std::uint8_t { kPrior = 1, kContext = 2, kPath = 4 };

inline constexpr std::array<Branch, 3> kAllBranches{Branch::kPrior, Branch::kContext,
                                                    Branch::kPath};

std::string_view to_string(Branch b);

/// Subset of {prior, context, path}; the active score branches.
class BranchMask {
 public:
  constexpr BranchMask() = default;
  constexpr explicit BranchMask(std::uint8_t bits) : bits_(bits & 7u) {}

  static constexpr BranchMask all() { return BranchMask(7); }

  /// Parses a comma list such as "prior,path" (also accepts "all").
  static BranchMask parse(std::string_view text);

  constexpr bool has(Branch b) const { return (bits_ & static_cast<std::uint8_t>(b)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint8_t bits() const { return bits_; }
  int count() const;
  std::string to_string() const;

  friend constexpr bool operator==(BranchMask, BranchMask) = default;

 private:
  std::uint8_t bits_ = 0;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 128;
  std::size_t epochs = 60;
  std::size_t hidden = 64;
  std::size_t k_iters = 2;
  std::size_t context_layers = 2;
  std::size_t max_path_len = 3;
  std::uint64_t seed = 0;
  BranchMask branches = BranchMask::all();
  std::size_t workers = 1;
  // Return the parameters of the epoch with the best validation H@1
  // (earliest on ties) instead of the last epoch. Needs a valid split.
  bool keep_best_valid = true;

  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Per-branch scalar on the fused logits (prior, context, path).
  std::array<double, 3> branch_weights{1.0, 1.0, 1.0};

  // Fallback embeddings when no embedding file is given.
  std::size_t fallback_dim = 64;
  std::uint64_t fallback_seed = 0;

  std::uint32_t lis_threshold = kDefaultLisThreshold;

  /// Throws std::invalid_argument naming the first bad field.
  void validate() const;
};

/// Published per-dataset settings (context layers, max path length, learning
/// rate) for FB15k-237, WN18, WN18RR and NELL995. Name match ignores case.
std::optional<TrainConfig> dataset_preset(std::string_view dataset_name);

/// Canonical JSON (sorted keys, no whitespace).
std::string to_json(const TrainConfig& cfg);

/// Overlays the keys present in `json` onto `base`. Unknown keys are an error.
TrainConfig config_from_json(std::string_view json, TrainConfig base = {});

}  // namespace muse
