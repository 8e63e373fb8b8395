#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "muse/kg.hpp"
#include "muse/model.hpp"

namespace muse {

/// 1-based position of `r` in `pred.ranked`.
std::size_t rank_of_truth(const Prediction& pred, RelationId r);

struct RankSummary {
  std::size_t n = 0;
  double reciprocal_sum = 0.0;
  std::size_t hits1_count = 0;
  std::size_t hits3_count = 0;
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;

  void add(std::size_t rank);
  void finalize();
};

/// MRR / H@1 / H@3 of a rank list. Ranks must be >= 1.
RankSummary summarize_ranks(std::span<const std::size_t> ranks);

enum class BucketMode { kNone, kLisRis, kDegree, kPathCount };

BucketMode parse_bucket_mode(std::string_view text);
std::string_view to_string(BucketMode mode);

struct BucketMetrics {
  std::string label;
  RankSummary metrics;
};

struct EvalReport {
  RankSummary overall;
  BucketMode mode = BucketMode::kNone;
  std::vector<BucketMetrics> buckets;  // ordered by bucket, empty buckets omitted
};

/// Count bins used by degree / path-count bucketing: "0".."9", "10+".
std::string count_bin(std::size_t count);

/// Groups precomputed ranks by label; labels keep first-seen order unless
/// `order` lists them.
EvalReport build_report(std::span<const std::size_t> ranks, std::span<const std::string> labels,
                        BucketMode mode, std::span<const std::string> order = {});

/// Ranks every triplet of `split` under `model`. Query bucket keys use the
/// smaller of the two endpoint degrees (LIS/RIS and degree modes) or the
/// number of enumerated head->tail paths (path-count mode).
EvalReport evaluate(std::span<const Triplet> split, const Model& model,
                    BucketMode mode = BucketMode::kNone);

std::string report_json(const EvalReport& report);
std::string report_table(const EvalReport& report);

}  // namespace muse
