#include "muse/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <stdexcept>

#include <json.hpp>

namespace muse {

std::size_t rank_of_truth(const Prediction& pred, RelationId r) {
  if (r >= pred.ranked.size()) {
    throw std::out_of_range("rank_of_truth: relation id " + std::to_string(r) + " out of range");
  }
  const auto it = std::find(pred.ranked.begin(), pred.ranked.end(), r);
  return static_cast<std::size_t>(it - pred.ranked.begin()) + 1;
}

void RankSummary::add(std::size_t rank) {
  if (rank == 0) throw std::invalid_argument("ranks are 1-based");
  ++n;
  reciprocal_sum += 1.0 / static_cast<double>(rank);
  if (rank <= 1) ++hits1_count;
  if (rank <= 3) ++hits3_count;
}

void RankSummary::finalize() {
  if (n == 0) return;
  const double dn = static_cast<double>(n);
  mrr = reciprocal_sum / dn;
  hits1 = static_cast<double>(hits1_count) / dn;
  hits3 = static_cast<double>(hits3_count) / dn;
}

RankSummary summarize_ranks(std::span<const std::size_t> ranks) {
  RankSummary s;
  for (auto r : ranks) s.add(r);
  s.finalize();
  return s;
}

BucketMode parse_bucket_mode(std::string_view text) {
  if (text == "none") return BucketMode::kNone;
  if (text == "lis_ris" || text == "lis-ris") return BucketMode::kLisRis;
  if (text == "degree") return BucketMode::kDegree;
  if (text == "path_count" || text == "path-count") return BucketMode::kPathCount;
  throw std::invalid_argument("unknown bucket mode '" + std::string(text) +
                              "' (expected none, lis_ris, degree, path_count)");
}

std::string_view to_string(BucketMode mode) {
  switch (mode) {
    case BucketMode::kNone:
      return "none";
    case BucketMode::kLisRis:
      return "lis_ris";
    case BucketMode::kDegree:
      return "degree";
    case BucketMode::kPathCount:
      return "path_count";
  }
  return "none";
}

std::string count_bin(std::size_t count) {
  return count >= 10 ? std::string("10+") : std::to_string(count);
}

namespace {

std::vector<std::string> default_order(BucketMode mode) {
  switch (mode) {
    case BucketMode::kLisRis:
      return {"LIS", "RIS"};
    case BucketMode::kDegree:
    case BucketMode::kPathCount: {
      std::vector<std::string> out;
      for (std::size_t i = 0; i <= 10; ++i) out.push_back(count_bin(i));
      return out;
    }
    case BucketMode::kNone:
      break;
  }
  return {};
}

}  // namespace

EvalReport build_report(std::span<const std::size_t> ranks, std::span<const std::string> labels,
                        BucketMode mode, std::span<const std::string> order) {
  if (ranks.empty()) throw std::invalid_argument("evaluation split is empty");
  EvalReport report;
  report.mode = mode;
  report.overall = summarize_ranks(ranks);
  if (mode == BucketMode::kNone) return report;
  if (labels.size() != ranks.size()) throw std::invalid_argument("one label per rank required");

  std::vector<std::string> seen(order.begin(), order.end());
  std::map<std::string, RankSummary> acc;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (std::find(seen.begin(), seen.end(), labels[i]) == seen.end()) seen.push_back(labels[i]);
    acc[labels[i]].add(ranks[i]);
  }
  for (const auto& label : seen) {
    auto it = acc.find(label);
    if (it == acc.end()) continue;
    it->second.finalize();
    report.buckets.push_back({label, it->second});
  }
  return report;
}

EvalReport evaluate(std::span<const Triplet> split, const Model& model, BucketMode mode) {
  if (split.empty()) throw std::invalid_argument("evaluation split is empty");
  const auto& g = model.graph();
  std::vector<std::size_t> ranks(split.size());
  std::vector<std::string> labels(split.size());
  const auto lis = model.config().lis_threshold;
  parallel_for(split.size(), model.config().workers, [&](std::size_t i) {
    const auto& t = split[i];
    const auto plan = model.plan(make_query(g, t));
    ranks[i] = rank_of_truth(model.forward(plan), t.relation);
    const auto min_degree =
        std::min(g.degree(t.head, lis).degree, g.degree(t.tail, lis).degree);
    switch (mode) {
      case BucketMode::kLisRis:
        labels[i] = std::string(to_string(min_degree < lis ? Bucket::kLIS : Bucket::kRIS));
        break;
      case BucketMode::kDegree:
        labels[i] = count_bin(min_degree);
        break;
      case BucketMode::kPathCount:
        labels[i] = count_bin(plan.path_ids.size());
        break;
      case BucketMode::kNone:
        break;
    }
  });
  const auto order = default_order(mode);
  return build_report(ranks, labels, mode, order);
}

namespace {

nlohmann::json summary_json(const RankSummary& s) {
  return {{"n", s.n}, {"mrr", s.mrr}, {"hits1", s.hits1}, {"hits3", s.hits3}};
}

}  // namespace

std::string report_json(const EvalReport& report) {
  nlohmann::json j;
  j["mode"] = std::string(to_string(report.mode));
  j["overall"] = summary_json(report.overall);
  j["buckets"] = nlohmann::json::array();
  for (const auto& b : report.buckets) {
    auto entry = summary_json(b.metrics);
    entry["label"] = b.label;
    j["buckets"].push_back(std::move(entry));
  }
  return j.dump();
}

std::string report_table(const EvalReport& report) {
  std::string out;
  char line[128];
  std::snprintf(line, sizeof line, "%-10s %8s %8s %8s %8s\n", "bucket", "n", "MRR", "H@1", "H@3");
  out += line;
  auto row = [&](const std::string& label, const RankSummary& s) {
    std::snprintf(line, sizeof line, "%-10s %8zu %8.4f %8.4f %8.4f\n", label.c_str(), s.n, s.mrr,
                  s.hits1, s.hits3);
    out += line;
  };
  for (const auto& b : report.buckets) row(b.label, b.metrics);
  row("overall", report.overall);
  return out;
}

}  // namespace muse
