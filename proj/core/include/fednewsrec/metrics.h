#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

namespace fednewsrec::metrics {

// Impression-level ranking metrics. An empty optional means the metric is
// undefined for this impression (no positive, or for AUC also no negative).
//
// Ties: AUC counts a tied positive/negative pair as 1/2. MRR and nDCG rank by
// descending score and break ties by the lower input index first.

std::optional<double> auc(std::span<const double> scores, std::span<const int> labels);
std::optional<double> mrr(std::span<const double> scores, std::span<const int> labels);
// Gain 2^label - 1, discount 1/log2(rank + 1), normalised by the ideal DCG@k.
std::optional<double> ndcg_at_k(std::span<const double> scores, std::span<const int> labels,
                                std::size_t k);

struct MetricsReport {
  double auc = 0.0;
  double mrr = 0.0;
  double ndcg5 = 0.0;
  double ndcg10 = 0.0;
  // Impressions that could not be scored for AUC (including those with no
  // usable history); the other metrics skip a subset of these.
  std::size_t skipped = 0;
  std::size_t scored = 0;
};

// Averages per-impression values uniformly over scoreable impressions.
class MetricsAccumulator {
 public:
  void add(std::span<const double> scores, std::span<const int> labels);
  void skip() { ++skipped_; }
  MetricsReport report() const;

 private:
  double auc_ = 0.0, mrr_ = 0.0, ndcg5_ = 0.0, ndcg10_ = 0.0;
  std::size_t auc_n_ = 0, rank_n_ = 0, skipped_ = 0;
};

inline constexpr const char* kCsvHeader = "round,loss,auc,mrr,ndcg5,ndcg10,skipped";

// One metrics CSV row. A NaN loss is written as "nan".
std::string csv_row(std::size_t round, double loss, const MetricsReport& report);

}  // namespace fednewsrec::metrics
