#include "fednewsrec/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <vector>

#include "fednewsrec/error.h"

namespace fednewsrec::metrics {
namespace {

void check_lengths(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ShapeError("metric inputs differ in length: " + std::to_string(scores.size()) +
                     " scores, " + std::to_string(labels.size()) + " labels");
  }
}

// Candidate indices by descending score, ties by ascending index.
std::vector<std::size_t> ranking(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::string fixed(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12f", v);
  return buf;
}

}  // namespace

std::optional<double> auc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels);
  const std::size_t n = scores.size();
  const std::size_t positives =
      static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](int l) { return l > 0; }));
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;

  // Rank-sum with midranks for ties.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) {
      if (labels[order[t]] > 0) positive_rank_sum += midrank;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(positives);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

std::optional<double> mrr(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels);
  const auto order = ranking(scores);
  double total = 0.0;
  std::size_t positives = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] > 0) {
      total += 1.0 / static_cast<double>(rank + 1);
      ++positives;
    }
  }
  if (positives == 0) return std::nullopt;
  return total / static_cast<double>(positives);
}

std::optional<double> ndcg_at_k(std::span<const double> scores, std::span<const int> labels,
                                std::size_t k) {
  check_lengths(scores, labels);
  if (k == 0) throw ConfigError("ndcg cut-off k must be >= 1");
  if (std::none_of(labels.begin(), labels.end(), [](int l) { return l > 0; })) {
    return std::nullopt;
  }
  auto gain = [](int label) { return std::exp2(static_cast<double>(label)) - 1.0; };
  auto discount = [](std::size_t rank) { return 1.0 / std::log2(static_cast<double>(rank) + 2.0); };

  const auto order = ranking(scores);
  double dcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, order.size()); ++r) {
    dcg += gain(labels[order[r]]) * discount(r);
  }
  std::vector<int> ideal(labels.begin(), labels.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, ideal.size()); ++r) idcg += gain(ideal[r]) * discount(r);
  return dcg / idcg;
}

void MetricsAccumulator::add(std::span<const double> scores, std::span<const int> labels) {
  if (auto v = auc(scores, labels)) {
    auc_ += *v;
    ++auc_n_;
  } else {
    ++skipped_;
  }
  if (auto v = mrr(scores, labels)) {
    mrr_ += *v;
    ndcg5_ += *ndcg_at_k(scores, labels, 5);
    ndcg10_ += *ndcg_at_k(scores, labels, 10);
    ++rank_n_;
  }
}

MetricsReport MetricsAccumulator::report() const {
  MetricsReport r;
  if (auc_n_) r.auc = auc_ / static_cast<double>(auc_n_);
  if (rank_n_) {
    const double n = static_cast<double>(rank_n_);
    r.mrr = mrr_ / n;
    r.ndcg5 = ndcg5_ / n;
    r.ndcg10 = ndcg10_ / n;
  }
  r.skipped = skipped_;
  r.scored = auc_n_;
  return r;
}

std::string csv_row(std::size_t round, double loss, const MetricsReport& report) {
  return std::to_string(round) + "," + fixed(loss) + "," + fixed(report.auc) + "," +
         fixed(report.mrr) + "," + fixed(report.ndcg5) + "," + fixed(report.ndcg10) + "," +
         std::to_string(report.skipped);
}

}  // namespace fednewsrec::metrics
