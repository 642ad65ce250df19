#include "fednewsrec/evaluate.h"

#include <algorithm>
#include <unordered_map>

#include "fednewsrec/model.h"

namespace fednewsrec {

metrics::MetricsReport evaluate(const ModelParams& params, const HyperParams& hp,
                                const Catalog& catalog,
                                const std::vector<Impression>& impressions) {
  const Rng unused(0);
  std::unordered_map<std::string, Tensor> cache;
  auto news_vec = [&](const std::string& id) -> const Tensor& {
    auto it = cache.find(id);
    if (it == cache.end()) {
      it = cache.emplace(id, encode_news(params, hp, catalog.at(id).token_ids, unused, false))
               .first;
    }
    return it->second;
  };

  const std::size_t d = hp.news_dim();
  metrics::MetricsAccumulator acc;
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& imp : impressions) {
    if (imp.history.empty()) {
      acc.skip();
      continue;
    }
    const std::size_t len = std::min(imp.history.size(), hp.history_len);
    Tensor history({len, d});
    for (std::size_t j = 0; j < len; ++j) {
      const Tensor& v = news_vec(imp.history[imp.history.size() - len + j]);
      std::copy(v.values().begin(), v.values().end(), history.row(j).begin());
    }
    const Tensor u = encode_user(params, hp, history, unused, false);
    scores.clear();
    labels.clear();
    for (const auto& c : imp.candidates) {
      scores.push_back(score(u, news_vec(c.news_id)));
      labels.push_back(c.clicked ? 1 : 0);
    }
    acc.add(scores, labels);
  }
  return acc.report();
}

metrics::MetricsReport evaluate_with(const std::vector<Impression>& impressions,
                                     const CandidateScorer& scorer) {
  metrics::MetricsAccumulator acc;
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& imp : impressions) {
    if (imp.history.empty()) {
      acc.skip();
      continue;
    }
    scores.clear();
    labels.clear();
    for (const auto& c : imp.candidates) {
      scores.push_back(scorer(imp, c));
      labels.push_back(c.clicked ? 1 : 0);
    }
    acc.add(scores, labels);
  }
  return acc.report();
}

}  // namespace fednewsrec
