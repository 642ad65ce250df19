#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fednewsrec/dataset.h"
#include "fednewsrec/hyper_params.h"
#include "fednewsrec/metrics.h"
#include "fednewsrec/model_params.h"

namespace fednewsrec {

// Scores every impression with the model in inference mode and averages the
// impression metrics. Each distinct news id is encoded once. Impressions with
// an empty history are skipped and counted.
metrics::MetricsReport evaluate(const ModelParams& params, const HyperParams& hp,
                                const Catalog& catalog, const std::vector<Impression>& impressions);

using CandidateScorer =
    std::function<double(const Impression& impression, const Candidate& candidate)>;

// Same averaging with an arbitrary scoring function.
metrics::MetricsReport evaluate_with(const std::vector<Impression>& impressions,
                                     const CandidateScorer& scorer);

}  // namespace fednewsrec
