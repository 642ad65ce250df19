#pragma once

// News encoder, user encoder, dot-product scoring and the impression-level
// softmax ranking loss, with the analytic reverse pass over all parameters.
//
// Randomness: dropout masks are drawn from streams split off the Rng passed
// in, never from shared state. Inside user_loss/user_gradient each distinct
// title gets stream split(0).split(slot) (slot = first-seen order over the
// samples) and sample i's user encoder gets split(1).split(i). Loss and
// gradient therefore see identical masks for identical (samples, rng).

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fednewsrec/hyper_params.h"
#include "fednewsrec/model_params.h"
#include "fednewsrec/ops.h"
#include "fednewsrec/rng.h"
#include "fednewsrec/tensor.h"

namespace fednewsrec {

using TokenIds = std::vector<std::uint32_t>;

// One clicked news with H non-clicked news from the same impression, plus the
// user's click history before that impression (oldest first).
struct TrainingSample {
  std::vector<TokenIds> history;
  TokenIds positive;
  std::vector<TokenIds> negatives;

  bool operator==(const TrainingSample&) const = default;
};

struct NewsForward {
  TokenIds tokens;
  nn::ConvCache conv;
  std::vector<double> conv_mask;
  nn::AttentionCache attn;
  std::vector<double> attn_mask;
  nn::PoolCache pool;
};

struct UserForward {
  nn::AttentionCache attn;
  std::vector<double> attn_mask;
  nn::PoolCache pool;
  nn::GruSequenceCache gru;
  nn::PoolCache combine;
};

// Embedding -> CNN -> multi-head self-attention -> attentive pooling.
// Returns a vector of num_heads*head_dim values.
Tensor encode_news(const ModelParams& params, const HyperParams& hp,
                   std::span<const std::uint32_t> title, Rng rng, bool training,
                   NewsForward* cache = nullptr);

// history_vecs rows are news vectors, oldest first. Long-term interest is
// attentive pooling over self-attention outputs, short-term interest is the
// final GRU state, and the two are combined by additive attention.
Tensor encode_user(const ModelParams& params, const HyperParams& hp,
                   const Tensor& history_vecs, Rng rng, bool training,
                   UserForward* cache = nullptr);

double score(const Tensor& user, const Tensor& news);

// -log softmax(scores)[0], computed with max subtraction.
double ranking_loss(std::span<const double> scores);

double sample_loss(const ModelParams& params, const HyperParams& hp,
                   const TrainingSample& sample, Rng rng, bool training);

// Unnormalised sum of per-sample losses.
double user_loss(const ModelParams& params, const HyperParams& hp,
                 std::span<const TrainingSample> samples, Rng rng, bool training);

struct LossAndGradient {
  double loss = 0.0;
  GradientSet gradient;
};

LossAndGradient user_loss_and_gradient(const ModelParams& params, const HyperParams& hp,
                                       std::span<const TrainingSample> samples, Rng rng,
                                       bool training);

// d(user_loss)/d(params). Embedding rows are present exactly for the token
// ids occurring in the samples; sample_weight = samples.size().
GradientSet user_gradient(const ModelParams& params, const HyperParams& hp,
                          std::span<const TrainingSample> samples, Rng rng, bool training);

}  // namespace fednewsrec
