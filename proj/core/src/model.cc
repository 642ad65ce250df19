#include "fednewsrec/model.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "fednewsrec/error.h"

namespace fednewsrec {
namespace {

using nn::AttentionGrads;
using nn::AttentionWeights;
using nn::GruGrads;
using nn::GruWeights;

AttentionWeights news_attention(const ModelParams& p, const HyperParams& hp) {
  return {p[ParamId::kNewsQuery], p[ParamId::kNewsKey], p[ParamId::kNewsValue], hp.num_heads,
          hp.head_dim};
}

AttentionWeights user_attention(const ModelParams& p, const HyperParams& hp) {
  return {p[ParamId::kUserQuery], p[ParamId::kUserKey], p[ParamId::kUserValue], hp.num_heads,
          hp.head_dim};
}

GruWeights gru_weights(const ModelParams& p) {
  return {p[ParamId::kGruWz], p[ParamId::kGruWr], p[ParamId::kGruWh],
          p[ParamId::kGruUz], p[ParamId::kGruUr], p[ParamId::kGruUh],
          p[ParamId::kGruBz], p[ParamId::kGruBr], p[ParamId::kGruBh]};
}

GruGrads gru_grads(GradientSet& g) {
  return {g[ParamId::kGruWz], g[ParamId::kGruWr], g[ParamId::kGruWh],
          g[ParamId::kGruUz], g[ParamId::kGruUr], g[ParamId::kGruUh],
          g[ParamId::kGruBz], g[ParamId::kGruBr], g[ParamId::kGruBh]};
}

void apply_mask(Tensor& t, const std::vector<double>& mask) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] *= mask[i];
}

std::vector<double> masks_for(std::size_t n, const HyperParams& hp, Rng& rng, bool training) {
  if (!training) return std::vector<double>(n, 1.0);
  return nn::dropout_mask(n, hp.dropout_rate, rng);
}

void check_title(const HyperParams& hp, std::span<const std::uint32_t> title,
                 std::size_t vocab) {
  if (title.empty()) throw DataError("news title has no tokens");
  if (title.size() > hp.title_len) {
    throw DataError("news title has " + std::to_string(title.size()) +
                    " tokens, more than title_len " + std::to_string(hp.title_len));
  }
  for (std::uint32_t id : title) {
    if (id >= vocab) {
      throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " +
                      std::to_string(vocab));
    }
  }
}

Tensor news_backward(const ModelParams& params, const HyperParams& hp,
                     const NewsForward& fwd, std::span<const double> dout, GradientSet& g) {
  Tensor dm = nn::additive_attention_pool_backward(
      params[ParamId::kNewsPoolProj], params[ParamId::kNewsPoolQuery], fwd.pool, dout,
      g[ParamId::kNewsPoolProj], g[ParamId::kNewsPoolQuery]);
  apply_mask(dm, fwd.attn_mask);
  AttentionGrads ag{g[ParamId::kNewsQuery], g[ParamId::kNewsKey], g[ParamId::kNewsValue]};
  Tensor dc = nn::multihead_self_attention_backward(news_attention(params, hp), fwd.attn, dm, ag);
  apply_mask(dc, fwd.conv_mask);
  Tensor de = nn::conv1d_backward(params[ParamId::kCnnWeight], hp.cnn_window, fwd.conv, dc,
                                  g[ParamId::kCnnWeight], g[ParamId::kCnnBias]);
  for (std::size_t i = 0; i < fwd.tokens.size(); ++i) {
    nn::add_inplace(g.embedding_row(fwd.tokens[i]), de.row(i));
  }
  return de;
}

Tensor user_backward(const ModelParams& params, const HyperParams& hp, const UserForward& fwd,
                     std::span<const double> du, std::size_t history_len, GradientSet& g) {
  const std::size_t d = hp.news_dim();
  std::vector<double> du_long, du_short;
  if (hp.use_long_term && hp.use_short_term) {
    Tensor dstack = nn::additive_attention_pool_backward(
        params[ParamId::kCombineProj], params[ParamId::kCombineQuery], fwd.combine, du,
        g[ParamId::kCombineProj], g[ParamId::kCombineQuery]);
    du_long.assign(dstack.row(0).begin(), dstack.row(0).end());
    du_short.assign(dstack.row(1).begin(), dstack.row(1).end());
  } else if (hp.use_long_term) {
    du_long.assign(du.begin(), du.end());
  } else {
    du_short.assign(du.begin(), du.end());
  }

  Tensor dh({history_len, d});
  if (!du_long.empty()) {
    Tensor da = nn::additive_attention_pool_backward(
        params[ParamId::kUserPoolProj], params[ParamId::kUserPoolQuery], fwd.pool, du_long,
        g[ParamId::kUserPoolProj], g[ParamId::kUserPoolQuery]);
    apply_mask(da, fwd.attn_mask);
    AttentionGrads ag{g[ParamId::kUserQuery], g[ParamId::kUserKey], g[ParamId::kUserValue]};
    nn::add_inplace(dh, nn::multihead_self_attention_backward(user_attention(params, hp),
                                                              fwd.attn, da, ag));
  }
  if (!du_short.empty()) {
    GruGrads gg = gru_grads(g);
    nn::add_inplace(dh, nn::gru_sequence_backward(gru_weights(params), fwd.gru, du_short, gg));
  }
  return dh;
}

// Shared forward (and optional backward) over a user's samples, with one
// encoding per distinct title.
LossAndGradient run_samples(const ModelParams& params, const HyperParams& hp,
                            std::span<const TrainingSample> samples, Rng rng, bool training,
                            bool with_gradient) {
  if (samples.empty()) throw DataError("user has no training samples");

  std::map<TokenIds, std::size_t> slot_of;
  std::vector<const TokenIds*> titles;
  auto intern = [&](const TokenIds& t) {
    auto [it, inserted] = slot_of.try_emplace(t, titles.size());
    if (inserted) titles.push_back(&it->first);
    return it->second;
  };
  struct SampleSlots {
    std::vector<std::size_t> history;
    std::vector<std::size_t> candidates;  // positive first
  };
  std::vector<SampleSlots> slots(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const TrainingSample& s = samples[i];
    if (s.history.empty()) throw DataError("training sample has an empty click history");
    if (s.negatives.empty()) throw DataError("training sample has no negatives");
    for (const auto& h : s.history) slots[i].history.push_back(intern(h));
    slots[i].candidates.push_back(intern(s.positive));
    for (const auto& n : s.negatives) slots[i].candidates.push_back(intern(n));
  }

  const Rng news_root = rng.split(0);
  const Rng user_root = rng.split(1);
  const std::size_t d = hp.news_dim();

  std::vector<NewsForward> news_fwd(with_gradient ? titles.size() : 0);
  std::vector<Tensor> news_vecs;
  news_vecs.reserve(titles.size());
  for (std::size_t k = 0; k < titles.size(); ++k) {
    news_vecs.push_back(encode_news(params, hp, *titles[k], news_root.split(k), training,
                                    with_gradient ? &news_fwd[k] : nullptr));
  }

  LossAndGradient out;
  if (with_gradient) out.gradient = GradientSet::zeros_like(params);
  std::vector<Tensor> dnews;
  if (with_gradient) dnews.assign(titles.size(), Tensor({d}));

  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& hs = slots[i].history;
    Tensor history({hs.size(), d});
    for (std::size_t j = 0; j < hs.size(); ++j) {
      std::copy(news_vecs[hs[j]].values().begin(), news_vecs[hs[j]].values().end(),
                history.row(j).begin());
    }
    UserForward ufwd;
    const Tensor u = encode_user(params, hp, history, user_root.split(i), training,
                                 with_gradient ? &ufwd : nullptr);
    const auto& cs = slots[i].candidates;
    std::vector<double> scores(cs.size());
    for (std::size_t j = 0; j < cs.size(); ++j) scores[j] = score(u, news_vecs[cs[j]]);
    out.loss += ranking_loss(scores);
    if (!with_gradient) continue;

    // dL/ds = softmax(s) - onehot(positive)
    auto ds = nn::softmax(scores);
    ds[0] -= 1.0;
    std::vector<double> du(d, 0.0);
    for (std::size_t j = 0; j < cs.size(); ++j) {
      nn::add_inplace(du, news_vecs[cs[j]].values(), ds[j]);
      nn::add_inplace(dnews[cs[j]].values(), u.values(), ds[j]);
    }
    const Tensor dh = user_backward(params, hp, ufwd, du, hs.size(), out.gradient);
    for (std::size_t j = 0; j < hs.size(); ++j) {
      nn::add_inplace(dnews[hs[j]].values(), dh.row(j));
    }
  }

  if (with_gradient) {
    for (std::size_t k = 0; k < titles.size(); ++k) {
      news_backward(params, hp, news_fwd[k], dnews[k].values(), out.gradient);
    }
    out.gradient.sample_weight = samples.size();
  }
  return out;
}

}  // namespace

Tensor encode_news(const ModelParams& params, const HyperParams& hp,
                   std::span<const std::uint32_t> title, Rng rng, bool training,
                   NewsForward* cache) {
  const Tensor& emb = params.embedding();
  check_title(hp, title, emb.rows());
  const std::size_t e = emb.cols();
  Tensor x({title.size(), e});
  for (std::size_t i = 0; i < title.size(); ++i) {
    const auto row = emb.row(title[i]);
    std::copy(row.begin(), row.end(), x.row(i).begin());
  }

  Rng conv_rng = rng.split(0);
  Rng attn_rng = rng.split(1);
  NewsForward local;
  NewsForward& f = cache ? *cache : local;
  f.tokens.assign(title.begin(), title.end());

  Tensor c = nn::conv1d(params[ParamId::kCnnWeight], params[ParamId::kCnnBias], hp.cnn_window,
                        x, cache ? &f.conv : nullptr);
  f.conv_mask = masks_for(c.size(), hp, conv_rng, training);
  apply_mask(c, f.conv_mask);

  Tensor m = nn::multihead_self_attention(news_attention(params, hp), c,
                                          cache ? &f.attn : nullptr);
  f.attn_mask = masks_for(m.size(), hp, attn_rng, training);
  apply_mask(m, f.attn_mask);

  return nn::additive_attention_pool(params[ParamId::kNewsPoolProj],
                                     params[ParamId::kNewsPoolQuery], m,
                                     cache ? &f.pool : nullptr);
}

Tensor encode_user(const ModelParams& params, const HyperParams& hp,
                   const Tensor& history_vecs, Rng rng, bool training, UserForward* cache) {
  if (history_vecs.empty() || history_vecs.rank() != 2) {
    throw DataError("user history is empty");
  }
  if (history_vecs.rows() > hp.history_len) {
    throw DataError("user history has " + std::to_string(history_vecs.rows()) +
                    " clicks, more than history_len " + std::to_string(hp.history_len));
  }
  if (history_vecs.cols() != hp.news_dim()) {
    throw ShapeError("user history width " + std::to_string(history_vecs.cols()) +
                     " does not match news dimension " + std::to_string(hp.news_dim()));
  }
  UserForward local;
  UserForward& f = cache ? *cache : local;
  Rng attn_rng = rng.split(0);

  Tensor u_long, u_short;
  if (hp.use_long_term) {
    Tensor a = nn::multihead_self_attention(user_attention(params, hp), history_vecs,
                                            cache ? &f.attn : nullptr);
    f.attn_mask = masks_for(a.size(), hp, attn_rng, training);
    apply_mask(a, f.attn_mask);
    u_long = nn::additive_attention_pool(params[ParamId::kUserPoolProj],
                                         params[ParamId::kUserPoolQuery], a,
                                         cache ? &f.pool : nullptr);
  }
  if (hp.use_short_term) {
    u_short = nn::gru_sequence(gru_weights(params), history_vecs, cache ? &f.gru : nullptr);
  }
  if (!hp.use_short_term) return u_long;
  if (!hp.use_long_term) return u_short;

  const std::size_t d = hp.news_dim();
  Tensor stack({2, d});
  std::copy(u_long.values().begin(), u_long.values().end(), stack.row(0).begin());
  std::copy(u_short.values().begin(), u_short.values().end(), stack.row(1).begin());
  return nn::additive_attention_pool(params[ParamId::kCombineProj],
                                     params[ParamId::kCombineQuery], stack,
                                     cache ? &f.combine : nullptr);
}

double score(const Tensor& user, const Tensor& news) {
  if (user.size() != news.size()) {
    throw ShapeError("score: user " + shape_string(user.shape()) + " vs news " +
                     shape_string(news.shape()));
  }
  return nn::dot(user.values(), news.values());
}

double ranking_loss(std::span<const double> scores) {
  if (scores.empty()) throw ShapeError("ranking loss needs at least one score");
  const double mx = *std::max_element(scores.begin(), scores.end());
  double total = 0.0;
  for (double s : scores) total += std::exp(s - mx);
  return mx + std::log(total) - scores[0];
}

double sample_loss(const ModelParams& params, const HyperParams& hp,
                   const TrainingSample& sample, Rng rng, bool training) {
  return run_samples(params, hp, std::span(&sample, 1), rng, training, false).loss;
}

double user_loss(const ModelParams& params, const HyperParams& hp,
                 std::span<const TrainingSample> samples, Rng rng, bool training) {
  return run_samples(params, hp, samples, rng, training, false).loss;
}

LossAndGradient user_loss_and_gradient(const ModelParams& params, const HyperParams& hp,
                                       std::span<const TrainingSample> samples, Rng rng,
                                       bool training) {
  return run_samples(params, hp, samples, rng, training, true);
}

GradientSet user_gradient(const ModelParams& params, const HyperParams& hp,
                          std::span<const TrainingSample> samples, Rng rng, bool training) {
  return run_samples(params, hp, samples, rng, training, true).gradient;
}

}  // namespace fednewsrec
