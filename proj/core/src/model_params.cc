#include "fednewsrec/model_params.h"

#include <algorithm>
#include <cmath>

#include "fednewsrec/error.h"

namespace fednewsrec {
namespace {

constexpr std::array<std::string_view, kNumDense> kNames = {
    "news.cnn.weight",       "news.cnn.bias",       "news.self_attn.query",
    "news.self_attn.key",    "news.self_attn.value", "news.pool.proj",
    "news.pool.query",       "user.self_attn.query", "user.self_attn.key",
    "user.self_attn.value",  "user.pool.proj",       "user.pool.query",
    "user.gru.w_z",          "user.gru.w_r",         "user.gru.w_h",
    "user.gru.u_z",          "user.gru.u_r",         "user.gru.u_h",
    "user.gru.b_z",          "user.gru.b_r",         "user.gru.b_h",
    "user.combine.proj",     "user.combine.query",
};

std::size_t count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

}  // namespace

std::string_view param_name(ParamId id) { return kNames.at(static_cast<std::size_t>(id)); }

ParamLayout make_layout(const HyperParams& hp) {
  hp.validate();
  const std::size_t e = hp.word_embed_dim;
  const std::size_t f = hp.cnn_filters;
  const std::size_t d = hp.news_dim();
  const std::size_t q = hp.attn_query_dim;
  const std::size_t g = hp.gru_units;

  std::array<std::vector<std::size_t>, kNumDense> shapes;
  auto set = [&](ParamId id, std::vector<std::size_t> s) {
    shapes[static_cast<std::size_t>(id)] = std::move(s);
  };
  set(ParamId::kCnnWeight, {hp.cnn_window * e, f});
  set(ParamId::kCnnBias, {f});
  set(ParamId::kNewsQuery, {f, d});
  set(ParamId::kNewsKey, {f, d});
  set(ParamId::kNewsValue, {f, d});
  set(ParamId::kNewsPoolProj, {d, q});
  set(ParamId::kNewsPoolQuery, {q});
  set(ParamId::kUserQuery, {d, d});
  set(ParamId::kUserKey, {d, d});
  set(ParamId::kUserValue, {d, d});
  set(ParamId::kUserPoolProj, {d, q});
  set(ParamId::kUserPoolQuery, {q});
  set(ParamId::kGruWz, {d, g});
  set(ParamId::kGruWr, {d, g});
  set(ParamId::kGruWh, {d, g});
  set(ParamId::kGruUz, {g, g});
  set(ParamId::kGruUr, {g, g});
  set(ParamId::kGruUh, {g, g});
  set(ParamId::kGruBz, {g});
  set(ParamId::kGruBr, {g});
  set(ParamId::kGruBh, {g});
  set(ParamId::kCombineProj, {d, q});
  set(ParamId::kCombineQuery, {q});

  ParamLayout layout;
  layout.reserve(kNumDense + 1);
  layout.push_back({std::string(kEmbeddingName), {hp.vocab_size, e}});
  for (std::size_t i = 0; i < kNumDense; ++i) {
    layout.push_back({std::string(kNames[i]), shapes[i]});
  }
  return layout;
}

std::size_t embedding_param_count(const ParamLayout& layout) {
  return count(layout.front().shape);
}

std::size_t dense_param_count(const ParamLayout& layout) {
  std::size_t n = 0;
  for (std::size_t i = 1; i < layout.size(); ++i) n += count(layout[i].shape);
  return n;
}

ModelParams::ModelParams(const HyperParams& hp)
    : layout_(make_layout(hp)), embedding_(layout_.front().shape) {
  dense_.reserve(kNumDense);
  for (std::size_t i = 1; i < layout_.size(); ++i) dense_.emplace_back(layout_[i].shape);
}

ModelParams ModelParams::initialize(const HyperParams& hp, Rng rng) {
  ModelParams params(hp);
  Rng emb_rng = rng.split(0);
  for (double& v : params.embedding_.values()) {
    v = hp.init_scale * (2.0 * emb_rng.uniform() - 1.0);
  }
  for (std::size_t i = 0; i < kNumDense; ++i) {
    Tensor& t = params.dense_[i];
    if (t.rank() != 2) continue;  // biases and query vectors start at zero
    const double limit = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
    Rng r = rng.split(i + 1);
    for (double& v : t.values()) v = limit * (2.0 * r.uniform() - 1.0);
  }
  // Query vectors: U(-b, b) with the Glorot bound of a [q x 1] matrix.
  for (ParamId id : {ParamId::kNewsPoolQuery, ParamId::kUserPoolQuery, ParamId::kCombineQuery}) {
    Tensor& t = params[id];
    const double limit = std::sqrt(6.0 / static_cast<double>(t.size() + 1));
    Rng r = rng.split(1000 + static_cast<std::size_t>(id));
    for (double& v : t.values()) v = limit * (2.0 * r.uniform() - 1.0);
  }
  return params;
}

std::size_t ModelParams::parameter_count() const {
  return embedding_param_count(layout_) + dense_param_count(layout_);
}

bool ModelParams::all_finite() const {
  return embedding_.all_finite() &&
         std::all_of(dense_.begin(), dense_.end(), [](const Tensor& t) { return t.all_finite(); });
}

GradientSet GradientSet::zeros_like(const ModelParams& params) {
  GradientSet g;
  g.dense.reserve(kNumDense);
  for (const Tensor& t : params.dense()) g.dense.push_back(Tensor::zeros_like(t));
  g.vocab_size = params.embedding().rows();
  g.embed_dim = params.embedding().cols();
  return g;
}

std::vector<double>& GradientSet::embedding_row(std::uint32_t row) {
  if (row >= vocab_size) {
    throw DataError("embedding row " + std::to_string(row) + " outside vocabulary of " +
                    std::to_string(vocab_size));
  }
  auto [it, inserted] = embedding_rows.try_emplace(row);
  if (inserted) it->second.assign(embed_dim, 0.0);
  return it->second;
}

bool GradientSet::layout_matches(const GradientSet& other) const {
  if (vocab_size != other.vocab_size || embed_dim != other.embed_dim ||
      dense.size() != other.dense.size()) {
    return false;
  }
  for (std::size_t i = 0; i < dense.size(); ++i) {
    if (dense[i].shape() != other.dense[i].shape()) return false;
  }
  return true;
}

bool GradientSet::layout_matches(const ModelParams& params) const {
  if (vocab_size != params.embedding().rows() || embed_dim != params.embedding().cols() ||
      dense.size() != params.dense().size()) {
    return false;
  }
  for (std::size_t i = 0; i < dense.size(); ++i) {
    if (dense[i].shape() != params.dense()[i].shape()) return false;
  }
  return true;
}

Tensor GradientSet::embedding_dense() const {
  Tensor out({vocab_size, embed_dim});
  for (const auto& [row, values] : embedding_rows) {
    std::copy(values.begin(), values.end(), out.row(row).begin());
  }
  return out;
}

void apply_update(ModelParams& params, const GradientSet& grad, double step) {
  if (!grad.layout_matches(params)) {
    throw ProtocolError("gradient layout does not match model layout");
  }
  for (std::size_t i = 0; i < grad.dense.size(); ++i) {
    auto dst = params.dense()[i].values();
    const auto src = grad.dense[i].values();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] -= step * src[j];
  }
  for (const auto& [row, values] : grad.embedding_rows) {
    auto dst = params.embedding().row(row);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] -= step * values[j];
  }
}

}  // namespace fednewsrec
