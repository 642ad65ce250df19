#include "fednewsrec/model.h"

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "fednewsrec/error.h"
#include "oracles/gradcheck.h"
#include "oracles/reference.h"
#include "test_util.h"

namespace fednewsrec {
namespace {

namespace ref = oracle;

HyperParams desk() { return HyperParams::desk_scale(); }

ref::Model oracle_for(const ModelParams& p, const HyperParams& hp) {
  return {p, hp.num_heads, hp.head_dim, hp.cnn_window, hp.use_long_term, hp.use_short_term};
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  Tensor out({rows.size(), rows[0].size()});
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].values().begin(), rows[i].values().end(), out.row(i).begin());
  return out;
}

TEST(ModelParamsTest, LayoutStartsWithEmbedding) {
  const HyperParams hp = desk();
  const ParamLayout layout = make_layout(hp);
  ASSERT_EQ(layout.size(), kNumDense + 1);
  EXPECT_EQ(layout[0].name, kEmbeddingName);
  EXPECT_EQ(layout[0].shape, (std::vector<std::size_t>{hp.vocab_size, hp.word_embed_dim}));
  std::set<std::string> names;
  for (const auto& spec : layout) names.insert(spec.name);
  EXPECT_EQ(names.size(), layout.size());
}

TEST(ModelParamsTest, FullScaleCounts) {
  const ParamLayout layout = make_layout(HyperParams{});
  EXPECT_EQ(embedding_param_count(layout), 65000u * 300u);
  const double dense = static_cast<double>(dense_param_count(layout));
  EXPECT_NEAR(dense / 2.6e6, 1.0, 0.05) << dense;
}

TEST(ModelParamsTest, InitializationIsDeterministicAndFinite) {
  const HyperParams hp = desk();
  const ModelParams a = ModelParams::initialize(hp, Rng(3));
  const ModelParams b = ModelParams::initialize(hp, Rng(3));
  EXPECT_EQ(a, b);
  EXPECT_TRUE(a.all_finite());
  EXPECT_NE(a, ModelParams::initialize(hp, Rng(4)));
  for (double v : a.embedding().values()) EXPECT_LE(std::abs(v), hp.init_scale);
}

TEST(ModelParamsTest, MismatchedGruWidthRejected) {
  HyperParams hp = desk();
  hp.gru_units = hp.news_dim() + 1;
  EXPECT_THROW(hp.validate(), ConfigError);
}

// --- encode_news ---------------------------------------------------------------

TEST(EncodeNewsTest, ZeroParamsGiveZeroVector) {
  const HyperParams hp = desk();
  const ModelParams p(hp);
  const TokenIds title{1, 2, 3};
  const Tensor t = encode_news(p, hp, title, Rng(1), false);
  EXPECT_EQ(t.size(), hp.news_dim());
  for (double v : t.values()) EXPECT_EQ(v, 0.0);
}

TEST(EncodeNewsTest, SingleTokenMatchesOracle) {
  const HyperParams hp = desk();
  Rng rng(2);
  const ModelParams p = ref::random_params(hp, rng, 0.5);
  const TokenIds title{7};
  const Tensor t = encode_news(p, hp, title, Rng(1), false);
  // With L = 1 both attention stages put weight 1 on the only position, so
  // the output is relu(x W_center + b) V.
  const auto emb = ref::to_mat(p.embedding());
  const auto w = ref::to_mat(p[ParamId::kCnnWeight]);
  const auto b = ref::to_vec(p[ParamId::kCnnBias]);
  const std::size_t e = hp.word_embed_dim;
  ref::Vec c(b.size());
  for (std::size_t f = 0; f < b.size(); ++f) {
    double s = b[f];
    for (std::size_t k = 0; k < e; ++k) s += emb[7][k] * w[(hp.cnn_window / 2) * e + k][f];
    c[f] = std::max(0.0, s);
  }
  const auto expected = ref::vecmat(c, ref::to_mat(p[ParamId::kNewsValue]));
  EXPECT_LE(testing::max_abs_diff(ref::to_vec(t), expected), 1e-12);
  EXPECT_LE(testing::max_abs_diff(ref::to_vec(t), oracle_for(p, hp).news(title)), 1e-12);
}

TEST(EncodeNewsTest, RandomTitleMatchesOracle) {
  const HyperParams hp = desk();
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const ModelParams p = ref::random_params(hp, rng, 0.5);
    const TokenIds title = ref::random_title(hp, rng);
    const Tensor t = encode_news(p, hp, title, Rng(1), false);
    EXPECT_LE(testing::max_abs_diff(ref::to_vec(t), oracle_for(p, hp).news(title)), 1e-12);
  }
}

TEST(EncodeNewsTest, OutputWidthIndependentOfLength) {
  const HyperParams hp = desk();
  const ModelParams p = ModelParams::initialize(hp, Rng(4));
  for (std::size_t len = 1; len <= hp.title_len; ++len) {
    TokenIds title(len, 3);
    EXPECT_EQ(encode_news(p, hp, title, Rng(1), true).size(), hp.news_dim());
  }
}

TEST(EncodeNewsTest, InvalidTitlesRejected) {
  const HyperParams hp = desk();
  const ModelParams p(hp);
  const TokenIds bad{1, static_cast<std::uint32_t>(hp.vocab_size)};
  try {
    encode_news(p, hp, bad, Rng(1), false);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(std::to_string(hp.vocab_size)), std::string::npos);
  }
  EXPECT_THROW(encode_news(p, hp, TokenIds{}, Rng(1), false), DataError);
  EXPECT_THROW(encode_news(p, hp, TokenIds(hp.title_len + 1, 0), Rng(1), false), DataError);
}

TEST(EncodeNewsTest, TrainingDependsOnlyOnRng) {
  const HyperParams hp = desk();
  const ModelParams p = ModelParams::initialize(hp, Rng(5));
  const TokenIds title{1, 2, 3, 4};
  EXPECT_EQ(encode_news(p, hp, title, Rng(9), true), encode_news(p, hp, title, Rng(9), true));
  EXPECT_NE(encode_news(p, hp, title, Rng(9), true), encode_news(p, hp, title, Rng(10), true));
}

// --- encode_user ---------------------------------------------------------------

TEST(EncodeUserTest, RandomHistoryMatchesOracle) {
  const HyperParams hp = desk();
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const ModelParams p = ref::random_params(hp, rng, 0.5);
    const Tensor h = testing::random_tensor({1 + rng.uniform_index(hp.history_len), hp.news_dim()}, rng);
    const Tensor u = encode_user(p, hp, h, Rng(1), false);
    EXPECT_LE(testing::max_abs_diff(ref::to_vec(u), oracle_for(p, hp).user(ref::to_mat(h))), 1e-12);
  }
}

TEST(EncodeUserTest, ZeroCombinerQueryAveragesBranches) {
  HyperParams hp = desk();
  Rng rng(7);
  ModelParams p = ref::random_params(hp, rng, 0.5);
  p[ParamId::kCombineQuery].fill(0.0);
  const Tensor h = testing::random_tensor({3, hp.news_dim()}, rng);
  const Tensor u = encode_user(p, hp, h, Rng(1), false);
  hp.use_short_term = false;
  const Tensor ul = encode_user(p, hp, h, Rng(1), false);
  hp.use_short_term = true;
  hp.use_long_term = false;
  const Tensor us = encode_user(p, hp, h, Rng(1), false);
  for (std::size_t i = 0; i < u.size(); ++i) EXPECT_NEAR(u[i], 0.5 * (ul[i] + us[i]), 1e-15);
}

TEST(EncodeUserTest, EqualBranchesReturnThatVector) {
  const HyperParams hp = desk();
  Rng rng(8);
  const auto proj = testing::random_tensor({hp.news_dim(), hp.attn_query_dim}, rng);
  const auto query = testing::random_tensor({hp.attn_query_dim}, rng);
  const Tensor v = testing::random_tensor({hp.news_dim()}, rng);
  const Tensor out = nn::additive_attention_pool(proj, query, stack_rows({v, v}));
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(out[i], v[i], 1e-15);
}

TEST(EncodeUserTest, AblationsMatchOracle) {
  Rng rng(9);
  for (int mode = 0; mode < 2; ++mode) {
    HyperParams hp = desk();
    hp.use_long_term = mode == 0;
    hp.use_short_term = mode == 1;
    const ModelParams p = ref::random_params(hp, rng, 0.5);
    const Tensor h = testing::random_tensor({4, hp.news_dim()}, rng);
    const Tensor u = encode_user(p, hp, h, Rng(1), false);
    EXPECT_LE(testing::max_abs_diff(ref::to_vec(u), oracle_for(p, hp).user(ref::to_mat(h))), 1e-12);
  }
}

TEST(EncodeUserTest, EmptyOrOverlongHistoryRejected) {
  const HyperParams hp = desk();
  const ModelParams p(hp);
  EXPECT_THROW(encode_user(p, hp, Tensor(), Rng(1), false), DataError);
  EXPECT_THROW(encode_user(p, hp, Tensor({hp.history_len + 1, hp.news_dim()}), Rng(1), false),
               DataError);
}

// --- score and loss ------------------------------------------------------------

TEST(ScoreTest, Cases) {
  EXPECT_EQ(score(Tensor::vector({1, 0}), Tensor::vector({0, 1})), 0.0);
  EXPECT_EQ(score(Tensor::vector({0, 1, 0}), Tensor::vector({0, 1, 0})), 1.0);
  EXPECT_THROW(score(Tensor::vector({1, 0}), Tensor::vector({1})), ShapeError);
  Rng rng(10);
  const Tensor a = testing::random_tensor({9}, rng), b = testing::random_tensor({9}, rng);
  double s = 0.0;
  for (std::size_t i = 0; i < 9; ++i) s += a[i] * b[i];
  EXPECT_EQ(score(a, b), s);
}

TEST(RankingLossTest, TiedScoresGiveLogOnePlusH) {
  EXPECT_NEAR(ranking_loss(std::vector<double>(5, 0.3)), std::log(5.0), 1e-15);
  EXPECT_NEAR(ranking_loss(std::vector<double>(5, 0.3)), 1.60944, 1e-5);
}

TEST(RankingLossTest, DominantPositiveGivesZero) {
  EXPECT_NEAR(ranking_loss(std::vector<double>{800.0, 0.0, 1.0}), 0.0, 1e-300);
  EXPECT_LT(ranking_loss(std::vector<double>{40.0, 0.0, 1.0}), 1e-16);
}

TEST(RankingLossTest, TranslationInvariant) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s(5);
    for (double& v : s) v = 10.0 * (2.0 * rng.uniform() - 1.0);
    const double base = ranking_loss(s);
    const double c = 200.0 * (2.0 * rng.uniform() - 1.0);
    for (double& v : s) v += c;
    EXPECT_NEAR(ranking_loss(s), base, 1e-9);
  }
}

TEST(RankingLossTest, UniformScoresGivePositiveGradientMinusPointEight) {
  const std::vector<double> s(5, 0.7);
  std::vector<double> up = s, down = s;
  up[0] += 1e-6;
  down[0] -= 1e-6;
  const double d = (ranking_loss(up) - ranking_loss(down)) / 2e-6;
  EXPECT_NEAR(d, -4.0 / 5.0, 1e-8);
}

TEST(SampleLossTest, MatchesDirectFormulaOracle) {
  const HyperParams hp = desk();
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const ModelParams p = ref::random_params(hp, rng, 0.5);
    const auto samples = ref::random_samples(hp, 1, rng);
    const auto& s = samples[0];
    EXPECT_NEAR(sample_loss(p, hp, s, Rng(1), false),
                oracle_for(p, hp).loss(s.history, s.positive, s.negatives), 1e-12);
  }
}

TEST(SampleLossTest, ZeroParamsGiveLogOnePlusH) {
  HyperParams hp = desk();
  hp.negatives_H = 4;
  Rng rng(13);
  const auto samples = ref::random_samples(hp, 1, rng);
  EXPECT_NEAR(sample_loss(ModelParams(hp), hp, samples[0], Rng(1), true), std::log(5.0), 1e-15);
}

TEST(UserLossTest, SumOfSampleLosses) {
  const HyperParams hp = desk();
  Rng rng(14);
  const ModelParams p = ref::random_params(hp, rng, 0.5);
  const auto samples = ref::random_samples(hp, 3, rng);
  double expected = 0.0;
  for (const auto& s : samples) expected += oracle_for(p, hp).loss(s.history, s.positive, s.negatives);
  EXPECT_NEAR(user_loss(p, hp, samples, Rng(1), false), expected, 1e-12);
  EXPECT_EQ(user_loss(p, hp, std::span(samples.data(), 1), Rng(1), false),
            sample_loss(p, hp, samples[0], Rng(1), false));
}

TEST(UserLossTest, RepeatedSampleScalesLoss) {
  const HyperParams hp = desk();
  Rng rng(15);
  const ModelParams p = ref::random_params(hp, rng, 0.5);
  const auto one = ref::random_samples(hp, 1, rng);
  const std::vector<TrainingSample> four(4, one[0]);
  EXPECT_NEAR(user_loss(p, hp, four, Rng(1), false), 4.0 * sample_loss(p, hp, one[0], Rng(1), false),
              1e-12);
}

TEST(UserLossTest, EmptySampleListRejected) {
  const HyperParams hp = desk();
  EXPECT_THROW(user_loss(ModelParams(hp), hp, {}, Rng(1), false), DataError);
}

// --- user_gradient -------------------------------------------------------------

TEST(UserGradientTest, MatchesFiniteDifferencesWithFrozenDropout) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const HyperParams hp = desk();
    Rng rng(100 + seed);
    const ModelParams p = ref::random_params(hp, rng, 0.5);
    const auto samples = ref::random_samples(hp, 3, rng);
    const auto r = ref::check_user_gradient(p, hp, samples, Rng(seed), true, 1e-5, 1e-6);
    EXPECT_LE(r.max_rel_error, 1e-4) << "seed " << seed << " worst " << r.worst_param << "["
                                     << r.worst_index << "]";
  }
}

TEST(UserGradientTest, MatchesFiniteDifferencesInInference) {
  const HyperParams hp = desk();
  Rng rng(200);
  const ModelParams p = ModelParams::initialize(hp, rng.split(0));
  const auto samples = ref::random_samples(hp, 2, rng);
  const auto r = ref::check_user_gradient(p, hp, samples, Rng(1), false, 1e-5, 1e-6);
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "]";
}

TEST(UserGradientTest, AblatedModelsMatchFiniteDifferences) {
  for (int mode = 0; mode < 2; ++mode) {
    HyperParams hp = desk();
    hp.use_long_term = mode == 0;
    hp.use_short_term = mode == 1;
    Rng rng(300 + mode);
    const ModelParams p = ref::random_params(hp, rng, 0.5);
    const auto samples = ref::random_samples(hp, 2, rng);
    const auto r = ref::check_user_gradient(p, hp, samples, Rng(1), true, 1e-5, 1e-6);
    EXPECT_LE(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "]";
  }
}

TEST(UserGradientTest, EmbeddingRowsAreExactlyTokensPresent) {
  const HyperParams hp = desk();
  Rng rng(16);
  const ModelParams p = ref::random_params(hp, rng, 0.5);
  const auto samples = ref::random_samples(hp, 3, rng);
  std::set<std::uint32_t> ids;
  for (const auto& s : samples) {
    for (const auto& h : s.history) ids.insert(h.begin(), h.end());
    ids.insert(s.positive.begin(), s.positive.end());
    for (const auto& n : s.negatives) ids.insert(n.begin(), n.end());
  }
  const GradientSet g = user_gradient(p, hp, samples, Rng(1), true);
  std::set<std::uint32_t> rows;
  for (const auto& [row, values] : g.embedding_rows) rows.insert(row);
  EXPECT_EQ(rows, ids);
  EXPECT_EQ(g.sample_weight, 3u);
  EXPECT_TRUE(g.layout_matches(p));
}

TEST(UserGradientTest, Deterministic) {
  const HyperParams hp = desk();
  Rng rng(17);
  const ModelParams p = ref::random_params(hp, rng, 0.5);
  const auto samples = ref::random_samples(hp, 3, rng);
  const auto a = user_loss_and_gradient(p, hp, samples, Rng(5), true);
  const auto b = user_loss_and_gradient(p, hp, samples, Rng(5), true);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.gradient, b.gradient);
  EXPECT_EQ(a.loss, user_loss(p, hp, samples, Rng(5), true));
}

}  // namespace
}  // namespace fednewsrec
