#include "fednewsrec/federated.h"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "fednewsrec/error.h"
#include "fednewsrec/synthetic.h"
#include "oracles/gradcheck.h"

namespace fednewsrec {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

HyperParams small_hp() {
  HyperParams hp = HyperParams::desk_scale();
  hp.client_fraction = 1.0;
  return hp;
}

std::vector<ClientStore> random_clients(const HyperParams& hp, std::size_t count, Rng rng) {
  std::vector<ClientStore> clients(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng r = rng.split(i);
    clients[i].user_id = "u" + std::to_string(i);
    clients[i].index = i;
    clients[i].samples = oracle::random_samples(hp, 1 + r.uniform_index(3), r);
    clients[i].rng = rng.split(1000 + i);
  }
  return clients;
}

GradientSet dense_gradient(const ModelParams& p, double value, std::size_t weight) {
  GradientSet g = GradientSet::zeros_like(p);
  for (Tensor& t : g.dense) t.fill(value);
  g.sample_weight = weight;
  return g;
}

// Every coordinate, absent embedding rows as zero.
std::vector<double> flatten(const GradientSet& g) {
  std::vector<double> out;
  for (const Tensor& t : g.dense) out.insert(out.end(), t.values().begin(), t.values().end());
  const Tensor e = g.embedding_dense();
  out.insert(out.end(), e.values().begin(), e.values().end());
  return out;
}

std::vector<double> flatten(const ModelParams& p) {
  std::vector<double> out;
  for (std::size_t i = 0; i < p.layout().size(); ++i)
    out.insert(out.end(), p.at(i).values().begin(), p.at(i).values().end());
  return out;
}

// --- select_clients -------------------------------------------------------------

TEST(SelectClientsTest, FullFractionSelectsEveryone) {
  const auto s = select_clients(10, 1.0, Rng(1));
  ASSERT_EQ(s.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(s[i], i);
}

TEST(SelectClientsTest, TinyFractionSelectsOne) {
  EXPECT_EQ(select_clients(100, 1e-9, Rng(2)).size(), 1u);
  EXPECT_EQ(select_clients(100, 0.004, Rng(2)).size(), 1u);
  EXPECT_EQ(select_clients(200, 0.02, Rng(2)).size(), 4u);
}

TEST(SelectClientsTest, InvalidInputsRejected) {
  EXPECT_THROW(select_clients(0, 0.5, Rng(1)), ConfigError);
  EXPECT_THROW(select_clients(10, 0.0, Rng(1)), ConfigError);
  EXPECT_THROW(select_clients(10, 1.5, Rng(1)), ConfigError);
}

TEST(SelectClientsTest, SelectionFrequencyWithinThreeSigma) {
  const std::size_t n = 200, rounds = 10000;
  const Rng root(3);
  std::vector<double> counts(n, 0.0);
  for (std::size_t r = 0; r < rounds; ++r) {
    const auto s = select_clients(n, 0.02, root.split(r));
    ASSERT_EQ(s.size(), 4u);
    for (std::size_t i = 1; i < s.size(); ++i) ASSERT_LT(s[i - 1], s[i]);
    for (std::size_t i : s) ++counts[i];
  }
  const double p = 0.02;
  const double sigma = std::sqrt(rounds * p * (1 - p));
  for (double c : counts) EXPECT_NEAR(c, rounds * p, 3.0 * sigma);
}

// --- client_update --------------------------------------------------------------

TEST(ClientUpdateTest, MechanismOffReturnsRawGradient) {
  HyperParams hp = small_hp();
  const auto clients = random_clients(hp, 1, Rng(4));
  const ModelParams p = ModelParams::initialize(hp, Rng(5));
  const auto result = client_update(p, clients[0], {kInf, 0.0, false}, hp, 3);
  const GradientSet raw =
      user_gradient(p, hp, clients[0].samples, clients[0].rng.split(3).split(0), true);
  EXPECT_EQ(result.update, raw);
}

TEST(ClientUpdateTest, SampleWeightIsSampleCount) {
  HyperParams hp = small_hp();
  auto clients = random_clients(hp, 1, Rng(6));
  clients[0].samples.resize(1);
  const ModelParams p = ModelParams::initialize(hp, Rng(7));
  EXPECT_EQ(client_update(p, clients[0], ldp::PrivacyConfig::from(hp), hp, 1).update.sample_weight, 1u);
}

TEST(ClientUpdateTest, CoordinatesBoundedByDeltaPlusTwentyLambda) {
  HyperParams hp = small_hp();
  const auto clients = random_clients(hp, 3, Rng(8));
  const ModelParams p = ModelParams::initialize(hp, Rng(9));
  for (const auto& c : clients) {
    const auto result = client_update(p, c, {0.005, 0.015, false}, hp, 1);
    for (const Tensor& t : result.update.dense)
      for (double v : t.values()) EXPECT_LE(std::abs(v), 0.005 + 20 * 0.015);
  }
}

TEST(ClientUpdateTest, EmptyStoreRejected) {
  const HyperParams hp = small_hp();
  ClientStore empty;
  EXPECT_THROW(client_update(ModelParams(hp), empty, {}, hp, 1), DataError);
}

TEST(ClientUpdateTest, SampleCapLimitsWeight) {
  HyperParams hp = small_hp();
  auto clients = random_clients(hp, 1, Rng(10));
  Rng r(11);
  clients[0].samples = oracle::random_samples(hp, 6, r);
  hp.max_samples_per_client = 2;
  const ModelParams p = ModelParams::initialize(hp, Rng(12));
  EXPECT_EQ(client_update(p, clients[0], {kInf, 0.0, false}, hp, 1).samples, 2u);
}

// --- aggregate -------------------------------------------------------------------

TEST(AggregateTest, SingleUpdateIsItself) {
  const ModelParams p(small_hp());
  GradientSet g = dense_gradient(p, 0.25, 3);
  g.embedding_row(4)[1] = -2.0;
  EXPECT_EQ(flatten(aggregate(std::vector<GradientSet>{g})), flatten(g));
}

TEST(AggregateTest, WeightedTwoClientExample) {
  const ModelParams p(small_hp());
  GradientSet a = GradientSet::zeros_like(p), b = GradientSet::zeros_like(p);
  a.dense[0][0] = 1.0;
  a.dense[0][1] = 1.0;
  a.sample_weight = 1;
  b.dense[0][0] = -1.0;
  b.dense[0][1] = 1.0;
  b.sample_weight = 3;
  const GradientSet m = aggregate(std::vector<GradientSet>{a, b});
  EXPECT_EQ(m.dense[0][0], -0.5);
  EXPECT_EQ(m.dense[0][1], 1.0);
  EXPECT_EQ(m.sample_weight, 4u);
}

TEST(AggregateTest, MatchesWeightedMeanOracle) {
  const ModelParams p(small_hp());
  Rng rng(13);
  std::vector<GradientSet> updates;
  for (int u = 0; u < 5; ++u) {
    GradientSet g = GradientSet::zeros_like(p);
    for (Tensor& t : g.dense)
      for (double& v : t.values()) v = 2.0 * rng.uniform() - 1.0;
    for (int k = 0; k < 3; ++k) {
      for (double& v : g.embedding_row(static_cast<std::uint32_t>(rng.uniform_index(50))))
        v = 2.0 * rng.uniform() - 1.0;
    }
    g.sample_weight = 1 + rng.uniform_index(9);
    updates.push_back(std::move(g));
  }
  const auto got = flatten(aggregate(updates));
  std::vector<std::vector<double>> flat;
  double total = 0.0;
  for (const auto& u : updates) {
    flat.push_back(flatten(u));
    total += static_cast<double>(u.sample_weight);
  }
  for (std::size_t i = 0; i < got.size(); ++i) {
    double num = 0.0;
    for (std::size_t u = 0; u < updates.size(); ++u) num += updates[u].sample_weight * flat[u][i];
    EXPECT_NEAR(got[i], num / total, 1e-12);
  }
}

TEST(AggregateTest, SingleRandomUpdateIsExact) {
  const ModelParams p(small_hp());
  Rng rng(50);
  GradientSet g = GradientSet::zeros_like(p);
  for (Tensor& t : g.dense)
    for (double& v : t.values()) v = 2.0 * rng.uniform() - 1.0;
  g.sample_weight = 3;
  EXPECT_EQ(flatten(aggregate(std::vector<GradientSet>{g})), flatten(g));
}

TEST(AggregateTest, CommonWeightDoesNotMatter) {
  const ModelParams p(small_hp());
  Rng rng(51);
  std::vector<GradientSet> ones, sevens;
  for (int u = 0; u < 3; ++u) {
    GradientSet g = GradientSet::zeros_like(p);
    for (Tensor& t : g.dense)
      for (double& v : t.values()) v = 2.0 * rng.uniform() - 1.0;
    g.sample_weight = 1;
    ones.push_back(g);
    g.sample_weight = 7;
    sevens.push_back(g);
  }
  EXPECT_EQ(flatten(aggregate(ones)), flatten(aggregate(sevens)));
}

TEST(AggregateTest, EqualWeightsGiveUnweightedMean) {
  const ModelParams p(small_hp());
  const std::vector<GradientSet> ups{dense_gradient(p, 1.0, 2), dense_gradient(p, 2.0, 2),
                                     dense_gradient(p, 4.5, 2)};
  const GradientSet m = aggregate(ups);
  for (double v : m.dense[3].values()) EXPECT_DOUBLE_EQ(v, 7.5 / 3.0);
}

TEST(AggregateTest, LayoutMismatchRejected) {
  HyperParams other = small_hp();
  other.vocab_size = 51;
  const std::vector<GradientSet> ups{dense_gradient(ModelParams(small_hp()), 1.0, 1),
                                     dense_gradient(ModelParams(other), 1.0, 1)};
  EXPECT_THROW(aggregate(ups), ProtocolError);
  EXPECT_THROW(aggregate(std::vector<GradientSet>{}), ProtocolError);
}

// --- server_round / train_federated ---------------------------------------------

TEST(ServerRoundTest, ZeroLearningRateLeavesModelBitwise) {
  HyperParams hp = small_hp();
  hp.learning_rate = 0.0;
  const auto clients = random_clients(hp, 4, Rng(14));
  const ModelParams init = ModelParams::initialize(hp, Rng(15));
  const auto result = train_federated(clients, hp, init, 3, Rng(16));
  EXPECT_EQ(result.params, init);
}

TEST(ServerRoundTest, ZeroGradientsLeaveModelUnchanged) {
  HyperParams hp = small_hp();
  hp.noise_scale = 0.0;
  const auto clients = random_clients(hp, 3, Rng(17));
  // All-zero parameters give exactly zero gradients everywhere.
  ModelParams p(hp);
  server_round(p, clients, hp, Rng(18), 1);
  EXPECT_EQ(p, ModelParams(hp));
}

TEST(ServerRoundTest, OneClientNoNoiseIsClippedSgd) {
  HyperParams hp = small_hp();
  hp.noise_scale = 0.0;
  const auto clients = random_clients(hp, 1, Rng(19));
  const ModelParams init = ModelParams::initialize(hp, Rng(20));
  ModelParams p = init;
  server_round(p, clients, hp, Rng(21), 5);

  const GradientSet g =
      user_gradient(init, hp, clients[0].samples, clients[0].rng.split(5).split(0), true);
  ModelParams expected = init;
  apply_update(expected, ldp::clip(g, hp.clip_scale), hp.learning_rate);
  const auto a = flatten(p), b = flatten(expected);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
}

TEST(ServerRoundTest, TwoIdenticalClientsEqualOne) {
  HyperParams hp = small_hp();
  hp.noise_scale = 0.0;
  const auto one = random_clients(hp, 1, Rng(22));
  std::vector<ClientStore> two{one[0], one[0]};
  two[1].index = 1;
  const ModelParams init = ModelParams::initialize(hp, Rng(23));
  ModelParams a = init, b = init;
  server_round(a, one, hp, Rng(24), 1);
  server_round(b, two, hp, Rng(24), 1);
  const auto fa = flatten(a), fb = flatten(b);
  for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_NEAR(fa[i], fb[i], 1e-15);
}

TEST(ServerRoundTest, ReportFields) {
  HyperParams hp = small_hp();
  hp.client_fraction = 0.5;
  const auto clients = random_clients(hp, 6, Rng(25));
  ModelParams p = ModelParams::initialize(hp, Rng(26));
  const auto report = server_round(p, clients, hp, Rng(27), 1, {1, true});
  EXPECT_EQ(report.participants.size(), 3u);
  std::size_t weight = 0;
  for (std::size_t i : report.participants) weight += clients[i].samples.size();
  EXPECT_EQ(report.total_weight, weight);
  EXPECT_TRUE(std::isfinite(report.loss_before));
  EXPECT_TRUE(std::isfinite(report.loss_after));
  EXPECT_FALSE(report.skipped);
}

TEST(ServerRoundTest, EmptyClientsSkipRound) {
  HyperParams hp = small_hp();
  std::vector<ClientStore> clients(2);
  ModelParams p = ModelParams::initialize(hp, Rng(28));
  const ModelParams before = p;
  const auto report = server_round(p, clients, hp, Rng(29), 1);
  EXPECT_TRUE(report.skipped);
  EXPECT_EQ(p, before);
}

TEST(TrainFederatedTest, ZeroRoundsRejected) {
  const HyperParams hp = small_hp();
  const auto clients = random_clients(hp, 2, Rng(30));
  EXPECT_THROW(train_federated(clients, hp, ModelParams(hp), 0, Rng(1)), ConfigError);
}

TEST(TrainFederatedTest, WorkerCountDoesNotChangeResult) {
  HyperParams hp = small_hp();
  hp.client_fraction = 0.5;
  const auto clients = random_clients(hp, 8, Rng(31));
  const ModelParams init = ModelParams::initialize(hp, Rng(32));
  const auto a = train_federated(clients, hp, init, 4, Rng(33), {1, false});
  const auto b = train_federated(clients, hp, init, 4, Rng(33), {4, false});
  EXPECT_EQ(a.params, b.params);
  for (std::size_t r = 0; r < a.reports.size(); ++r) {
    EXPECT_EQ(a.reports[r].participants, b.reports[r].participants);
    EXPECT_EQ(a.reports[r].loss_before, b.reports[r].loss_before);
  }
}

TEST(TrainFederatedTest, EvalCallbackSchedule) {
  const HyperParams hp = small_hp();
  const auto clients = random_clients(hp, 2, Rng(34));
  std::vector<std::size_t> seen;
  TrainCallbacks cb;
  cb.eval_every = 2;
  cb.on_eval = [&](std::size_t r, const ModelParams&, const RoundReport*) { seen.push_back(r); };
  train_federated(clients, hp, ModelParams::initialize(hp, Rng(35)), 5, Rng(36), {}, cb);
  EXPECT_EQ(seen, (std::vector<std::size_t>{0, 2, 4, 5}));
}

// --- centralized ----------------------------------------------------------------

TEST(CentralTest, ZeroEpochsReturnInitial) {
  const HyperParams hp = small_hp();
  const auto clients = random_clients(hp, 3, Rng(37));
  const ModelParams init = ModelParams::initialize(hp, Rng(38));
  CentralOptions opt;
  opt.epochs = 0;
  EXPECT_EQ(train_centralized(clients, hp, init, opt, Rng(39)).params, init);
}

TEST(CentralTest, FullBatchStepsMatchSingleClientFederated) {
  HyperParams hp = small_hp();
  hp.dropout_rate = 0.0;
  hp.noise_scale = 0.0;
  hp.clip_scale = kInf;
  hp.learning_rate = 0.05;
  const auto many = random_clients(hp, 4, Rng(40));
  ClientStore pooled = many[0];
  pooled.samples.clear();
  for (const auto& c : many) pooled.samples.insert(pooled.samples.end(), c.samples.begin(), c.samples.end());
  const ModelParams init = ModelParams::initialize(hp, Rng(41));

  const auto fed = train_federated({pooled}, hp, init, 3, Rng(42));
  CentralOptions opt;
  opt.epochs = 3;
  opt.batch_size = pooled.samples.size();
  opt.learning_rate = hp.learning_rate;
  opt.mean_reduction = false;
  const auto central = train_centralized(many, hp, init, opt, Rng(43));
  const auto a = flatten(fed.params), b = flatten(central.params);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  EXPECT_LE(worst, 1e-9);
}

TEST(CentralTest, MeanReductionScalesStep) {
  HyperParams hp = small_hp();
  hp.dropout_rate = 0.0;
  const auto clients = random_clients(hp, 2, Rng(44));
  const ModelParams init = ModelParams::initialize(hp, Rng(45));
  std::size_t n = 0;
  for (const auto& c : clients) n += c.samples.size();
  CentralOptions sum_opt;
  sum_opt.epochs = 1;
  sum_opt.batch_size = n;
  sum_opt.learning_rate = 0.1;
  sum_opt.shuffle = false;
  sum_opt.mean_reduction = false;
  CentralOptions mean_opt = sum_opt;
  mean_opt.mean_reduction = true;
  mean_opt.learning_rate = 0.1 * static_cast<double>(n);
  const auto a = flatten(train_centralized(clients, hp, init, sum_opt, Rng(46)).params);
  const auto b = flatten(train_centralized(clients, hp, init, mean_opt, Rng(46)).params);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
}

TEST(CentralTest, Deterministic) {
  const HyperParams hp = small_hp();
  const auto clients = random_clients(hp, 3, Rng(47));
  const ModelParams init = ModelParams::initialize(hp, Rng(48));
  CentralOptions opt;
  opt.batch_size = 2;
  EXPECT_EQ(train_centralized(clients, hp, init, opt, Rng(49)).params,
            train_centralized(clients, hp, init, opt, Rng(49)).params);
}

}  // namespace
}  // namespace fednewsrec
