#include <benchmark/benchmark.h>

#include <vector>

#include "fednewsrec/federated.h"
#include "fednewsrec/ldp.h"
#include "fednewsrec/model.h"
#include "fednewsrec/ops.h"

namespace fednewsrec {
namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t({rows, cols});
  for (double& v : t.values()) v = 2.0 * rng.uniform() - 1.0;
  return t;
}

TokenIds random_title(const HyperParams& hp, Rng& rng) {
  TokenIds t(hp.title_len);
  for (auto& id : t) id = static_cast<std::uint32_t>(rng.uniform_index(hp.vocab_size));
  return t;
}

std::vector<TrainingSample> random_samples(const HyperParams& hp, std::size_t count, Rng& rng) {
  std::vector<TrainingSample> out(count);
  for (auto& s : out) {
    s.history.resize(hp.history_len);
    for (auto& h : s.history) h = random_title(hp, rng);
    s.positive = random_title(hp, rng);
    s.negatives.resize(hp.negatives_H);
    for (auto& n : s.negatives) n = random_title(hp, rng);
  }
  return out;
}

// Full widths with a small vocabulary so setup stays cheap.
HyperParams full_dims() {
  HyperParams hp;
  hp.vocab_size = 5000;
  return hp;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(nn::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(128)->Arg(400);

void BM_EncodeNews(benchmark::State& state) {
  const HyperParams hp = state.range(0) == 0 ? HyperParams::desk_scale() : full_dims();
  Rng rng(2);
  const ModelParams p = ModelParams::initialize(hp, rng.split(0));
  const TokenIds title = random_title(hp, rng);
  for (auto _ : state) benchmark::DoNotOptimize(encode_news(p, hp, title, Rng(3), true));
}
BENCHMARK(BM_EncodeNews)->Arg(0)->Arg(1)->ArgNames({"full"});

void BM_UserGradient(benchmark::State& state) {
  const HyperParams hp = state.range(0) == 0 ? HyperParams::desk_scale() : full_dims();
  Rng rng(4);
  const ModelParams p = ModelParams::initialize(hp, rng.split(0));
  const auto samples = random_samples(hp, 1, rng);
  for (auto _ : state) benchmark::DoNotOptimize(user_gradient(p, hp, samples, Rng(5), true));
}
BENCHMARK(BM_UserGradient)->Arg(0)->Arg(1)->ArgNames({"full"})->Unit(benchmark::kMillisecond);

void BM_Randomize(benchmark::State& state) {
  HyperParams hp = HyperParams::desk_scale();
  hp.vocab_size = static_cast<std::size_t>(state.range(0));
  Rng rng(6);
  const ModelParams p = ModelParams::initialize(hp, rng.split(0));
  const GradientSet g = user_gradient(p, hp, random_samples(hp, 2, rng), Rng(7), true);
  const ldp::PrivacyConfig dense{0.005, 0.015, false}, sparse{0.005, 0.015, true};
  const auto& cfg = state.range(1) ? sparse : dense;
  for (auto _ : state) benchmark::DoNotOptimize(ldp::randomize(g, cfg, Rng(8)));
}
BENCHMARK(BM_Randomize)
    ->Args({1000, 0})
    ->Args({65000, 0})
    ->Args({65000, 1})
    ->ArgNames({"vocab", "sparse"})
    ->Unit(benchmark::kMillisecond);

void BM_Aggregate(benchmark::State& state) {
  const HyperParams hp = HyperParams::desk_scale();
  const auto clients = static_cast<std::size_t>(state.range(0));
  Rng rng(9);
  const ModelParams p = ModelParams::initialize(hp, rng.split(0));
  std::vector<GradientSet> ups;
  for (std::size_t i = 0; i < clients; ++i)
    ups.push_back(user_gradient(p, hp, random_samples(hp, 2, rng), rng.split(i), true));
  for (auto _ : state) benchmark::DoNotOptimize(aggregate(ups));
}
BENCHMARK(BM_Aggregate)->Arg(4)->Arg(40);

}  // namespace
}  // namespace fednewsrec

BENCHMARK_MAIN();
