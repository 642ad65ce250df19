#include "fednewsrec/federated.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <iostream>
#include <limits>
#include <numeric>
#include <optional>
#include <thread>

#include "fednewsrec/error.h"
#include "fednewsrec/model.h"

namespace fednewsrec {
namespace {

void log_warning(const std::string& message) { std::cerr << "warning: " << message << '\n'; }

// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
        next.store(n);
      }
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<TrainingSample> capped_samples(const ClientStore& store, std::size_t cap, Rng rng) {
  if (cap == 0 || store.samples.size() <= cap) return store.samples;
  std::vector<std::size_t> keep = sample_indices(store.samples.size(), cap, rng);
  std::sort(keep.begin(), keep.end());
  std::vector<TrainingSample> out;
  out.reserve(cap);
  for (std::size_t i : keep) out.push_back(store.samples[i]);
  return out;
}

}  // namespace

std::vector<std::size_t> select_clients(std::size_t population, double fraction, Rng rng) {
  if (population == 0) throw ConfigError("cannot select clients from an empty population");
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("client fraction must be in (0, 1], got " + std::to_string(fraction));
  }
  const auto wanted = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(population)));
  const std::size_t count = std::clamp<std::size_t>(wanted, 1, population);
  auto picked = sample_indices(population, count, rng);
  std::sort(picked.begin(), picked.end());
  return picked;
}

ClientResult client_update(const ModelParams& params, const ClientStore& store,
                           const ldp::PrivacyConfig& privacy, const HyperParams& hp,
                           std::size_t round) {
  if (store.samples.empty()) {
    throw DataError("client '" + store.user_id + "' has no training samples");
  }
  const Rng round_rng = store.rng.split(round);
  const auto samples = capped_samples(store, hp.max_samples_per_client, round_rng.split(2));
  auto lg = user_loss_and_gradient(params, hp, samples, round_rng.split(0), true);
  ClientResult result;
  result.loss = lg.loss;
  result.samples = samples.size();
  result.update = ldp::randomize(lg.gradient, privacy, round_rng.split(1));
  result.update.sample_weight = samples.size();
  return result;
}

GradientSet aggregate(std::span<const GradientSet> updates) {
  if (updates.empty()) throw ProtocolError("aggregate needs at least one update");
  const GradientSet& first = updates.front();
  std::size_t total_weight = 0;
  for (const auto& u : updates) {
    if (!u.layout_matches(first)) throw ProtocolError("client update layouts differ");
    if (u.sample_weight == 0) throw ProtocolError("client update has zero sample weight");
    total_weight += u.sample_weight;
  }
  const double total = static_cast<double>(total_weight);

  GradientSet out;
  out.vocab_size = first.vocab_size;
  out.embed_dim = first.embed_dim;
  out.sample_weight = total_weight;
  for (const Tensor& t : first.dense) out.dense.push_back(Tensor::zeros_like(t));

  for (const auto& u : updates) {
    const double c = static_cast<double>(u.sample_weight) / total;
    for (std::size_t i = 0; i < u.dense.size(); ++i) {
      auto dst = out.dense[i].values();
      const auto src = u.dense[i].values();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += c * src[j];
    }
    for (const auto& [row, values] : u.embedding_rows) {
      auto& dst = out.embedding_row(row);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += c * values[j];
    }
  }
  return out;
}

RoundReport server_round(ModelParams& params, const std::vector<ClientStore>& clients,
                         const HyperParams& hp, Rng rng, std::size_t round,
                         const FederatedOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  RoundReport report;
  report.round = round;
  report.participants = select_clients(clients.size(), hp.client_fraction, rng);
  report.loss_after = std::numeric_limits<double>::quiet_NaN();
  const auto privacy = ldp::PrivacyConfig::from(hp);

  const std::size_t n = report.participants.size();
  std::vector<std::optional<ClientResult>> results(n);
  parallel_for(n, options.workers, [&](std::size_t i) {
    const ClientStore& store = clients[report.participants[i]];
    if (store.samples.empty()) return;
    results[i] = client_update(params, store, privacy, hp, round);
  });

  std::vector<GradientSet> updates;
  std::vector<std::size_t> used;
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!results[i]) {
      log_warning("round " + std::to_string(round) + ": client '" +
                  clients[report.participants[i]].user_id + "' has no samples, skipped");
      continue;
    }
    loss_sum += results[i]->loss;
    report.total_weight += results[i]->samples;
    updates.push_back(std::move(results[i]->update));
    used.push_back(i);
  }
  if (updates.empty()) {
    log_warning("round " + std::to_string(round) + ": no selected client had samples");
    report.skipped = true;
    report.loss_before = std::numeric_limits<double>::quiet_NaN();
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
  }
  report.loss_before = loss_sum / static_cast<double>(report.total_weight);

  const GradientSet mean = aggregate(updates);
  apply_update(params, mean, hp.learning_rate);

  if (options.report_loss_after) {
    std::vector<double> after(used.size());
    parallel_for(used.size(), options.workers, [&](std::size_t k) {
      const ClientStore& store = clients[report.participants[used[k]]];
      const Rng round_rng = store.rng.split(round);
      const auto samples = capped_samples(store, hp.max_samples_per_client, round_rng.split(2));
      after[k] = user_loss(params, hp, samples, round_rng.split(0), true);
    });
    report.loss_after =
        std::accumulate(after.begin(), after.end(), 0.0) / static_cast<double>(report.total_weight);
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

FederatedResult train_federated(const std::vector<ClientStore>& clients, const HyperParams& hp,
                                ModelParams initial, std::size_t rounds, Rng rng,
                                const FederatedOptions& options,
                                const TrainCallbacks& callbacks) {
  if (rounds == 0) throw ConfigError("rounds must be >= 1");
  if (clients.empty()) throw ConfigError("no clients with training samples");
  hp.validate();
  FederatedResult result{std::move(initial), {}};
  result.reports.reserve(rounds);
  if (callbacks.on_eval) callbacks.on_eval(0, result.params, nullptr);
  for (std::size_t r = 1; r <= rounds; ++r) {
    result.reports.push_back(server_round(result.params, clients, hp, rng.split(r), r, options));
    if (callbacks.on_round) callbacks.on_round(result.reports.back());
    const bool due = callbacks.eval_every > 0 && r % callbacks.eval_every == 0;
    if (callbacks.on_eval && (due || r == rounds)) {
      callbacks.on_eval(r, result.params, &result.reports.back());
    }
  }
  return result;
}

CentralResult train_centralized(
    const std::vector<ClientStore>& clients, const HyperParams& hp, ModelParams initial,
    const CentralOptions& options, Rng rng,
    const std::function<void(std::size_t, const ModelParams&, double)>& on_epoch) {
  if (options.batch_size == 0) throw ConfigError("batch size must be >= 1");
  hp.validate();
  std::vector<const TrainingSample*> pool;
  for (const auto& c : clients) {
    for (const auto& s : c.samples) pool.push_back(&s);
  }
  if (pool.empty()) throw DataError("no training samples to pool");

  CentralResult result{std::move(initial), {}};
  std::vector<TrainingSample> batch;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    Rng epoch_rng = rng.split(epoch);
    std::vector<const TrainingSample*> order = pool;
    if (options.shuffle) {
      Rng shuffle_rng = epoch_rng.split(0);
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
      }
    }
    double loss = 0.0;
    for (std::size_t b = 0, start = 0; start < order.size(); ++b, start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(*order[i]);
      auto lg = user_loss_and_gradient(result.params, hp, batch, epoch_rng.split(b + 1), true);
      loss += lg.loss;
      const double scale = options.mean_reduction ? 1.0 / static_cast<double>(batch.size()) : 1.0;
      apply_update(result.params, lg.gradient, options.learning_rate * scale);
    }
    result.epoch_loss.push_back(loss / static_cast<double>(order.size()));
    if (on_epoch) on_epoch(epoch, result.params, result.epoch_loss.back());
  }
  return result;
}

}  // namespace fednewsrec
