#pragma once

// Federated training loop: sample clients, compute privatized local
// gradients against one model snapshot, aggregate them weighted by sample
// count and take a gradient step on the server. Also the centralized
// trainer that pools every client's samples.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fednewsrec/dataset.h"
#include "fednewsrec/hyper_params.h"
#include "fednewsrec/ldp.h"
#include "fednewsrec/model_params.h"
#include "fednewsrec/rng.h"

namespace fednewsrec {

struct RoundReport {
  std::size_t round = 0;
  std::vector<std::size_t> participants;  // client indices, ascending
  std::size_t total_weight = 0;           // sum of |B_u|
  double loss_before = 0.0;               // mean per-sample loss at the snapshot
  double loss_after = 0.0;                // same samples and masks after the step; NaN if not computed
  double wall_seconds = 0.0;
  bool skipped = false;
};

// max(1, round(fraction * population)) distinct indices, uniformly without
// replacement, returned ascending.
std::vector<std::size_t> select_clients(std::size_t population, double fraction, Rng rng);

struct ClientResult {
  GradientSet update;
  double loss = 0.0;  // user_loss on the samples used
  std::size_t samples = 0;
};

// randomize(user_gradient(params, samples), privacy) with the store's stream
// for this round. Uses at most hp.max_samples_per_client samples (0 = all).
ClientResult client_update(const ModelParams& params, const ClientStore& store,
                           const ldp::PrivacyConfig& privacy, const HyperParams& hp,
                           std::size_t round);

// Sample-weighted mean of the updates: sum of (w_u / sum w) * g_u in the
// given order. Sparse embedding rows are merged by union.
GradientSet aggregate(std::span<const GradientSet> updates);

struct FederatedOptions {
  std::size_t workers = 1;
  bool report_loss_after = false;
};

// One synchronous round. Every participant reads the same snapshot; updates
// are aggregated in ascending client index regardless of completion order.
RoundReport server_round(ModelParams& params, const std::vector<ClientStore>& clients,
                         const HyperParams& hp, Rng rng, std::size_t round,
                         const FederatedOptions& options = {});

struct TrainCallbacks {
  std::size_t eval_every = 0;  // 0 = only after the final round
  // Called with round 0 before training, every eval_every rounds and after
  // the last round.
  std::function<void(std::size_t round, const ModelParams& params, const RoundReport* last)>
      on_eval;
  std::function<void(const RoundReport&)> on_round;
};

struct FederatedResult {
  ModelParams params;
  std::vector<RoundReport> reports;
};

// Round r (1-based) selects clients with rng.split(r).
FederatedResult train_federated(const std::vector<ClientStore>& clients, const HyperParams& hp,
                                ModelParams initial, std::size_t rounds, Rng rng,
                                const FederatedOptions& options = {},
                                const TrainCallbacks& callbacks = {});

struct CentralOptions {
  std::size_t epochs = 2;
  std::size_t batch_size = 32;
  double learning_rate = 0.5;
  bool shuffle = true;
  // Step on the batch-mean loss; false steps on the summed loss like a
  // federated client does.
  bool mean_reduction = true;
};

struct CentralResult {
  ModelParams params;
  std::vector<double> epoch_loss;  // mean per-sample training loss
};

// Mini-batch SGD over all samples pooled in client order; no clipping or
// noise. Epoch e shuffles with rng.split(e) and batch b of that epoch uses
// rng.split(e).split(b + 1) for dropout.
CentralResult train_centralized(
    const std::vector<ClientStore>& clients, const HyperParams& hp, ModelParams initial,
    const CentralOptions& options, Rng rng,
    const std::function<void(std::size_t epoch, const ModelParams&, double loss)>& on_epoch = {});

}  // namespace fednewsrec
