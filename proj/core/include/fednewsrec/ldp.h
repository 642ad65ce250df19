#pragma once

#include "fednewsrec/hyper_params.h"
#include "fednewsrec/model_params.h"
#include "fednewsrec/rng.h"

namespace fednewsrec::ldp {

struct PrivacyConfig {
  double clip_scale = 0.005;   // delta; +inf disables clipping
  double noise_scale = 0.015;  // lambda; 0 disables noise
  // Add noise only to embedding rows present in the gradient. Cheaper, but
  // the set of uploaded rows reveals which titles the client read.
  bool noise_sparse_only = false;

  static PrivacyConfig from(const HyperParams& hp);
  void validate() const;
};

// Clamps every coordinate (dense and sparse) to [-delta, delta].
GradientSet clip(const GradientSet& g, double clip_scale);

// clip(g) plus independent Laplace(0, lambda) noise on every coordinate of the
// full layout, including embedding rows the client never touched. The noise
// field depends only on rng: dense tensor i draws from rng.split(i) and
// embedding row r from rng.split(kNumDense + r).
GradientSet randomize(const GradientSet& g, const PrivacyConfig& cfg, Rng rng);

// Per-upload budget bound 2*delta/lambda. Throws BudgetUndefinedError when
// lambda == 0.
double budget(const PrivacyConfig& cfg);

// Laplace noise standard deviation, lambda * sqrt(2).
double noise_stddev(const PrivacyConfig& cfg);

}  // namespace fednewsrec::ldp
