#include "fednewsrec/ldp.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "fednewsrec/error.h"
#include "fednewsrec/ops.h"

namespace fednewsrec::ldp {
namespace {

void clamp_all(std::span<double> values, double bound) {
  for (double& v : values) v = std::clamp(v, -bound, bound);
}

void add_noise(std::span<double> values, double scale, Rng rng) {
  for (double& v : values) v += nn::laplace_sample(rng, scale);
}

}  // namespace

PrivacyConfig PrivacyConfig::from(const HyperParams& hp) {
  return {hp.clip_scale, hp.noise_scale, hp.noise_sparse_only};
}

void PrivacyConfig::validate() const {
  if (!(clip_scale >= 0.0)) {
    throw ConfigError("clip scale delta must be >= 0, got " + std::to_string(clip_scale));
  }
  if (!(noise_scale >= 0.0) || std::isinf(noise_scale)) {
    throw ConfigError("noise scale lambda must be finite and >= 0, got " +
                      std::to_string(noise_scale));
  }
}

GradientSet clip(const GradientSet& g, double clip_scale) {
  if (!(clip_scale >= 0.0)) {
    throw ConfigError("clip scale delta must be >= 0, got " + std::to_string(clip_scale));
  }
  GradientSet out = g;
  if (std::isinf(clip_scale)) return out;
  for (Tensor& t : out.dense) clamp_all(t.values(), clip_scale);
  for (auto& [row, values] : out.embedding_rows) clamp_all(values, clip_scale);
  return out;
}

GradientSet randomize(const GradientSet& g, const PrivacyConfig& cfg, Rng rng) {
  cfg.validate();
  GradientSet out = clip(g, cfg.clip_scale);
  if (cfg.noise_scale == 0.0) return out;

  for (std::size_t i = 0; i < out.dense.size(); ++i) {
    add_noise(out.dense[i].values(), cfg.noise_scale, rng.split(i));
  }
  if (cfg.noise_sparse_only) {
    for (auto& [row, values] : out.embedding_rows) {
      add_noise(values, cfg.noise_scale, rng.split(kNumDense + row));
    }
    return out;
  }
  for (std::uint32_t row = 0; row < out.vocab_size; ++row) {
    add_noise(out.embedding_row(row), cfg.noise_scale, rng.split(kNumDense + row));
  }
  return out;
}

double budget(const PrivacyConfig& cfg) {
  cfg.validate();
  if (cfg.noise_scale == 0.0) {
    throw BudgetUndefinedError("privacy budget undefined: noise scale lambda is 0");
  }
  return 2.0 * cfg.clip_scale / cfg.noise_scale;
}

double noise_stddev(const PrivacyConfig& cfg) { return cfg.noise_scale * std::sqrt(2.0); }

}  // namespace fednewsrec::ldp
