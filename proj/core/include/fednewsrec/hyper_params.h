#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>

namespace fednewsrec {

// Model, mechanism and protocol settings. Defaults are the published
// settings; desk_scale() returns the small configuration used by the
// gradient checks.
struct HyperParams {
  std::size_t word_embed_dim = 300;
  std::size_t gru_units = 400;
  std::size_t num_heads = 20;
  std::size_t head_dim = 20;
  std::size_t attn_query_dim = 200;
  std::size_t cnn_window = 3;
  std::size_t cnn_filters = 400;
  std::size_t title_len = 30;
  std::size_t history_len = 50;
  std::size_t negatives_H = 4;
  double dropout_rate = 0.2;
  double learning_rate = 0.5;
  double clip_scale = 0.005;
  double noise_scale = 0.015;
  double client_fraction = 0.02;
  std::size_t vocab_size = 65000;

  // Extensions beyond the published table.
  bool noise_sparse_only = false;
  bool use_long_term = true;
  bool use_short_term = true;
  std::size_t max_samples_per_client = 0;  // 0 = all samples
  double init_scale = 1.0;                 // word embedding init is U(-s, s)

  // Width of news and user vectors.
  std::size_t news_dim() const { return num_heads * head_dim; }

  // Throws ConfigError when an invariant is violated.
  void validate() const;

  static HyperParams desk_scale();
};

// Flat `key = value` settings as read from a config file or flags.
using Settings = std::map<std::string, std::string>;

// Applies every recognised key in settings; unknown keys are left for the
// caller. Returns the keys that were consumed.
std::size_t apply_settings(const Settings& settings, HyperParams& hp);

// Serialises every field so that apply_settings() round-trips it.
Settings to_settings(const HyperParams& hp);

}  // namespace fednewsrec
