#include "fednewsrec/hyper_params.h"

#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

#include "fednewsrec/error.h"

namespace fednewsrec {
namespace {

std::size_t parse_size(const std::string& key, const std::string& text) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(text, &pos);
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects an integer, got '" + text + "'");
  }
  if (pos != text.size() || v < 0) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + text + "'");
  }
  return static_cast<std::size_t>(v);
}

double parse_double(const std::string& key, const std::string& text) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a number, got '" + text + "'");
  }
  if (pos != text.size() || std::isnan(v)) {
    throw ConfigError("'" + key + "' expects a number, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("'" + key + "' expects a boolean, got '" + text + "'");
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

struct Field {
  const char* key;
  std::function<void(HyperParams&, const std::string&)> set;
  std::function<std::string(const HyperParams&)> get;
};

#define FNR_SIZE_FIELD(name)                                                       \
  Field {                                                                          \
    #name, [](HyperParams& hp, const std::string& v) { hp.name = parse_size(#name, v); }, \
        [](const HyperParams& hp) { return std::to_string(hp.name); }              \
  }
#define FNR_DOUBLE_FIELD(name)                                                     \
  Field {                                                                          \
    #name, [](HyperParams& hp, const std::string& v) { hp.name = parse_double(#name, v); }, \
        [](const HyperParams& hp) { return format_double(hp.name); }               \
  }
#define FNR_BOOL_FIELD(name)                                                       \
  Field {                                                                          \
    #name, [](HyperParams& hp, const std::string& v) { hp.name = parse_bool(#name, v); }, \
        [](const HyperParams& hp) { return std::string(hp.name ? "true" : "false"); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = {
      FNR_SIZE_FIELD(word_embed_dim),
      FNR_SIZE_FIELD(gru_units),
      FNR_SIZE_FIELD(num_heads),
      FNR_SIZE_FIELD(head_dim),
      FNR_SIZE_FIELD(attn_query_dim),
      FNR_SIZE_FIELD(cnn_window),
      FNR_SIZE_FIELD(cnn_filters),
      FNR_SIZE_FIELD(title_len),
      FNR_SIZE_FIELD(history_len),
      FNR_SIZE_FIELD(negatives_H),
      FNR_DOUBLE_FIELD(dropout_rate),
      FNR_DOUBLE_FIELD(learning_rate),
      FNR_DOUBLE_FIELD(clip_scale),
      FNR_DOUBLE_FIELD(noise_scale),
      FNR_DOUBLE_FIELD(client_fraction),
      FNR_SIZE_FIELD(vocab_size),
      FNR_BOOL_FIELD(noise_sparse_only),
      FNR_BOOL_FIELD(use_long_term),
      FNR_BOOL_FIELD(use_short_term),
      FNR_SIZE_FIELD(max_samples_per_client),
      FNR_DOUBLE_FIELD(init_scale),
  };
  return kFields;
}

#undef FNR_SIZE_FIELD
#undef FNR_DOUBLE_FIELD
#undef FNR_BOOL_FIELD

}  // namespace

void HyperParams::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v < 1) throw ConfigError(std::string(name) + " must be >= 1");
  };
  positive(word_embed_dim, "word_embed_dim");
  positive(gru_units, "gru_units");
  positive(num_heads, "num_heads");
  positive(head_dim, "head_dim");
  positive(attn_query_dim, "attn_query_dim");
  positive(cnn_filters, "cnn_filters");
  positive(title_len, "title_len");
  positive(history_len, "history_len");
  positive(negatives_H, "negatives_H");
  positive(vocab_size, "vocab_size");
  if (cnn_window % 2 != 1) throw ConfigError("cnn_window must be odd");
  // The combiner stacks u_l and u_s.
  if (gru_units != news_dim()) {
    throw ConfigError("gru_units (" + std::to_string(gru_units) +
                      ") must equal num_heads*head_dim (" + std::to_string(news_dim()) + ")");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("dropout_rate must be in [0, 1)");
  }
  if (!(client_fraction > 0.0 && client_fraction <= 1.0)) {
    throw ConfigError("client_fraction must be in (0, 1]");
  }
  if (!(clip_scale >= 0.0)) throw ConfigError("clip_scale must be >= 0");
  if (!(noise_scale >= 0.0) || std::isinf(noise_scale)) {
    throw ConfigError("noise_scale must be finite and >= 0");
  }
  if (!std::isfinite(learning_rate)) throw ConfigError("learning_rate must be finite");
  if (!use_long_term && !use_short_term) {
    throw ConfigError("at least one of use_long_term/use_short_term must be enabled");
  }
  if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) {
    throw ConfigError("init_scale must be finite and >= 0");
  }
}

HyperParams HyperParams::desk_scale() {
  HyperParams hp;
  hp.word_embed_dim = 8;
  hp.num_heads = 2;
  hp.head_dim = 4;
  hp.gru_units = 8;
  hp.attn_query_dim = 8;
  hp.cnn_filters = 8;
  hp.title_len = 6;
  hp.history_len = 4;
  hp.negatives_H = 2;
  hp.vocab_size = 50;
  return hp;
}

std::size_t apply_settings(const Settings& settings, HyperParams& hp) {
  std::size_t consumed = 0;
  for (const auto& f : fields()) {
    if (auto it = settings.find(f.key); it != settings.end()) {
      f.set(hp, it->second);
      ++consumed;
    }
  }
  return consumed;
}

Settings to_settings(const HyperParams& hp) {
  Settings out;
  for (const auto& f : fields()) out[f.key] = f.get(hp);
  return out;
}

}  // namespace fednewsrec
