#include "cli.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "fednewsrec/checkpoint.h"
#include "fednewsrec/dataset.h"
#include "fednewsrec/error.h"
#include "fednewsrec/evaluate.h"
#include "fednewsrec/federated.h"
#include "fednewsrec/ldp.h"
#include "fednewsrec/synthetic.h"

namespace fednewsrec::cli {
namespace {

namespace fs = std::filesystem;

// Config-file settings overlaid with command-line flags. Keys are consumed as
// they are read so that leftovers can be reported.
class Options {
 public:
  Options(const std::string& config_path, const Settings& flags) {
    if (!config_path.empty()) values_ = load_settings(config_path);
    for (const auto& [k, v] : flags) values_[k] = v;
  }

  std::optional<std::string> take(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    std::string v = it->second;
    values_.erase(it);
    return v;
  }

  std::string str(const std::string& key, const std::string& fallback) {
    return take(key).value_or(fallback);
  }

  std::size_t size(const std::string& key, std::size_t fallback) {
    const auto v = take(key);
    if (!v) return fallback;
    std::size_t pos = 0;
    unsigned long long n = 0;
    try {
      n = std::stoull(*v, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != v->size() || v->empty() || (*v)[0] == '-')
      throw ConfigError(key + ": expected a non-negative integer, got '" + *v + "'");
    return static_cast<std::size_t>(n);
  }

  double real(const std::string& key, double fallback) {
    const auto v = take(key);
    if (!v) return fallback;
    if (*v == "inf") return std::numeric_limits<double>::infinity();
    std::size_t pos = 0;
    double d = 0.0;
    try {
      d = std::stod(*v, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != v->size() || v->empty()) throw ConfigError(key + ": expected a number, got '" + *v + "'");
    return d;
  }

  bool flag(const std::string& key, bool fallback) {
    const auto v = take(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1") return true;
    if (*v == "false" || *v == "0") return false;
    throw ConfigError(key + ": expected true or false, got '" + *v + "'");
  }

  // Preset, then every hyperparameter key.
  HyperParams hyper_params() {
    const std::string preset = str("preset", "full");
    HyperParams hp;
    if (preset == "desk") {
      hp = HyperParams::desk_scale();
    } else if (preset != "full") {
      throw ConfigError("preset: expected full or desk, got '" + preset + "'");
    }
    apply_settings(values_, hp);
    for (const auto& [k, v] : to_settings(hp)) values_.erase(k);
    return hp;
  }

  void finish() const {
    if (!values_.empty()) throw ConfigError("unknown setting '" + values_.begin()->first + "'");
  }

 private:
  Settings values_;
};

// Registers a flag that overrides config key `key`.
void setting_option(CLI::App* app, Settings& flags, const std::string& name, const std::string& key,
                    const std::string& help) {
  app->add_option_function<std::string>(name, [&flags, key](const std::string& v) { flags[key] = v; },
                                        help);
}

void setting_flag(CLI::App* app, Settings& flags, const std::string& name, const std::string& key,
                  const std::string& value, const std::string& help) {
  app->add_flag_callback(name, [&flags, key, value] { flags[key] = value; }, help);
}

void model_options(CLI::App* app, Settings& flags) {
  setting_option(app, flags, "--preset", "preset", "full (default) or desk dimensions");
  setting_option(app, flags, "--lambda", "noise_scale", "Laplace noise scale; 0 disables noise");
  setting_option(app, flags, "--delta", "clip_scale", "gradient clip bound; inf disables clipping");
  setting_option(app, flags, "--lr", "learning_rate", "learning rate");
  setting_option(app, flags, "--fraction", "client_fraction", "clients sampled per round");
  setting_option(app, flags, "--dropout", "dropout_rate", "dropout rate");
  setting_option(app, flags, "--negatives", "negatives_H", "negatives per click");
  setting_option(app, flags, "--history-len", "history_len", "clicked news kept per user");
  setting_option(app, flags, "--title-len", "title_len", "words kept per title");
  setting_option(app, flags, "--embed-dim", "word_embed_dim", "word embedding width");
  setting_option(app, flags, "--max-samples", "max_samples_per_client", "per-round sample cap, 0 = all");
  setting_flag(app, flags, "--disable-short-term", "use_short_term", "false", "drop the GRU branch");
  setting_flag(app, flags, "--disable-long-term", "use_long_term", "false", "drop the attention branch");
  setting_flag(app, flags, "--noise-sparse-only", "noise_sparse_only", "true",
               "noise only the embedding rows a client touched");
}

void data_options(CLI::App* app, Settings& flags) {
  setting_option(app, flags, "--data", "data", "directory holding news.tsv, train.tsv, test.tsv");
  setting_option(app, flags, "--news", "news", "news catalog TSV");
  setting_option(app, flags, "--test", "test", "test behaviors TSV");
}

fs::path data_path(Options& o, const std::string& dir, const std::string& key,
                   const std::string& file) {
  const auto explicit_path = o.take(key);
  if (explicit_path) return *explicit_path;
  if (dir.empty()) throw ConfigError("--" + key + " or --data is required");
  return fs::path(dir) / file;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::string metrics_line(const metrics::MetricsReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "auc %.4f  mrr %.4f  ndcg@5 %.4f  ndcg@10 %.4f", r.auc, r.mrr,
                r.ndcg5, r.ndcg10);
  return buf;
}

// --- gen-synth -------------------------------------------------------------------

int gen_synth(Options& o, std::ostream& out) {
  SyntheticSpec spec;
  spec.num_users = o.size("users", spec.num_users);
  spec.num_news = o.size("news_count", spec.num_news);
  spec.num_topics = o.size("topics", spec.num_topics);
  spec.topics_per_user = o.size("topics_per_user", spec.topics_per_user);
  spec.click_noise = o.real("click_noise", spec.click_noise);
  spec.impressions_per_user = o.size("impressions", spec.impressions_per_user);
  spec.candidates_per_impression = o.size("candidates", spec.candidates_per_impression);
  spec.title_len = o.size("synth_title_len", spec.title_len);
  const auto seed = o.take("seed");
  if (!seed) throw ConfigError("--seed is required");
  Options seed_only("", {{"seed", *seed}});
  const std::uint64_t s = seed_only.size("seed", 0);
  const fs::path dir = o.str("out", "");
  if (dir.empty()) throw ConfigError("--out is required");
  const bool force = o.flag("force", false);
  o.size("workers", 1);
  const HyperParams hp = o.hyper_params();
  o.finish();
  spec.validate();

  const fs::path files[] = {dir / "news.tsv", dir / "train.tsv", dir / "test.tsv"};
  for (const auto& f : files) {
    if (fs::exists(f) && !force)
      throw ConfigError(f.string() + " exists; pass --force to overwrite");
  }
  const SyntheticData data = generate_synthetic(spec, hp.history_len, Rng(s));
  {
    auto f = open_output(files[0]);
    write_catalog(f, data.catalog);
  }
  {
    auto f = open_output(files[1]);
    write_behaviors(f, data.train);
  }
  {
    auto f = open_output(files[2]);
    write_behaviors(f, data.test);
  }
  out << "wrote " << data.catalog.size() << " news, " << data.train.size() << " train and "
      << data.test.size() << " test impressions to " << dir.string() << "\n";
  return 0;
}

// --- train ---------------------------------------------------------------------

int train(Options& o, std::ostream& out) {
  const std::string mode = o.str("mode", "federated");
  if (mode != "federated" && mode != "central")
    throw ConfigError("mode: expected federated or central, got '" + mode + "'");
  const std::size_t rounds = o.size("rounds", 300);
  const std::size_t epochs = o.size("epochs", 2);
  const std::size_t batch = o.size("batch", 32);
  const bool mean_loss = o.flag("mean_loss", true);
  const std::uint64_t seed = o.size("seed", 0);
  const std::size_t workers = o.size("workers", 1);
  const std::size_t eval_every = o.size("eval_every", 50);
  const fs::path metrics_path = o.str("metrics_out", "metrics.csv");
  const fs::path model_path = o.str("model_out", "model.ckpt");
  const std::string dir = o.str("data", "");
  const fs::path news_path = data_path(o, dir, "news", "news.tsv");
  const fs::path train_path = data_path(o, dir, "train", "train.tsv");
  const fs::path test_path = data_path(o, dir, "test", "test.tsv");
  HyperParams hp = o.hyper_params();
  o.finish();

  const Catalog catalog = load_catalog(news_path, hp.title_len);
  hp.vocab_size = catalog.vocabulary().size();
  hp.validate();
  const auto train_imps = load_behaviors(train_path, catalog, hp);
  const auto test_imps = load_behaviors(test_path, catalog, hp);

  const Rng root(seed);
  const auto stores = build_client_stores(train_imps, catalog, hp, root.split(1));
  if (stores.empty()) throw DataError(train_path.string() + " yields no training samples");
  const ModelParams init = ModelParams::initialize(hp, root.split(2));

  std::ostringstream csv;
  csv << metrics::kCsvHeader << "\n";
  auto record = [&](std::size_t step, double loss, const ModelParams& params) {
    const auto report = evaluate(params, hp, catalog, test_imps);
    csv << metrics::csv_row(step, loss, report) << "\n";
    out << (mode == "central" ? "epoch " : "round ") << step << "  " << metrics_line(report) << "\n";
  };

  ModelParams final_params(hp);
  if (mode == "federated") {
    TrainCallbacks cb;
    cb.eval_every = eval_every;
    cb.on_eval = [&](std::size_t r, const ModelParams& p, const RoundReport* last) {
      record(r, last ? last->loss_before : std::numeric_limits<double>::quiet_NaN(), p);
    };
    final_params =
        train_federated(stores, hp, init, rounds, root.split(3), {workers, false}, cb).params;
  } else {
    CentralOptions opt;
    opt.epochs = epochs;
    opt.batch_size = batch;
    opt.learning_rate = hp.learning_rate;
    opt.mean_reduction = mean_loss;
    record(0, std::numeric_limits<double>::quiet_NaN(), init);
    final_params = train_centralized(stores, hp, init, opt, root.split(3),
                                     [&](std::size_t e, const ModelParams& p, double loss) {
                                       record(e, loss, p);
                                     })
                       .params;
  }

  auto f = open_output(metrics_path);
  f << csv.str();
  save_checkpoint(model_path, hp, final_params);
  out << "metrics: " << metrics_path.string() << "\nmodel: " << model_path.string() << "\n";
  return 0;
}

// --- evaluate ------------------------------------------------------------------

int evaluate_cmd(Options& o, std::ostream& out) {
  const auto model = o.take("model");
  if (!model) throw ConfigError("--model is required");
  const std::string format = o.str("format", "csv");
  if (format != "csv" && format != "json")
    throw ConfigError("format: expected csv or json, got '" + format + "'");
  const std::string out_path = o.str("out", "");
  const std::string dir = o.str("data", "");
  const fs::path news_path = data_path(o, dir, "news", "news.tsv");
  const fs::path test_path = data_path(o, dir, "test", "test.tsv");

  const Checkpoint ckpt = load_checkpoint(*model);
  // Settings default to the stored ones; a preset or explicit keys override
  // them and must still describe the stored layout.
  HyperParams hp = ckpt.hp;
  const std::string preset = o.str("preset", "");
  if (preset == "desk") {
    hp = HyperParams::desk_scale();
  } else if (preset == "full") {
    hp = HyperParams{};
  } else if (!preset.empty()) {
    throw ConfigError("preset: expected full or desk, got '" + preset + "'");
  }
  Settings overrides;
  for (const auto& [k, v] : to_settings(hp)) {
    if (auto x = o.take(k)) overrides[k] = *x;
  }
  apply_settings(overrides, hp);
  o.finish();

  const Catalog catalog = load_catalog(news_path, hp.title_len);
  hp.vocab_size = catalog.vocabulary().size();
  check_layout(make_layout(hp), ckpt.params.layout());
  hp.validate();
  const auto imps = load_behaviors(test_path, catalog, hp);
  const auto r = evaluate(ckpt.params, hp, catalog, imps);

  out << metrics_line(r) << "\n";
  if (!out_path.empty()) {
    auto f = open_output(out_path);
    if (format == "json") {
      nlohmann::json j = {{"auc", r.auc},       {"mrr", r.mrr},         {"ndcg5", r.ndcg5},
                          {"ndcg10", r.ndcg10}, {"scored", r.scored}, {"skipped", r.skipped}};
      f << j.dump(2) << "\n";
    } else {
      char buf[256];
      std::snprintf(buf, sizeof buf, "%.12f,%.12f,%.12f,%.12f,%zu,%zu", r.auc, r.mrr, r.ndcg5,
                    r.ndcg10, r.scored, r.skipped);
      f << "auc,mrr,ndcg5,ndcg10,scored,skipped\n" << buf << "\n";
    }
  }
  return 0;
}

// --- privacy-report ------------------------------------------------------------

int privacy_report(Options& o, std::ostream& out) {
  const HyperParams hp = o.hyper_params();
  o.finish();
  const ldp::PrivacyConfig cfg = ldp::PrivacyConfig::from(hp);
  cfg.validate();
  char buf[256];
  std::snprintf(buf, sizeof buf, "delta           %g\nlambda          %g\n", cfg.clip_scale,
                cfg.noise_scale);
  out << buf;
  try {
    const double eps = ldp::budget(cfg);
    std::snprintf(buf, sizeof buf,
                  "epsilon         %.4f  (per upload, 2*delta/lambda)\nnoise stddev    %.6g\n"
                  "noise variance  %.6g\n",
                  eps, ldp::noise_stddev(cfg), 2.0 * cfg.noise_scale * cfg.noise_scale);
    out << buf;
  } catch (const BudgetUndefinedError&) {
    out << "budget undefined (no noise)\n";
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Federated news recommendation with local differential privacy", "fednewsrec"};
  app.require_subcommand(1);
  Settings flags;
  std::string config;

  auto* gen = app.add_subcommand("gen-synth", "write a synthetic catalog and click logs");
  gen->add_option("--config", config, "settings file");
  setting_option(gen, flags, "--users", "users", "number of users");
  setting_option(gen, flags, "--news", "news_count", "number of news items");
  setting_option(gen, flags, "--topics", "topics", "number of topics");
  setting_option(gen, flags, "--topics-per-user", "topics_per_user", "liked topics per user");
  setting_option(gen, flags, "--noise", "click_noise", "label flip probability");
  setting_option(gen, flags, "--impressions", "impressions", "impressions per user");
  setting_option(gen, flags, "--candidates", "candidates", "candidates per impression");
  setting_option(gen, flags, "--seed", "seed", "random seed (required)");
  setting_option(gen, flags, "--out", "out", "output directory (required)");
  setting_option(gen, flags, "--workers", "workers", "accepted for symmetry; output never depends on it");
  setting_flag(gen, flags, "--force", "force", "true", "overwrite existing files");
  setting_option(gen, flags, "--preset", "preset", "full (default) or desk");
  setting_option(gen, flags, "--history-len", "history_len", "history kept per impression");

  auto* tr = app.add_subcommand("train", "train a model and write metrics and a checkpoint");
  tr->add_option("--config", config, "settings file");
  model_options(tr, flags);
  data_options(tr, flags);
  setting_option(tr, flags, "--train", "train", "training behaviors TSV");
  setting_option(tr, flags, "--mode", "mode", "federated (default) or central");
  setting_option(tr, flags, "--rounds", "rounds", "federated rounds");
  setting_option(tr, flags, "--epochs", "epochs", "centralized epochs");
  setting_option(tr, flags, "--batch", "batch", "centralized batch size");
  setting_option(tr, flags, "--seed", "seed", "random seed");
  setting_option(tr, flags, "--workers", "workers", "client threads per round");
  setting_option(tr, flags, "--eval-every", "eval_every", "evaluation interval in rounds");
  setting_option(tr, flags, "--metrics-out", "metrics_out", "metrics CSV path");
  setting_option(tr, flags, "--model-out", "model_out", "checkpoint path");
  setting_flag(tr, flags, "--sum-loss", "mean_loss", "false", "centralized: step on the summed batch loss");

  auto* ev = app.add_subcommand("evaluate", "score a checkpoint on test impressions");
  ev->add_option("--config", config, "settings file");
  model_options(ev, flags);
  data_options(ev, flags);
  setting_option(ev, flags, "--model", "model", "checkpoint path");
  setting_option(ev, flags, "--format", "format", "csv (default) or json");
  setting_option(ev, flags, "--out", "out", "write the metrics to this file");

  auto* pr = app.add_subcommand("privacy-report", "print the per-upload privacy budget");
  pr->add_option("--config", config, "settings file");
  model_options(pr, flags);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, m;
    const int code = app.exit(e, o, m);
    out << o.str();
    err << m.str();
    return code;
  }

  try {
    Options opts(config, flags);
    if (gen->parsed()) return gen_synth(opts, out);
    if (tr->parsed()) return train(opts, out);
    if (ev->parsed()) return evaluate_cmd(opts, out);
    return privacy_report(opts, out);
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace fednewsrec::cli
