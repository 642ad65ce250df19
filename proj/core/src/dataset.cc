#include "fednewsrec/dataset.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "fednewsrec/error.h"

namespace fednewsrec {
namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : text) {
    if (c == sep) {
      parts.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(std::move(cur));
  return parts;
}

std::vector<std::string> split_whitespace(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(std::move(w));
  return words;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::string lowercase(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return in;
}

std::string at_line(std::size_t line_no) { return "line " + std::to_string(line_no) + ": "; }

}  // namespace

// --- Vocabulary / Catalog --------------------------------------------------

std::uint32_t Vocabulary::add(const std::string& word) {
  auto [it, inserted] = index_.try_emplace(word, static_cast<std::uint32_t>(words_.size()));
  if (inserted) words_.push_back(word);
  return it->second;
}

std::optional<std::uint32_t> Vocabulary::find(const std::string& word) const {
  if (auto it = index_.find(word); it != index_.end()) return it->second;
  return std::nullopt;
}

const NewsArticle& Catalog::add(const std::string& news_id, const std::string& title,
                                std::size_t title_len) {
  if (news_id.empty()) throw DataError("empty news id");
  if (index_.contains(news_id)) throw DataError("duplicate news id '" + news_id + "'");
  auto words = split_whitespace(lowercase(title));
  if (words.empty()) throw DataError("news '" + news_id + "' has an empty title");
  if (words.size() > title_len) words.resize(title_len);
  NewsArticle article{news_id, {}};
  article.token_ids.reserve(words.size());
  for (const auto& w : words) article.token_ids.push_back(vocab_.add(w));
  index_.emplace(news_id, articles_.size());
  articles_.push_back(std::move(article));
  return articles_.back();
}

const NewsArticle& Catalog::at(const std::string& news_id) const {
  auto it = index_.find(news_id);
  if (it == index_.end()) throw DataError("unknown news id '" + news_id + "'");
  return articles_[it->second];
}

Catalog parse_catalog(std::istream& in, std::size_t title_len) {
  Catalog catalog;
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    strip_cr(line);
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError(at_line(line_no) + "expected 'news_id<TAB>title'");
    }
    try {
      catalog.add(line.substr(0, tab), line.substr(tab + 1), title_len);
    } catch (const ParseError&) {
      throw;
    } catch (const DataError& e) {
      throw DataError(at_line(line_no) + e.what());
    }
  }
  return catalog;
}

Catalog load_catalog(const std::filesystem::path& path, std::size_t title_len) {
  auto in = open_input(path);
  return parse_catalog(in, title_len);
}

void write_catalog(std::ostream& out, const Catalog& catalog) {
  const Vocabulary& vocab = catalog.vocabulary();
  for (const auto& a : catalog.articles()) {
    out << a.news_id << '\t';
    for (std::size_t i = 0; i < a.token_ids.size(); ++i) {
      if (i) out << ' ';
      out << vocab.word(a.token_ids[i]);
    }
    out << '\n';
  }
}

// --- Behaviors -------------------------------------------------------------

void build_history_snapshots(std::vector<Impression>& impressions, std::size_t history_len) {
  struct UserState {
    std::int64_t last_time = 0;
    bool seen = false;
    // Clicks from impressions strictly before the current timestamp, and
    // those at the current timestamp that are not yet visible.
    std::vector<std::string> clicks;
    std::vector<std::string> pending;
    std::int64_t pending_time = 0;
  };
  std::map<std::string, UserState> users;
  for (auto& imp : impressions) {
    UserState& u = users[imp.user_id];
    if (u.seen && imp.timestamp < u.last_time) {
      throw DataError("timestamps of user '" + imp.user_id + "' are not monotone (" +
                      std::to_string(imp.timestamp) + " after " +
                      std::to_string(u.last_time) + ")");
    }
    if (!u.pending.empty() && u.pending_time < imp.timestamp) {
      u.clicks.insert(u.clicks.end(), u.pending.begin(), u.pending.end());
      u.pending.clear();
    }
    u.seen = true;
    u.last_time = imp.timestamp;

    std::vector<std::string> full = imp.prior_history;
    full.insert(full.end(), u.clicks.begin(), u.clicks.end());
    const std::size_t keep = std::min(history_len, full.size());
    imp.history.assign(full.end() - static_cast<std::ptrdiff_t>(keep), full.end());

    for (const auto& c : imp.candidates) {
      if (c.clicked) u.pending.push_back(c.news_id);
    }
    u.pending_time = imp.timestamp;
  }
}

std::vector<Impression> parse_behaviors(std::istream& in, const Catalog& catalog,
                                        const HyperParams& hp) {
  std::vector<Impression> impressions;
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    strip_cr(line);
    if (line.empty()) continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 4) {
      throw ParseError(at_line(line_no) + "expected 4 tab-separated columns, got " +
                       std::to_string(cols.size()));
    }
    Impression imp;
    imp.user_id = cols[0];
    if (imp.user_id.empty()) throw ParseError(at_line(line_no) + "empty user id");
    try {
      std::size_t pos = 0;
      imp.timestamp = std::stoll(cols[1], &pos);
      if (pos != cols[1].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError(at_line(line_no) + "bad timestamp '" + cols[1] + "'");
    }
    if (!trim(cols[2]).empty()) {
      for (auto& id : split(trim(cols[2]), ',')) {
        if (!catalog.contains(id)) {
          throw DataError(at_line(line_no) + "unknown news id '" + id + "' in history");
        }
        imp.prior_history.push_back(std::move(id));
      }
    }
    for (const auto& token : split_whitespace(cols[3])) {
      const auto dash = token.rfind('-');
      if (dash == std::string::npos || dash == 0 || dash + 2 != token.size() ||
          (token[dash + 1] != '0' && token[dash + 1] != '1')) {
        throw ParseError(at_line(line_no) + "bad candidate '" + token +
                         "', expected newsid-1 or newsid-0");
      }
      std::string id = token.substr(0, dash);
      if (!catalog.contains(id)) {
        throw DataError(at_line(line_no) + "unknown news id '" + id + "' in candidates");
      }
      imp.candidates.push_back({std::move(id), token[dash + 1] == '1'});
    }
    if (imp.candidates.empty()) throw ParseError(at_line(line_no) + "impression has no candidates");
    impressions.push_back(std::move(imp));
  }
  build_history_snapshots(impressions, hp.history_len);
  return impressions;
}

std::vector<Impression> load_behaviors(const std::filesystem::path& path,
                                       const Catalog& catalog, const HyperParams& hp) {
  auto in = open_input(path);
  return parse_behaviors(in, catalog, hp);
}

void write_behaviors(std::ostream& out, const std::vector<Impression>& impressions) {
  for (const auto& imp : impressions) {
    out << imp.user_id << '\t' << imp.timestamp << '\t';
    for (std::size_t i = 0; i < imp.prior_history.size(); ++i) {
      if (i) out << ',';
      out << imp.prior_history[i];
    }
    out << '\t';
    for (std::size_t i = 0; i < imp.candidates.size(); ++i) {
      if (i) out << ' ';
      out << imp.candidates[i].news_id << '-' << (imp.candidates[i].clicked ? '1' : '0');
    }
    out << '\n';
  }
}

// --- Client stores ---------------------------------------------------------

std::vector<std::size_t> sample_indices(std::size_t population, std::size_t count, Rng& rng) {
  std::vector<std::size_t> picked;
  if (population == 0 || count == 0) return picked;
  picked.reserve(count);
  if (count <= population) {
    std::vector<std::size_t> pool(population);
    for (std::size_t i = 0; i < population; ++i) pool[i] = i;
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + rng.uniform_index(population - i);
      std::swap(pool[i], pool[j]);
      picked.push_back(pool[i]);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) picked.push_back(rng.uniform_index(population));
  }
  return picked;
}

std::vector<ClientStore> build_client_stores(const std::vector<Impression>& impressions,
                                             const Catalog& catalog, const HyperParams& hp,
                                             Rng rng) {
  std::map<std::string, std::vector<const Impression*>> by_user;
  for (const auto& imp : impressions) by_user[imp.user_id].push_back(&imp);

  std::vector<ClientStore> stores;
  std::size_t ordinal = 0;
  for (const auto& [user_id, imps] : by_user) {
    const Rng user_rng = rng.split(ordinal++);
    Rng sampling = user_rng.split(0);
    ClientStore store;
    store.user_id = user_id;
    for (const Impression* imp : imps) {
      std::vector<const Candidate*> clicked, skipped;
      for (const auto& c : imp->candidates) (c.clicked ? clicked : skipped).push_back(&c);
      for (const Candidate* c : clicked) {
        store.click_history.push_back(c->news_id);
        store.click_times.push_back(imp->timestamp);
      }
      if (imp->history.empty() || skipped.empty()) continue;

      std::vector<TokenIds> history;
      history.reserve(imp->history.size());
      for (const auto& id : imp->history) history.push_back(catalog.at(id).token_ids);
      for (const Candidate* c : clicked) {
        TrainingSample s;
        s.history = history;
        s.positive = catalog.at(c->news_id).token_ids;
        for (std::size_t k : sample_indices(skipped.size(), hp.negatives_H, sampling)) {
          s.negatives.push_back(catalog.at(skipped[k]->news_id).token_ids);
        }
        store.samples.push_back(std::move(s));
      }
    }
    if (store.samples.empty()) continue;
    store.rng = user_rng.split(1);
    store.index = stores.size();
    stores.push_back(std::move(store));
  }
  return stores;
}

// --- Embeddings / settings -------------------------------------------------

std::size_t load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                            ModelParams& params) {
  auto in = open_input(path);
  Tensor& emb = params.embedding();
  std::size_t matched = 0;
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    strip_cr(line);
    const auto parts = split_whitespace(line);
    if (parts.empty()) continue;
    const auto id = vocab.find(lowercase(parts[0]));
    if (!id || *id >= emb.rows()) continue;
    if (parts.size() - 1 != emb.cols()) {
      throw ParseError(at_line(line_no) + "embedding has " + std::to_string(parts.size() - 1) +
                       " values, expected " + std::to_string(emb.cols()));
    }
    auto row = emb.row(*id);
    for (std::size_t j = 0; j < row.size(); ++j) {
      try {
        row[j] = std::stod(parts[j + 1]);
      } catch (const std::exception&) {
        throw ParseError(at_line(line_no) + "bad embedding value '" + parts[j + 1] + "'");
      }
    }
    ++matched;
  }
  return matched;
}

Settings parse_settings(std::istream& in) {
  Settings settings;
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(at_line(line_no) + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(at_line(line_no) + "empty key");
    settings[key] = value;
  }
  return settings;
}

Settings load_settings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  return parse_settings(in);
}

}  // namespace fednewsrec
