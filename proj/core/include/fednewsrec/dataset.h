#pragma once

// News catalog and behavior log ingestion.
//
// Catalog TSV:   news_id<TAB>title
// Behavior TSV:  user_id<TAB>unix_timestamp<TAB>h1,h2,...<TAB>n1-1 n2-0 ...
//
// The history column lists clicks that precede the log. A history snapshot for
// an impression is that column followed by the user's clicks from earlier
// impressions of the same file, truncated to the most recent history_len.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fednewsrec/hyper_params.h"
#include "fednewsrec/model.h"
#include "fednewsrec/rng.h"

namespace fednewsrec {

class Vocabulary {
 public:
  std::uint32_t add(const std::string& word);
  std::optional<std::uint32_t> find(const std::string& word) const;
  const std::string& word(std::uint32_t id) const { return words_.at(id); }
  std::size_t size() const { return words_.size(); }

  bool operator==(const Vocabulary& other) const { return words_ == other.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct NewsArticle {
  std::string news_id;
  TokenIds token_ids;
  bool operator==(const NewsArticle&) const = default;
};

class Catalog {
 public:
  // Lowercases, splits on whitespace and keeps the first title_len words.
  // Throws DataError on an empty title or a duplicate id.
  const NewsArticle& add(const std::string& news_id, const std::string& title,
                         std::size_t title_len);

  const NewsArticle& at(const std::string& news_id) const;
  bool contains(const std::string& news_id) const { return index_.contains(news_id); }
  const std::vector<NewsArticle>& articles() const { return articles_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  std::size_t size() const { return articles_.size(); }

  bool operator==(const Catalog& other) const {
    return articles_ == other.articles_ && vocab_ == other.vocab_;
  }

 private:
  std::vector<NewsArticle> articles_;
  std::unordered_map<std::string, std::size_t> index_;
  Vocabulary vocab_;
};

struct Candidate {
  std::string news_id;
  bool clicked = false;
  bool operator==(const Candidate&) const = default;
};

struct Impression {
  std::string user_id;
  std::int64_t timestamp = 0;
  std::vector<std::string> prior_history;  // history column as read
  std::vector<std::string> history;        // snapshot, oldest first
  std::vector<Candidate> candidates;

  bool operator==(const Impression&) const = default;
};

Catalog parse_catalog(std::istream& in, std::size_t title_len);
Catalog load_catalog(const std::filesystem::path& path, std::size_t title_len);
void write_catalog(std::ostream& out, const Catalog& catalog);

std::vector<Impression> parse_behaviors(std::istream& in, const Catalog& catalog,
                                        const HyperParams& hp);
std::vector<Impression> load_behaviors(const std::filesystem::path& path,
                                       const Catalog& catalog, const HyperParams& hp);
void write_behaviors(std::ostream& out, const std::vector<Impression>& impressions);

// Recomputes every impression's history snapshot from prior_history and the
// earlier clicks of the same user. Throws DataError when a user's timestamps
// decrease.
void build_history_snapshots(std::vector<Impression>& impressions, std::size_t history_len);

// One simulated device.
struct ClientStore {
  std::string user_id;
  std::size_t index = 0;  // position in user-id order; fixes aggregation order
  std::vector<std::string> click_history;
  std::vector<std::int64_t> click_times;
  std::vector<TrainingSample> samples;
  Rng rng{0};
};

// For every click with a non-empty history, draws negatives_H non-clicked
// candidates of the same impression: without replacement when enough exist,
// with replacement otherwise. Clicks in impressions without any non-clicked
// candidate are dropped, as are users left with no samples. Stores are
// returned in ascending user-id order; store i samples from rng.split(i).
std::vector<ClientStore> build_client_stores(const std::vector<Impression>& impressions,
                                             const Catalog& catalog, const HyperParams& hp,
                                             Rng rng);

// Draws count indices from [0, population): uniformly without replacement
// when count <= population, otherwise independently with replacement.
std::vector<std::size_t> sample_indices(std::size_t population, std::size_t count, Rng& rng);

// Reads "word v1 v2 ..." lines into matching rows of the word embedding.
// Returns the number of vocabulary rows overwritten.
std::size_t load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                            ModelParams& params);

// Flat "key = value" configuration with '#' comments.
Settings parse_settings(std::istream& in);
Settings load_settings(const std::filesystem::path& path);

}  // namespace fednewsrec
