#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fednewsrec/dataset.h"
#include "fednewsrec/rng.h"

namespace fednewsrec {

// Topic-structured click log. Each news item belongs to one topic and its
// title mixes words from that topic's vocabulary block with shared filler
// words. Each user likes topics_per_user topics with random weights; a
// candidate of topic k is clicked with probability pref[k] / max(pref), then
// the label is flipped with probability click_noise.
struct SyntheticSpec {
  std::size_t num_users = 200;
  std::size_t num_news = 500;
  std::size_t num_topics = 8;
  std::size_t words_per_topic = 20;
  std::size_t filler_words = 20;
  double filler_prob = 0.25;
  std::size_t title_len = 10;  // titles have 3..title_len words
  double click_noise = 0.1;
  std::size_t topics_per_user = 2;
  std::size_t impressions_per_user = 10;
  std::size_t candidates_per_impression = 5;
  std::size_t initial_history = 5;
  double train_fraction = 0.8;

  // Throws ConfigError for degenerate settings.
  void validate() const;
};

struct SyntheticData {
  Catalog catalog;
  std::vector<Impression> train;
  std::vector<Impression> test;
  std::map<std::string, std::size_t> news_topic;
  std::map<std::string, std::vector<double>> user_preference;  // sums to 1
};

// Deterministic given (spec, rng). Impressions are split by time: each user's
// first round(train_fraction * impressions_per_user) impressions are training
// data. Test impressions carry the training-period clicks in their history
// column so the test file is self-contained.
SyntheticData generate_synthetic(const SyntheticSpec& spec, std::size_t history_len, Rng rng);

// Scores each candidate by the generating user's preference for its topic.
double oracle_score(const SyntheticData& data, const std::string& user_id,
                    const std::string& news_id);

}  // namespace fednewsrec
