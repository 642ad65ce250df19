#include "fednewsrec/synthetic.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "fednewsrec/error.h"

namespace fednewsrec {
namespace {

constexpr std::int64_t kStartTime = 1571443200;  // 2019-10-19 00:00 UTC
constexpr std::int64_t kDay = 86400;

std::string padded(const char* prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, width, i);
  return buf;
}

int digits(std::size_t n) { return static_cast<int>(std::to_string(n > 0 ? n - 1 : 0).size()); }

// Index drawn with probability proportional to weights.
std::size_t draw_weighted(const std::vector<double>& weights, Rng& rng) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return 0;
}

}  // namespace

void SyntheticSpec::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v < 1) throw ConfigError(std::string(name) + " must be >= 1");
  };
  positive(num_users, "num_users");
  positive(num_news, "num_news");
  positive(num_topics, "num_topics");
  positive(words_per_topic, "words_per_topic");
  positive(topics_per_user, "topics_per_user");
  positive(impressions_per_user, "impressions_per_user");
  positive(candidates_per_impression, "candidates_per_impression");
  positive(initial_history, "initial_history");
  if (title_len < 1) throw ConfigError("title_len must be >= 1");
  if (topics_per_user > num_topics) throw ConfigError("topics_per_user exceeds num_topics");
  if (candidates_per_impression > num_news) {
    throw ConfigError("candidates_per_impression exceeds num_news");
  }
  if (!(click_noise >= 0.0 && click_noise < 0.5)) {
    throw ConfigError("click_noise must be in [0, 0.5)");
  }
  if (!(filler_prob >= 0.0 && filler_prob <= 1.0)) {
    throw ConfigError("filler_prob must be in [0, 1]");
  }
  if (filler_prob > 0.0 && filler_words == 0) {
    throw ConfigError("filler_prob > 0 requires filler_words >= 1");
  }
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw ConfigError("train_fraction must be in (0, 1]");
  }
}

SyntheticData generate_synthetic(const SyntheticSpec& spec, std::size_t history_len, Rng rng) {
  spec.validate();
  SyntheticData data;

  // News catalog.
  Rng news_rng = rng.split(0);
  const std::size_t min_len = std::min<std::size_t>(3, spec.title_len);
  std::vector<std::vector<std::size_t>> news_by_topic(spec.num_topics);
  std::vector<std::string> news_ids(spec.num_news);
  std::vector<std::size_t> topic_of(spec.num_news);
  for (std::size_t n = 0; n < spec.num_news; ++n) {
    news_ids[n] = padded("N", n, digits(spec.num_news));
    // Cycle topics first so every topic owns at least one article.
    const std::size_t topic =
        n < spec.num_topics ? n : static_cast<std::size_t>(news_rng.uniform_index(spec.num_topics));
    topic_of[n] = topic;
    news_by_topic[topic].push_back(n);
    const std::size_t len = min_len + news_rng.uniform_index(spec.title_len - min_len + 1);
    std::string title;
    for (std::size_t w = 0; w < len; ++w) {
      if (w) title += ' ';
      if (spec.filler_words > 0 && news_rng.uniform() < spec.filler_prob) {
        title += "c" + std::to_string(news_rng.uniform_index(spec.filler_words));
      } else {
        title += "t" + std::to_string(topic) + "w" +
                 std::to_string(news_rng.uniform_index(spec.words_per_topic));
      }
    }
    data.catalog.add(news_ids[n], title, spec.title_len);
    data.news_topic[news_ids[n]] = topic;
  }

  const std::size_t train_count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(spec.train_fraction *
                                               static_cast<double>(spec.impressions_per_user))));

  struct Raw {
    Impression imp;
    bool train;
  };
  std::vector<Raw> raw;
  raw.reserve(spec.num_users * spec.impressions_per_user);

  for (std::size_t u = 0; u < spec.num_users; ++u) {
    Rng user_rng = rng.split(1).split(u);
    const std::string user_id = padded("U", u, digits(spec.num_users));

    // Liked topics with random positive weights, normalised.
    std::vector<std::size_t> topics(spec.num_topics);
    std::iota(topics.begin(), topics.end(), 0);
    std::vector<double> pref(spec.num_topics, 0.0);
    for (std::size_t i = 0; i < spec.topics_per_user; ++i) {
      const std::size_t j = i + user_rng.uniform_index(spec.num_topics - i);
      std::swap(topics[i], topics[j]);
      pref[topics[i]] = 0.2 + user_rng.uniform();
    }
    const double total = std::accumulate(pref.begin(), pref.end(), 0.0);
    for (double& p : pref) p /= total;
    const double max_pref = *std::max_element(pref.begin(), pref.end());
    data.user_preference[user_id] = pref;

    auto liked_news = [&]() {
      const auto& pool = news_by_topic[draw_weighted(pref, user_rng)];
      return pool[user_rng.uniform_index(pool.size())];
    };

    std::vector<std::string> prior;
    for (std::size_t i = 0; i < spec.initial_history; ++i) prior.push_back(news_ids[liked_news()]);

    std::vector<std::string> train_clicks;
    for (std::size_t j = 0; j < spec.impressions_per_user; ++j) {
      Impression imp;
      imp.user_id = user_id;
      imp.timestamp = kStartTime + static_cast<std::int64_t>(j) * kDay +
                      static_cast<std::int64_t>(u) * 60;
      const bool train = j < train_count;
      imp.prior_history = prior;
      if (!train) {
        imp.prior_history.insert(imp.prior_history.end(), train_clicks.begin(), train_clicks.end());
        if (imp.prior_history.size() > history_len) {
          imp.prior_history.erase(imp.prior_history.begin(),
                                  imp.prior_history.end() -
                                      static_cast<std::ptrdiff_t>(history_len));
        }
      }

      // One candidate from a liked topic, the rest uniform, all distinct.
      std::vector<std::size_t> picked{liked_news()};
      while (picked.size() < spec.candidates_per_impression) {
        const std::size_t n = user_rng.uniform_index(spec.num_news);
        if (std::find(picked.begin(), picked.end(), n) == picked.end()) picked.push_back(n);
      }
      for (std::size_t i = picked.size(); i > 1; --i) {
        std::swap(picked[i - 1], picked[user_rng.uniform_index(i)]);
      }
      for (std::size_t n : picked) {
        const double p = pref[topic_of[n]] / max_pref;
        bool clicked = user_rng.uniform() < p;
        if (user_rng.uniform() < spec.click_noise) clicked = !clicked;
        imp.candidates.push_back({news_ids[n], clicked});
        if (clicked && train) train_clicks.push_back(news_ids[n]);
      }
      raw.push_back({std::move(imp), train});
    }
  }

  std::stable_sort(raw.begin(), raw.end(), [](const Raw& a, const Raw& b) {
    return a.imp.timestamp < b.imp.timestamp;
  });
  for (auto& r : raw) (r.train ? data.train : data.test).push_back(std::move(r.imp));
  build_history_snapshots(data.train, history_len);
  build_history_snapshots(data.test, history_len);
  return data;
}

double oracle_score(const SyntheticData& data, const std::string& user_id,
                    const std::string& news_id) {
  return data.user_preference.at(user_id).at(data.news_topic.at(news_id));
}

}  // namespace fednewsrec
