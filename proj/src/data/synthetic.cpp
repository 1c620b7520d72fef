#include "pprec/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "pprec/common/error.hpp"
#include "pprec/common/rng.hpp"

namespace pprec::data {

namespace {

constexpr int kEntitiesPerTopic = 6;

std::string label(const char* prefix, int i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, width, i);
  return std::string(buf);
}

void validate(const GeneratorConfig& cfg) {
  auto fail = [](const std::string& what) { throw ConfigError("generator config: " + what); };
  if (cfg.news <= 0) fail("news must be positive");
  if (cfg.users <= 0) fail("users must be positive");
  if (cfg.topics <= 0) fail("topics must be positive");
  if (cfg.impressions <= 0) fail("impressions must be positive");
  if (cfg.candidates_per_impression < 2) fail("candidates_per_impression must be at least 2");
  if (cfg.pop_weight < 0.0 || cfg.pop_weight > 1.0) fail("pop_weight must lie in [0,1]");
  if (cfg.title_words_min < 1 || cfg.title_words_max < cfg.title_words_min)
    fail("title word range is empty");
  if (cfg.max_entities < 0 || cfg.max_entities > kEntitiesPerTopic)
    fail("max_entities must lie in [0," + std::to_string(kEntitiesPerTopic) + "]");
  if (cfg.vocab_words < cfg.topics * 2 + 4) fail("vocab_words too small for the topic pools");
  if (cfg.train_frac <= 0.0 || cfg.valid_frac <= 0.0 || cfg.train_frac + cfg.valid_frac >= 1.0)
    fail("split fractions must be positive and sum below 1");
  if (cfg.publish_span_hours <= 0.0 || cfg.bootstrap_hours <= 0.0 || cfg.horizon_hours <= 0.0)
    fail("time spans must be positive");
  if (cfg.cold_user_fraction < 0.0 || cfg.cold_user_fraction > 1.0)
    fail("cold_user_fraction must lie in [0,1]");
  if (cfg.bootstrap_clicks_min < 0 || cfg.bootstrap_clicks_max < cfg.bootstrap_clicks_min)
    fail("bootstrap click range is empty");
  if (cfg.pop_half_life_hours < 0.0) fail("pop_half_life_hours must be non-negative");
  if (cfg.affinity_floor < 0.0 || cfg.affinity_secondary < cfg.affinity_floor ||
      cfg.affinity_secondary > 1.0)
    fail("affinity levels must satisfy 0 <= floor <= secondary <= 1");
}

struct UserProfile {
  int primary = 0;
  int secondary = 0;
};

double affinity(const UserProfile& u, int topic, const GeneratorConfig& cfg) {
  if (topic == u.primary) return 1.0;
  if (topic == u.secondary) return cfg.affinity_secondary;
  return cfg.affinity_floor;
}

/// Moves a split point forward until the timestamp strictly increases, so
/// split maxima/minima never collide.
std::size_t strict_boundary(const std::vector<RawImpression>& imps, std::size_t at) {
  while (at > 0 && at < imps.size() && imps[at].ts == imps[at - 1].ts) {
    ++at;
  }
  return std::min(at, imps.size());
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const GeneratorConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Rng rng(derive_seed(seed, "synthetic-corpus"));
  SyntheticCorpus out;

  // Word pools: one shared quarter, the rest sliced per topic.
  const int shared_words = cfg.vocab_words / 4;
  const int topic_words = (cfg.vocab_words - shared_words) / cfg.topics;
  if (topic_words < 1) {
    throw ConfigError("generator config: vocab_words too small for the topic pools");
  }
  std::vector<std::string> words(static_cast<std::size_t>(cfg.vocab_words));
  for (int i = 0; i < cfg.vocab_words; ++i) {
    words[static_cast<std::size_t>(i)] = label("w", i, 4);
  }
  auto topic_word = [&](int topic, int k) {
    return words[static_cast<std::size_t>(shared_words + topic * topic_words + k)];
  };

  std::vector<std::vector<std::string>> topic_entities(static_cast<std::size_t>(cfg.topics));
  for (int t = 0; t < cfg.topics; ++t) {
    for (int e = 0; e < kEntitiesPerTopic; ++e) {
      topic_entities[static_cast<std::size_t>(t)].push_back(label("topic", t, 2) + "_ent" +
                                                            std::to_string(e));
    }
  }

  const std::int64_t pub_start = cfg.base_time;
  const std::int64_t pub_end =
      cfg.base_time + static_cast<std::int64_t>(cfg.publish_span_hours * 3600.0);
  const std::int64_t imp_start =
      cfg.base_time + static_cast<std::int64_t>(cfg.bootstrap_hours * 3600.0);
  const std::int64_t imp_end = imp_start + static_cast<std::int64_t>(cfg.horizon_hours * 3600.0);

  // News: topic, publish time, template title, entities, raw popularity.
  std::vector<int> news_topic(static_cast<std::size_t>(cfg.news));
  std::vector<double> raw_pop(static_cast<std::size_t>(cfg.news));
  out.news.resize(static_cast<std::size_t>(cfg.news));
  for (int i = 0; i < cfg.news; ++i) {
    const int topic = static_cast<int>(rng.index(static_cast<std::size_t>(cfg.topics)));
    news_topic[static_cast<std::size_t>(i)] = topic;
    RawNews& n = out.news[static_cast<std::size_t>(i)];
    n.id = label("n", i, 5);
    n.topic = label("topic", topic, 2);
    n.publish_ts = rng.integer(pub_start, pub_end - 1);
    const int title_len =
        static_cast<int>(rng.integer(cfg.title_words_min, cfg.title_words_max));
    std::string title;
    for (int w = 0; w < title_len; ++w) {
      if (!title.empty()) title += " ";
      if (rng.bernoulli(0.7)) {
        title += topic_word(topic, static_cast<int>(rng.index(static_cast<std::size_t>(topic_words))));
      } else {
        title += words[rng.index(static_cast<std::size_t>(shared_words))];
      }
    }
    n.title = std::move(title);
    const int n_ent = static_cast<int>(rng.index(static_cast<std::size_t>(cfg.max_entities + 1)));
    std::vector<std::string> pool = topic_entities[static_cast<std::size_t>(topic)];
    std::shuffle(pool.begin(), pool.end(), rng.engine());
    n.entities.assign(pool.begin(), pool.begin() + n_ent);
    raw_pop[static_cast<std::size_t>(i)] = rng.normal(0.0, 1.0) * cfg.pop_contrast;
  }
  // Squash log-popularity through a logistic: the ordering stays heavy-tailed
  // but the unit interval is used evenly, so pop_weight trades off against
  // topic affinity at face value (min-max would let one outlier flatten the
  // rest to ~0 and quietly neuter the knob).
  out.latent_popularity.resize(raw_pop.size());
  for (std::size_t i = 0; i < raw_pop.size(); ++i) {
    out.latent_popularity[i] = 1.0 / (1.0 + std::exp(-raw_pop[i]));
  }

  auto popularity_at = [&](int news, std::int64_t ts) {
    double p = out.latent_popularity[static_cast<std::size_t>(news)];
    if (cfg.pop_half_life_hours > 0.0) {
      const double age_h =
          std::max<double>(0.0, static_cast<double>(ts - out.news[static_cast<std::size_t>(news)]
                                                              .publish_ts)) /
          3600.0;
      p *= std::exp2(-age_h / cfg.pop_half_life_hours);
    }
    return p;
  };

  // Publish-order index so "published before ts" is a prefix.
  std::vector<int> by_pub(static_cast<std::size_t>(cfg.news));
  for (int i = 0; i < cfg.news; ++i) by_pub[static_cast<std::size_t>(i)] = i;
  std::stable_sort(by_pub.begin(), by_pub.end(), [&](int a, int b) {
    return out.news[static_cast<std::size_t>(a)].publish_ts <
           out.news[static_cast<std::size_t>(b)].publish_ts;
  });
  std::vector<std::int64_t> pub_sorted(by_pub.size());
  for (std::size_t i = 0; i < by_pub.size(); ++i) {
    pub_sorted[i] = out.news[static_cast<std::size_t>(by_pub[i])].publish_ts;
  }
  auto published_before = [&](std::int64_t ts) {
    return static_cast<std::size_t>(
        std::upper_bound(pub_sorted.begin(), pub_sorted.end(), ts) - pub_sorted.begin());
  };
  // Per-topic publish-ordered lists for preference-driven bootstrap clicks.
  std::vector<std::vector<int>> topic_by_pub(static_cast<std::size_t>(cfg.topics));
  std::vector<std::vector<std::int64_t>> topic_pub_sorted(static_cast<std::size_t>(cfg.topics));
  for (int idx : by_pub) {
    const int t = news_topic[static_cast<std::size_t>(idx)];
    topic_by_pub[static_cast<std::size_t>(t)].push_back(idx);
    topic_pub_sorted[static_cast<std::size_t>(t)].push_back(
        out.news[static_cast<std::size_t>(idx)].publish_ts);
  }

  // Users: topic preferences plus capped "cold" histories for the
  // cold-start buckets.
  const int cold_users = static_cast<int>(static_cast<double>(cfg.users) * cfg.cold_user_fraction);
  constexpr int kColdSizes[4] = {0, 1, 3, 5};
  std::vector<UserProfile> profiles(static_cast<std::size_t>(cfg.users));
  std::vector<std::string> user_ids(static_cast<std::size_t>(cfg.users));
  for (int u = 0; u < cfg.users; ++u) {
    UserProfile& p = profiles[static_cast<std::size_t>(u)];
    p.primary = static_cast<int>(rng.index(static_cast<std::size_t>(cfg.topics)));
    p.secondary = cfg.topics == 1 ? p.primary
                                  : static_cast<int>((p.primary + 1 +
                                                      rng.index(static_cast<std::size_t>(
                                                          cfg.topics - 1))) %
                                                     cfg.topics);
    user_ids[static_cast<std::size_t>(u)] = label("u", u, 4);
    out.user_primary_topic.push_back(p.primary);
    out.user_secondary_topic.push_back(p.secondary);
  }

  // Bootstrap click history before the impression window opens.
  for (int u = 0; u < cfg.users; ++u) {
    const int clicks = u < cold_users
                           ? kColdSizes[u % 4]
                           : static_cast<int>(rng.integer(cfg.bootstrap_clicks_min,
                                                          cfg.bootstrap_clicks_max));
    const UserProfile& prof = profiles[static_cast<std::size_t>(u)];
    for (int j = 0; j < clicks; ++j) {
      const std::int64_t ts = rng.integer(pub_start + 1800, imp_start - 1);
      const double r = rng.uniform();
      const int topic = r < 0.6 ? prof.primary
                        : r < 0.85
                            ? prof.secondary
                            : static_cast<int>(rng.index(static_cast<std::size_t>(cfg.topics)));
      const auto& tp = topic_pub_sorted[static_cast<std::size_t>(topic)];
      const std::size_t avail = static_cast<std::size_t>(
          std::upper_bound(tp.begin(), tp.end(), ts) - tp.begin());
      int news;
      if (avail > 0) {
        news = topic_by_pub[static_cast<std::size_t>(topic)][rng.index(avail)];
      } else {
        const std::size_t any = published_before(ts);
        if (any == 0) continue;
        news = by_pub[rng.index(any)];
      }
      out.clicks.push_back({user_ids[static_cast<std::size_t>(u)],
                            out.news[static_cast<std::size_t>(news)].id, ts});
    }
  }

  // Impressions: uniform candidate exposure, clicks from the affinity /
  // popularity mix, at least one positive and one negative forced per record.
  std::vector<RawImpression> imps;
  imps.reserve(static_cast<std::size_t>(cfg.impressions));
  const std::size_t want = static_cast<std::size_t>(cfg.candidates_per_impression);
  for (int i = 0; i < cfg.impressions; ++i) {
    std::int64_t ts = 0;
    std::size_t avail = 0;
    for (int attempt = 0; attempt < 100; ++attempt) {
      ts = rng.integer(imp_start, imp_end - 1);
      avail = published_before(ts);
      if (avail >= want) break;
    }
    if (avail < want) {
      throw ConfigError("generator config: not enough published news to fill impressions");
    }
    const int u = static_cast<int>(rng.index(static_cast<std::size_t>(cfg.users)));
    const UserProfile& prof = profiles[static_cast<std::size_t>(u)];

    std::vector<int> chosen;
    if (avail < want * 2) {
      chosen.assign(by_pub.begin(), by_pub.begin() + static_cast<std::ptrdiff_t>(avail));
      std::shuffle(chosen.begin(), chosen.end(), rng.engine());
      chosen.resize(want);
    } else {
      std::unordered_set<int> used;
      while (chosen.size() < want) {
        const int cand = by_pub[rng.index(avail)];
        if (used.insert(cand).second) {
          chosen.push_back(cand);
        }
      }
    }

    RawImpression imp;
    imp.user = user_ids[static_cast<std::size_t>(u)];
    imp.ts = ts;
    std::vector<double> probs(chosen.size());
    for (std::size_t c = 0; c < chosen.size(); ++c) {
      const int news = chosen[c];
      const double mix = (1.0 - cfg.pop_weight) *
                             affinity(prof, news_topic[static_cast<std::size_t>(news)], cfg) +
                         cfg.pop_weight * popularity_at(news, ts);
      probs[c] = std::min(0.95, cfg.click_floor + cfg.click_scale * mix);
      imp.items.emplace_back(out.news[static_cast<std::size_t>(news)].id,
                             rng.bernoulli(probs[c]) ? 1 : 0);
    }
    std::size_t positives = 0;
    for (const auto& [id, clicked] : imp.items) positives += static_cast<std::size_t>(clicked);
    if (positives == 0) {
      const std::size_t best = static_cast<std::size_t>(
          std::max_element(probs.begin(), probs.end()) - probs.begin());
      imp.items[best].second = 1;
    } else if (positives == imp.items.size()) {
      const std::size_t worst = static_cast<std::size_t>(
          std::min_element(probs.begin(), probs.end()) - probs.begin());
      imp.items[worst].second = 0;
    }
    imps.push_back(std::move(imp));
  }

  std::stable_sort(imps.begin(), imps.end(),
                   [](const RawImpression& a, const RawImpression& b) { return a.ts < b.ts; });
  const std::size_t n = imps.size();
  const std::size_t train_end = strict_boundary(
      imps, static_cast<std::size_t>(static_cast<double>(n) * cfg.train_frac));
  const std::size_t valid_end = strict_boundary(
      imps, std::max(train_end + 1, static_cast<std::size_t>(static_cast<double>(n) *
                                                             (cfg.train_frac + cfg.valid_frac))));
  if (train_end == 0 || valid_end <= train_end || valid_end >= n) {
    throw ConfigError("generator config: splits collapsed; increase impressions");
  }
  out.train.assign(imps.begin(), imps.begin() + static_cast<std::ptrdiff_t>(train_end));
  out.valid.assign(imps.begin() + static_cast<std::ptrdiff_t>(train_end),
                   imps.begin() + static_cast<std::ptrdiff_t>(valid_end));
  out.test.assign(imps.begin() + static_cast<std::ptrdiff_t>(valid_end), imps.end());

  // Cold-bucket users keep their capped bootstrap histories: their impression
  // clicks stay labels on the impressions but are kept out of the click log,
  // so their history length is pinned at 0/1/3/5 in every split.
  std::unordered_set<std::string> cold_ids;
  for (int u = 0; u < cold_users; ++u) {
    cold_ids.insert(user_ids[static_cast<std::size_t>(u)]);
  }
  for (const RawImpression& imp : imps) {
    if (cold_ids.count(imp.user) > 0) {
      continue;
    }
    for (const auto& [news_id, clicked] : imp.items) {
      if (clicked) {
        out.clicks.push_back({imp.user, news_id, imp.ts});
      }
    }
  }
  std::stable_sort(out.clicks.begin(), out.clicks.end(),
                   [](const ClickEvent& a, const ClickEvent& b) { return a.ts < b.ts; });
  return out;
}

}  // namespace pprec::data
