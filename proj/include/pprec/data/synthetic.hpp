#pragma once

#include <cstdint>
#include <vector>

#include "pprec/data/types.hpp"

namespace pprec::data {

// Synthetic corpus with controllable popularity and interest effects. Each
// user draws latent topic preferences, each news a topic, template title,
// entities, and a latent popularity in [0,1]; click probability mixes topic
// affinity and popularity by pop_weight. Everything is a pure function of
// (config, seed).
struct GeneratorConfig {
  int users = 800;
  int news = 600;
  int topics = 12;
  int vocab_words = 800;
  int impressions = 10000;
  int candidates_per_impression = 12;
  double pop_weight = 0.5;  // 0 = interest only, 1 = popularity only
  // Popularity decays with news age when > 0; 0 keeps it static.
  double pop_half_life_hours = 0.0;
  // Spread of latent log-popularity before the logistic squash: higher values
  // polarize news into clearly hot and cold (>= 0; 0 makes popularity
  // uniform at 0.5).
  double pop_contrast = 1.0;

  int title_words_min = 8;
  int title_words_max = 14;
  int max_entities = 4;

  std::int64_t base_time = 1600000000;
  double publish_span_hours = 24.0;
  double bootstrap_hours = 12.0;  // click-history window before impressions start
  double horizon_hours = 12.0;    // impression window length

  double train_frac = 0.7;
  double valid_frac = 0.1;

  // Fraction of users capped to tiny histories, split evenly over 0/1/3/5
  // bootstrap clicks (cold-start buckets). Their impression clicks stay
  // labels but never extend their click log, so the buckets persist into the
  // later splits.
  double cold_user_fraction = 0.24;
  int bootstrap_clicks_min = 6;
  int bootstrap_clicks_max = 30;

  double click_floor = 0.05;
  double click_scale = 0.75;

  // Interest strength by topic relation: primary topics pull 1.0, secondary
  // topics this much, everything else the floor. Lowering the floor towards 0
  // makes clicks nearly deterministic in topic match (useful for
  // trainability fixtures).
  double affinity_secondary = 0.6;
  double affinity_floor = 0.15;
};

struct SyntheticCorpus {
  std::vector<RawNews> news;
  std::vector<RawImpression> train;
  std::vector<RawImpression> valid;
  std::vector<RawImpression> test;
  std::vector<ClickEvent> clicks;        // bootstrap + warm-user impression clicks, time-sorted
  std::vector<double> latent_popularity; // aligned with news; for diagnostics
  // Latent user interests (aligned with user index), for diagnostics and
  // oracle scorers in experiments.
  std::vector<int> user_primary_topic;
  std::vector<int> user_secondary_topic;
};

SyntheticCorpus generate_synthetic_corpus(const GeneratorConfig& cfg, std::uint64_t seed);

}  // namespace pprec::data
