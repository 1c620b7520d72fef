#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace pprec::data {

struct CtrConfig {
  double window_hours = 1.0;
  // Additive smoothing (clicks + prior_clicks) / (impressions + prior_impressions);
  // prior mean 0.05 keeps CTR defined for news unseen in the window.
  double prior_clicks = 1.0;
  double prior_impressions = 20.0;
  int recency_clamp_hours = 720;
  int popularity_bins = 200;
  // Popularity bins for clicked-history news: CTR at the click time (default)
  // or at the impression being scored.
  bool history_bins_at_click_time = true;
  // "Views" for the ViewNum/RecentPop baselines count shown events; set to
  // false to count clicks instead.
  bool views_are_impressions = true;
};

double smoothed_ctr(std::int64_t clicks, std::int64_t impressions, const CtrConfig& cfg);

/// Hours since publish, floored, clamped to [0, clamp_hours].
int quantize_recency(std::int64_t publish_time, std::int64_t reference_time,
                     int clamp_hours = 720);

/// floor(clamp(x,0,1) * bins), with x = 1 landing in the top bin.
int quantize_popularity(double value, int bins = 200);

/// One shown event: news index, timestamp, whether it was clicked.
struct ShownEvent {
  int news = 0;
  std::int64_t ts = 0;
  int clicked = 0;
};

struct CtrStats {
  std::int64_t window_clicks = 0;
  std::int64_t window_impressions = 0;
  std::int64_t lifetime_views = 0;
  std::int64_t window_views = 0;
};

// Per-news sorted event times with prefix click counts; answers windowed and
// lifetime counts at arbitrary reference times via binary search. Events at
// or after the reference time never count (no leakage); the window is
// [T - window, T).
class CtrIndex {
public:
  CtrIndex(std::size_t news_count, const std::vector<ShownEvent>& events, CtrConfig cfg);

  CtrStats stats_before(int news, std::int64_t reference_time) const;
  double ctr(int news, std::int64_t reference_time) const;
  const CtrConfig& config() const { return cfg_; }

private:
  struct PerNews {
    std::vector<std::int64_t> times;       // ascending
    std::vector<std::int64_t> click_cum;   // click_cum[i] = clicks among first i events
  };

  std::int64_t count_before(const PerNews& pn, std::int64_t t) const;

  CtrConfig cfg_;
  std::int64_t window_seconds_;
  std::vector<PerNews> per_news_;
};

/// Materialized per-news counts at one reference time (CLI reporting).
struct CtrSnapshot {
  std::int64_t reference_time = 0;
  double window_hours = 1.0;
  std::vector<CtrStats> per_news;  // indexed like the news table
};

CtrSnapshot snapshot_at(const CtrIndex& index, std::size_t news_count,
                        std::int64_t reference_time);

}  // namespace pprec::data
