#include "pprec/data/ctr.hpp"

#include <algorithm>
#include <cmath>

#include "pprec/common/error.hpp"

namespace pprec::data {

double smoothed_ctr(std::int64_t clicks, std::int64_t impressions, const CtrConfig& cfg) {
  return (static_cast<double>(clicks) + cfg.prior_clicks) /
         (static_cast<double>(impressions) + cfg.prior_impressions);
}

int quantize_recency(std::int64_t publish_time, std::int64_t reference_time, int clamp_hours) {
  if (reference_time <= publish_time) {
    return 0;
  }
  const std::int64_t hours = (reference_time - publish_time) / 3600;
  return static_cast<int>(std::min<std::int64_t>(hours, clamp_hours));
}

int quantize_popularity(double value, int bins) {
  const double clamped = std::min(1.0, std::max(0.0, value));
  const int bin = static_cast<int>(clamped * bins);
  return std::min(bin, bins - 1);
}

CtrIndex::CtrIndex(std::size_t news_count, const std::vector<ShownEvent>& events, CtrConfig cfg)
    : cfg_(cfg),
      window_seconds_(static_cast<std::int64_t>(cfg.window_hours * 3600.0)),
      per_news_(news_count) {
  std::vector<ShownEvent> sorted = events;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ShownEvent& a, const ShownEvent& b) { return a.ts < b.ts; });
  for (const ShownEvent& ev : sorted) {
    if (ev.news < 0 || static_cast<std::size_t>(ev.news) >= news_count) {
      throw DataError("shown event references news index " + std::to_string(ev.news) +
                      " outside table of " + std::to_string(news_count));
    }
    PerNews& pn = per_news_[static_cast<std::size_t>(ev.news)];
    pn.times.push_back(ev.ts);
    const std::int64_t prev = pn.click_cum.empty() ? 0 : pn.click_cum.back();
    pn.click_cum.push_back(prev + ev.clicked);
  }
}

std::int64_t CtrIndex::count_before(const PerNews& pn, std::int64_t t) const {
  return std::lower_bound(pn.times.begin(), pn.times.end(), t) - pn.times.begin();
}

CtrStats CtrIndex::stats_before(int news, std::int64_t reference_time) const {
  if (news < 0 || static_cast<std::size_t>(news) >= per_news_.size()) {
    throw DataError("news index " + std::to_string(news) + " outside CTR index");
  }
  const PerNews& pn = per_news_[static_cast<std::size_t>(news)];
  const std::int64_t upto = count_before(pn, reference_time);
  const std::int64_t from = count_before(pn, reference_time - window_seconds_);
  CtrStats stats;
  stats.window_impressions = upto - from;
  stats.window_clicks = (upto ? pn.click_cum[upto - 1] : 0) - (from ? pn.click_cum[from - 1] : 0);
  const std::int64_t lifetime_clicks = upto ? pn.click_cum[upto - 1] : 0;
  stats.lifetime_views = cfg_.views_are_impressions ? upto : lifetime_clicks;
  stats.window_views = cfg_.views_are_impressions ? stats.window_impressions : stats.window_clicks;
  return stats;
}

double CtrIndex::ctr(int news, std::int64_t reference_time) const {
  const CtrStats stats = stats_before(news, reference_time);
  return smoothed_ctr(stats.window_clicks, stats.window_impressions, cfg_);
}

CtrSnapshot snapshot_at(const CtrIndex& index, std::size_t news_count,
                        std::int64_t reference_time) {
  CtrSnapshot snap;
  snap.reference_time = reference_time;
  snap.window_hours = index.config().window_hours;
  snap.per_news.reserve(news_count);
  for (std::size_t i = 0; i < news_count; ++i) {
    snap.per_news.push_back(index.stats_before(static_cast<int>(i), reference_time));
  }
  return snap;
}

}  // namespace pprec::data
