#include "pprec/data/dataset.hpp"

#include <algorithm>

#include "pprec/common/error.hpp"
#include "pprec/data/io.hpp"
#include "pprec/data/pipeline.hpp"

namespace pprec::data {

CorpusPaths CorpusPaths::in_dir(const std::string& dir) {
  CorpusPaths p;
  p.news = dir + "/news.jsonl";
  p.train = dir + "/impressions_train.jsonl";
  p.valid = dir + "/impressions_valid.jsonl";
  p.test = dir + "/impressions_test.jsonl";
  p.clicks = dir + "/clicks.tsv";
  return p;
}

namespace {

// All of a user's clicks in time order; histories are suffix slices found by
// binary search rather than rescanning the log per impression.
struct UserClicks {
  std::vector<std::int64_t> times;
  std::vector<int> news;
};

std::vector<PreparedImpression> prepare_split(
    const std::vector<RawImpression>& raw, const Dataset& ds,
    const std::unordered_map<std::string, UserClicks>& by_user, const CtrConfig& ctr_cfg,
    std::size_t* dropped_items, std::size_t* dropped_impressions) {
  std::vector<PreparedImpression> out;
  out.reserve(raw.size());
  for (const RawImpression& imp : raw) {
    PreparedImpression p;
    p.user = imp.user;
    p.ts = imp.ts;
    for (const auto& [news_id, clicked] : imp.items) {
      auto it = ds.news_index.find(news_id);
      if (it == ds.news_index.end()) {
        ++*dropped_items;
        continue;
      }
      PreparedCandidate cand;
      cand.news = it->second;
      cand.label = clicked;
      cand.ctr = ds.ctr->ctr(cand.news, imp.ts);
      cand.recency_bin = quantize_recency(ds.news[static_cast<std::size_t>(cand.news)].publish_time,
                                          imp.ts, ctr_cfg.recency_clamp_hours);
      p.candidates.push_back(cand);
    }
    if (p.candidates.empty()) {
      ++*dropped_impressions;
      continue;
    }

    if (auto uit = by_user.find(imp.user); uit != by_user.end()) {
      const UserClicks& uc = uit->second;
      const std::size_t upto = static_cast<std::size_t>(
          std::lower_bound(uc.times.begin(), uc.times.end(), imp.ts) - uc.times.begin());
      const std::size_t from = upto > ds.limits.max_history ? upto - ds.limits.max_history : 0;
      for (std::size_t i = from; i < upto; ++i) {
        const int news = uc.news[i];
        p.history_news.push_back(news);
        const std::int64_t bin_time = ctr_cfg.history_bins_at_click_time ? uc.times[i] : imp.ts;
        p.history_pop_bins.push_back(
            quantize_popularity(ds.ctr->ctr(news, bin_time), ctr_cfg.popularity_bins));
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

Dataset prepare_dataset(const CorpusPaths& paths, const CtrConfig& ctr_cfg,
                        const DatasetLimits& limits, std::uint64_t seed) {
  Dataset ds;
  ds.limits = limits;

  const std::vector<RawNews> raw_news = read_news_jsonl(paths.news);
  if (raw_news.empty()) {
    throw DataError("news corpus is empty: " + paths.news);
  }
  std::vector<std::string> titles;
  titles.reserve(raw_news.size());
  for (const RawNews& n : raw_news) {
    titles.push_back(n.title);
  }
  ds.word_vocab = build_vocabulary(titles);
  ds.entity_vocab = build_entity_vocabulary(raw_news);

  ds.news.reserve(raw_news.size());
  for (const RawNews& n : raw_news) {
    if (ds.news_index.count(n.id)) {
      throw DataError("duplicate news id: " + n.id);
    }
    ds.news_index.emplace(n.id, static_cast<int>(ds.news.size()));
    ds.news.push_back(preprocess_news(n, ds.word_vocab, ds.entity_vocab, seed,
                                      limits.max_title_words, limits.max_entities));
  }

  const std::vector<RawImpression> raw_train = read_impressions_jsonl(paths.train);
  const std::vector<RawImpression> raw_valid = read_impressions_jsonl(paths.valid);
  const std::vector<RawImpression> raw_test = read_impressions_jsonl(paths.test);

  std::vector<ShownEvent> events;
  for (const auto* split : {&raw_train, &raw_valid, &raw_test}) {
    for (const RawImpression& imp : *split) {
      for (const auto& [news_id, clicked] : imp.items) {
        auto it = ds.news_index.find(news_id);
        if (it == ds.news_index.end()) continue;  // counted during split prep
        events.push_back({it->second, imp.ts, clicked});
      }
    }
  }
  ds.ctr = std::make_unique<CtrIndex>(ds.news.size(), events, ctr_cfg);

  std::unordered_map<std::string, UserClicks> by_user;
  {
    std::vector<ClickEvent> clicks = read_clicks_tsv(paths.clicks);
    std::stable_sort(clicks.begin(), clicks.end(),
                     [](const ClickEvent& a, const ClickEvent& b) { return a.ts < b.ts; });
    for (const ClickEvent& ev : clicks) {
      auto it = ds.news_index.find(ev.news);
      if (it == ds.news_index.end()) {
        ++ds.dropped_unknown_items;
        continue;
      }
      UserClicks& uc = by_user[ev.user];
      uc.times.push_back(ev.ts);
      uc.news.push_back(it->second);
    }
  }

  ds.train = prepare_split(raw_train, ds, by_user, ctr_cfg, &ds.dropped_unknown_items,
                           &ds.dropped_empty_impressions);
  ds.valid = prepare_split(raw_valid, ds, by_user, ctr_cfg, &ds.dropped_unknown_items,
                           &ds.dropped_empty_impressions);
  ds.test = prepare_split(raw_test, ds, by_user, ctr_cfg, &ds.dropped_unknown_items,
                          &ds.dropped_empty_impressions);
  return ds;
}

}  // namespace pprec::data
