#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "pprec/data/ctr.hpp"
#include "pprec/data/types.hpp"

namespace pprec::data {

struct PreparedCandidate {
  int news = 0;        // index into Dataset::news
  int label = 0;       // clicked
  double ctr = 0.0;    // smoothed near-real-time CTR at the impression time
  int recency_bin = 0;
};

struct PreparedImpression {
  std::string user;
  std::int64_t ts = 0;
  std::vector<int> history_news;      // indices, most recent last, <= max_history
  std::vector<int> history_pop_bins;  // aligned popularity bins
  std::vector<PreparedCandidate> candidates;
};

struct CorpusPaths {
  std::string news;
  std::string train;
  std::string valid;
  std::string test;
  std::string clicks;

  static CorpusPaths in_dir(const std::string& dir);
};

struct DatasetLimits {
  std::size_t max_history = 50;
  std::size_t max_title_words = 30;
  std::size_t max_entities = 5;
};

// Fully prepared corpus: preprocessed news, vocabularies, CTR index over all
// shown events, and per-split impressions with histories and candidate
// features resolved at each impression's timestamp.
struct Dataset {
  std::vector<NewsArticle> news;
  std::unordered_map<std::string, int> news_index;
  Vocabulary word_vocab;
  Vocabulary entity_vocab;
  std::unique_ptr<CtrIndex> ctr;
  DatasetLimits limits;
  std::vector<PreparedImpression> train;
  std::vector<PreparedImpression> valid;
  std::vector<PreparedImpression> test;
  std::size_t dropped_unknown_items = 0;  // impression items naming unknown news
  std::size_t dropped_empty_impressions = 0;
};

Dataset prepare_dataset(const CorpusPaths& paths, const CtrConfig& ctr_cfg,
                        const DatasetLimits& limits, std::uint64_t seed);

}  // namespace pprec::data
