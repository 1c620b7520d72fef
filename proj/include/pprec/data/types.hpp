#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace pprec::data {

/// News article as it appears on disk, before tokenization.
struct RawNews {
  std::string id;
  std::string title;
  std::vector<std::string> entities;
  std::int64_t publish_ts = 0;
  std::string topic;
};

/// One display event: a user shown a list of candidates with click labels.
struct RawImpression {
  std::string user;
  std::int64_t ts = 0;
  std::vector<std::pair<std::string, int>> items;  // (newsId, clicked)
};

struct ClickEvent {
  std::string user;
  std::string news;
  std::int64_t ts = 0;
};

/// Preprocessed article: ids instead of strings, truncated per the corpus
/// rules (30 title tokens, 5 entities).
struct NewsArticle {
  std::string news_id;
  std::vector<int> title_tokens;  // word ids; 0 = unknown
  std::vector<int> entity_ids;    // entity ids; 0 = unknown
  std::int64_t publish_time = 0;
  std::string topic;
};

struct UserHistory {
  std::string user_id;
  std::vector<std::string> clicked_news;  // most recent last
  std::vector<std::int64_t> click_times;  // aligned with clicked_news
};

// Dense id table. Id 0 is reserved for padding/unknown tokens; retained
// entries get ids 1..n ordered by (frequency desc, token asc) so the mapping
// is a pure function of the corpus.
class Vocabulary {
public:
  Vocabulary() : tokens_{"<unk>"}, freqs_{0} {}

  int add(const std::string& token, std::int64_t freq) {
    const int id = static_cast<int>(tokens_.size());
    ids_.emplace(token, id);
    tokens_.push_back(token);
    freqs_.push_back(freq);
    return id;
  }

  /// 0 when the token is unknown.
  int id_of(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? 0 : it->second;
  }
  bool contains(const std::string& token) const { return ids_.count(token) != 0; }
  const std::string& token_of(int id) const { return tokens_[static_cast<std::size_t>(id)]; }
  std::int64_t freq_of(int id) const { return freqs_[static_cast<std::size_t>(id)]; }

  /// Table size including the reserved slot 0.
  std::size_t size() const { return tokens_.size(); }

private:
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> tokens_;
  std::vector<std::int64_t> freqs_;
};

struct EmbeddingFile {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;
};

}  // namespace pprec::data
