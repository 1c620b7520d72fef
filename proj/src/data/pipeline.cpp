#include "pprec/data/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <unordered_map>

#include "pprec/common/error.hpp"
#include "pprec/common/rng.hpp"

namespace pprec::data {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) {
    out.push_back(std::move(cur));
  }
  return out;
}

namespace {

// (frequency desc, token asc) gives a deterministic id order regardless of
// hash-map iteration.
Vocabulary rank_tokens(const std::unordered_map<std::string, std::int64_t>& counts,
                       std::int64_t min_freq) {
  std::vector<std::pair<std::string, std::int64_t>> kept;
  for (const auto& [token, freq] : counts) {
    if (freq >= min_freq) {
      kept.emplace_back(token, freq);
    }
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary vocab;
  for (const auto& [token, freq] : kept) {
    vocab.add(token, freq);
  }
  return vocab;
}

}  // namespace

Vocabulary build_vocabulary(const std::vector<std::string>& titles, std::int64_t min_freq) {
  if (titles.empty()) {
    throw DataError("cannot build a vocabulary from an empty corpus");
  }
  std::unordered_map<std::string, std::int64_t> counts;
  for (const std::string& title : titles) {
    for (std::string& token : tokenize(title)) {
      ++counts[token];
    }
  }
  return rank_tokens(counts, min_freq);
}

Vocabulary build_entity_vocabulary(const std::vector<RawNews>& news) {
  if (news.empty()) {
    throw DataError("cannot build an entity vocabulary from an empty corpus");
  }
  std::unordered_map<std::string, std::int64_t> counts;
  for (const RawNews& n : news) {
    for (const std::string& e : n.entities) {
      ++counts[e];
    }
  }
  return rank_tokens(counts, 1);
}

NewsArticle preprocess_news(const RawNews& raw, const Vocabulary& vocab,
                            const Vocabulary& entity_vocab, std::uint64_t seed,
                            std::size_t max_title_words, std::size_t max_entities) {
  NewsArticle article;
  article.news_id = raw.id;
  article.publish_time = raw.publish_ts;
  article.topic = raw.topic;

  const std::vector<std::string> words = tokenize(raw.title);
  const std::size_t n_words = std::min(words.size(), max_title_words);
  article.title_tokens.reserve(n_words);
  for (std::size_t i = 0; i < n_words; ++i) {
    article.title_tokens.push_back(vocab.id_of(words[i]));
  }

  std::vector<std::string> entities = raw.entities;
  if (entities.size() > max_entities) {
    Rng rng(derive_seed(seed, raw.id));
    std::vector<std::string> sampled;
    std::sample(entities.begin(), entities.end(), std::back_inserter(sampled), max_entities,
                rng.engine());
    entities = std::move(sampled);
  }
  article.entity_ids.reserve(entities.size());
  for (const std::string& e : entities) {
    article.entity_ids.push_back(entity_vocab.id_of(e));
  }
  return article;
}

UserHistory build_user_history(const std::vector<ClickEvent>& clicks, const std::string& user_id,
                               std::int64_t impression_time, std::size_t max_len) {
  UserHistory history;
  history.user_id = user_id;
  for (const ClickEvent& ev : clicks) {
    if (ev.ts >= impression_time) break;  // time-sorted input; strictly before
    if (ev.user != user_id) continue;
    history.clicked_news.push_back(ev.news);
    history.click_times.push_back(ev.ts);
  }
  if (history.clicked_news.size() > max_len) {
    const std::size_t drop = history.clicked_news.size() - max_len;
    history.clicked_news.erase(history.clicked_news.begin(),
                               history.clicked_news.begin() + static_cast<std::ptrdiff_t>(drop));
    history.click_times.erase(history.click_times.begin(),
                              history.click_times.begin() + static_cast<std::ptrdiff_t>(drop));
  }
  return history;
}

}  // namespace pprec::data
