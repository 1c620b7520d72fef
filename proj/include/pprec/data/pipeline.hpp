#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pprec/data/types.hpp"

namespace pprec::data {

/// Lowercase, split on anything that is not a letter or digit.
std::vector<std::string> tokenize(const std::string& text);

// Retains tokens with corpus frequency >= min_freq, assigning ids 1..n by
// (frequency desc, token asc). Throws DataError on an empty corpus.
Vocabulary build_vocabulary(const std::vector<std::string>& titles, std::int64_t min_freq = 3);

/// Same ordering rule over entity labels; entities are not frequency-filtered.
Vocabulary build_entity_vocabulary(const std::vector<RawNews>& news);

// Token ids (unknown -> 0), first 30 title words, at most 5 entities; when
// more than 5 exist a uniform sample seeded per news id keeps the choice
// reproducible and order-preserving.
NewsArticle preprocess_news(const RawNews& raw, const Vocabulary& vocab,
                            const Vocabulary& entity_vocab, std::uint64_t seed,
                            std::size_t max_title_words = 30, std::size_t max_entities = 5);

// The <= max_len most recent clicks strictly before impression_time.
// `clicks` must be sorted by time; unknown users yield an empty history.
UserHistory build_user_history(const std::vector<ClickEvent>& clicks, const std::string& user_id,
                               std::int64_t impression_time, std::size_t max_len = 50);

}  // namespace pprec::data
