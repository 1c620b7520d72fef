#pragma once

#include <string>
#include <vector>

#include "pprec/data/types.hpp"

namespace pprec::data {

// Line-oriented corpus formats. Readers raise DataError with the offending
// line number; writers emit LF endings and stable key order so identical
// inputs produce identical bytes.

std::vector<RawNews> read_news_jsonl(const std::string& path);
void write_news_jsonl(const std::string& path, const std::vector<RawNews>& news);

std::vector<RawImpression> read_impressions_jsonl(const std::string& path);
void write_impressions_jsonl(const std::string& path, const std::vector<RawImpression>& imps);

std::vector<ClickEvent> read_clicks_tsv(const std::string& path);
void write_clicks_tsv(const std::string& path, const std::vector<ClickEvent>& clicks);

EmbeddingFile read_embeddings(const std::string& path, std::size_t expected_dim);

}  // namespace pprec::data
