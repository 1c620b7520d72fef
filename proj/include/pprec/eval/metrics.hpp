#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

namespace pprec::eval {

struct ScoredItem {
  double score = 0.0;
  int label = 0;  // 1 = clicked
};

/// Indices of `scores` in descending score order; ties keep input order.
std::vector<std::size_t> rank_descending(const std::vector<double>& scores);

/// Fraction of (positive, negative) pairs ranked correctly; ties count 0.5.
/// Computed by rank statistics; requires at least one item of each class.
double auc(const std::vector<ScoredItem>& items);

/// Mean reciprocal rank over the positives; 1-based ranks over the whole
/// impression, descending score, stable ties. Requires >= 1 positive.
double mrr(const std::vector<ScoredItem>& items);

/// Binary-relevance nDCG@k; the ideal DCG truncates at min(#positives, k).
double ndcg_at_k(const std::vector<ScoredItem>& items, int k);

struct IladResult {
  double value = 0.0;          // mean pairwise cosine distance, in [0, 2]
  std::size_t excluded_pairs = 0;  // pairs touching a zero-norm embedding
};

/// Intra-list average distance over the given top-K embedding list.
/// A single-element (or empty) list is defined as 0.
IladResult ilad(const std::vector<std::vector<double>>& embeddings);

/// |{topics of top-K recommended news that were clicked} \ history topics| / K.
/// `topics` and `clicked` describe the top-K list in rank order.
double new_topic_ratio(const std::vector<std::string>& topics, const std::vector<int>& clicked,
                       const std::unordered_set<std::string>& history_topics, int k);

}  // namespace pprec::eval
