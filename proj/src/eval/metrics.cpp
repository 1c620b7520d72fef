#include "pprec/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pprec/common/error.hpp"

namespace pprec::eval {

std::vector<std::size_t> rank_descending(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

double auc(const std::vector<ScoredItem>& items) {
  std::size_t positives = 0;
  for (const ScoredItem& it : items) {
    positives += static_cast<std::size_t>(it.label != 0);
  }
  const std::size_t negatives = items.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw NumericError("auc needs at least one positive and one negative item");
  }

  // Rank-sum form of the pair count: sort ascending, give tied scores their
  // average rank, then U = R_pos - P(P+1)/2 counts correct pairs with ties
  // worth 0.5 each.
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return items[a].score < items[b].score;
  });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && items[order[j]].score == items[order[i]].score) {
      ++j;
    }
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (items[order[t]].label != 0) {
        rank_sum_pos += avg_rank;
      }
    }
    i = j;
  }
  const double p = static_cast<double>(positives);
  const double u = rank_sum_pos - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

double mrr(const std::vector<ScoredItem>& items) {
  std::vector<double> scores(items.size());
  for (std::size_t k = 0; k < items.size(); ++k) {
    scores[k] = items[k].score;
  }
  const std::vector<std::size_t> order = rank_descending(scores);
  double sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t rank = 1; rank <= order.size(); ++rank) {
    if (items[order[rank - 1]].label != 0) {
      sum += 1.0 / static_cast<double>(rank);
      ++positives;
    }
  }
  if (positives == 0) {
    throw NumericError("mrr needs at least one positive item");
  }
  return sum / static_cast<double>(positives);
}

double ndcg_at_k(const std::vector<ScoredItem>& items, int k) {
  if (k <= 0) {
    throw NumericError("ndcg k must be positive");
  }
  std::vector<double> scores(items.size());
  std::size_t positives = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    scores[i] = items[i].score;
    positives += static_cast<std::size_t>(items[i].label != 0);
  }
  if (positives == 0) {
    throw NumericError("ndcg needs at least one positive item");
  }
  const std::vector<std::size_t> order = rank_descending(scores);
  const std::size_t depth = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
  double dcg = 0.0;
  for (std::size_t pos = 1; pos <= depth; ++pos) {
    if (items[order[pos - 1]].label != 0) {
      dcg += 1.0 / std::log2(static_cast<double>(pos) + 1.0);
    }
  }
  const std::size_t ideal = std::min<std::size_t>(positives, static_cast<std::size_t>(k));
  double idcg = 0.0;
  for (std::size_t pos = 1; pos <= ideal; ++pos) {
    idcg += 1.0 / std::log2(static_cast<double>(pos) + 1.0);
  }
  return dcg / idcg;
}

IladResult ilad(const std::vector<std::vector<double>>& embeddings) {
  IladResult result;
  if (embeddings.size() < 2) {
    return result;
  }
  std::vector<double> norms(embeddings.size());
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    double s = 0.0;
    for (double v : embeddings[i]) {
      s += v * v;
    }
    norms[i] = std::sqrt(s);
  }
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    for (std::size_t j = i + 1; j < embeddings.size(); ++j) {
      if (norms[i] == 0.0 || norms[j] == 0.0) {
        ++result.excluded_pairs;
        continue;
      }
      if (embeddings[i].size() != embeddings[j].size()) {
        throw NumericError("ilad embeddings must share one dimension");
      }
      double dot = 0.0;
      for (std::size_t d = 0; d < embeddings[i].size(); ++d) {
        dot += embeddings[i][d] * embeddings[j][d];
      }
      total += 1.0 - dot / (norms[i] * norms[j]);
      ++pairs;
    }
  }
  result.value = pairs > 0 ? total / static_cast<double>(pairs) : 0.0;
  return result;
}

double new_topic_ratio(const std::vector<std::string>& topics, const std::vector<int>& clicked,
                       const std::unordered_set<std::string>& history_topics, int k) {
  if (k <= 0) {
    throw NumericError("new_topic_ratio k must be positive");
  }
  if (topics.size() != clicked.size()) {
    throw NumericError("new_topic_ratio needs one clicked flag per topic");
  }
  std::unordered_set<std::string> novel;
  for (std::size_t i = 0; i < topics.size(); ++i) {
    if (clicked[i] != 0 && history_topics.count(topics[i]) == 0) {
      novel.insert(topics[i]);
    }
  }
  return static_cast<double>(novel.size()) / static_cast<double>(k);
}

}  // namespace pprec::eval
