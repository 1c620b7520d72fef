#include "pprec/eval/evaluate.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <mutex>
#include <thread>
#include <unordered_set>

#include "pprec/common/error.hpp"

namespace pprec::eval {

namespace {

using data::Dataset;
using data::PreparedImpression;

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body) {
  if (threads <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) {
      body(i);
    }
    return;
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr error;
  std::mutex error_mutex;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += workers) {
          body(i);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) {
          error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& th : pool) {
    th.join();
  }
  if (error) {
    std::rethrow_exception(error);
  }
}

std::vector<double> encode_one_news(const model::PPRecModel& m, const data::NewsArticle& article) {
  // Forward-only tape over frozen parameters; safe per-thread.
  core::Tape tape(false);
  auto& mutable_model = const_cast<model::PPRecModel&>(m);
  core::Var n = mutable_model.encode_news(tape, article);
  return n.value().values();
}

}  // namespace

void ModelScorer::prepare(const Dataset& data, int threads) {
  cache_.assign(data.news.size(), {});
  parallel_for(data.news.size(), threads,
               [&](std::size_t i) { cache_[i] = encode_one_news(model_, data.news[i]); });
}

const std::vector<double>* ModelScorer::embedding(int news) const {
  if (news < 0 || static_cast<std::size_t>(news) >= cache_.size()) {
    return nullptr;
  }
  return &cache_[static_cast<std::size_t>(news)];
}

std::vector<double> ModelScorer::score(const Dataset& data, const PreparedImpression& imp) const {
  core::Tape tape(false);
  auto embedding_var = [&](int news) -> core::Var {
    const std::size_t idx = static_cast<std::size_t>(news);
    if (idx < cache_.size() && !cache_[idx].empty()) {
      return tape.constant(core::Tensor::row(cache_[idx]));
    }
    return tape.constant(core::Tensor::row(encode_one_news(model_, data.news.at(idx))));
  };

  std::vector<core::Var> history;
  history.reserve(imp.history_news.size());
  for (int news : imp.history_news) {
    history.push_back(embedding_var(news));
  }
  core::Var u = model_.encode_user(tape, history, imp.history_pop_bins);

  std::vector<double> scores;
  scores.reserve(imp.candidates.size());
  for (const data::PreparedCandidate& cand : imp.candidates) {
    model::ScoreNodes nodes =
        model_.score_candidate(tape, u, embedding_var(cand.news), cand.recency_bin, cand.ctr);
    scores.push_back(nodes.score.item());
  }
  return scores;
}

std::optional<PopularityBaselineScorer::Kind> PopularityBaselineScorer::parse(
    const std::string& name) {
  std::string lowered;
  for (char c : name) {
    lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (lowered == "viewnum") {
    return Kind::kViewNum;
  }
  if (lowered == "recentpop") {
    return Kind::kRecentPop;
  }
  if (lowered == "ctr") {
    return Kind::kCtr;
  }
  return std::nullopt;
}

std::string PopularityBaselineScorer::name() const {
  switch (kind_) {
    case Kind::kViewNum:
      return "viewnum";
    case Kind::kRecentPop:
      return "recentpop";
    case Kind::kCtr:
      return "ctr";
  }
  return "baseline";
}

std::vector<double> PopularityBaselineScorer::score(const Dataset& data,
                                                    const PreparedImpression& imp) const {
  std::vector<double> out;
  out.reserve(imp.candidates.size());
  for (const data::PreparedCandidate& cand : imp.candidates) {
    switch (kind_) {
      case Kind::kViewNum:
        out.push_back(
            static_cast<double>(data.ctr->stats_before(cand.news, imp.ts).lifetime_views));
        break;
      case Kind::kRecentPop:
        out.push_back(static_cast<double>(data.ctr->stats_before(cand.news, imp.ts).window_views));
        break;
      case Kind::kCtr:
        out.push_back(cand.ctr);
        break;
    }
  }
  return out;
}

namespace {

struct PerImpression {
  bool scored = false;  // has both classes; ranking metrics valid
  bool no_positive = false;
  bool no_negative = false;
  double auc = 0.0;
  double mrr = 0.0;
  double ndcg5 = 0.0;
  double ndcg10 = 0.0;
  int bucket = -1;  // exact history length when in {0,1,3,5}
  std::vector<double> ilad_at_k;
  std::vector<double> ntr_at_k;
  std::size_t excluded_pairs = 0;
  bool has_diversity = false;
};

void accumulate(SplitMetrics& agg, const PerImpression& pi) {
  if (pi.no_positive) {
    ++agg.excluded_no_positive;
  }
  if (pi.no_negative) {
    ++agg.excluded_no_negative;
  }
  if (!pi.scored) {
    return;
  }
  agg.auc += pi.auc;
  agg.mrr += pi.mrr;
  agg.ndcg5 += pi.ndcg5;
  agg.ndcg10 += pi.ndcg10;
  ++agg.impressions_scored;
}

void finalize(SplitMetrics& agg) {
  if (agg.impressions_scored == 0) {
    return;
  }
  const double n = static_cast<double>(agg.impressions_scored);
  agg.auc /= n;
  agg.mrr /= n;
  agg.ndcg5 /= n;
  agg.ndcg10 /= n;
}

}  // namespace

EvalReport evaluate_scorer(Scorer& scorer, const Dataset& data,
                           const std::vector<PreparedImpression>& split,
                           const EvalOptions& options) {
  if (split.empty()) {
    throw DataError("evaluation split is empty");
  }
  const int threads = std::max(1, options.threads);
  scorer.prepare(data, threads);

  const bool want_diversity =
      options.diversity && !data.news.empty() && scorer.embedding(0) != nullptr;
  const int max_k = std::max(1, options.diversity_max_k);

  std::vector<PerImpression> per(split.size());
  parallel_for(split.size(), threads, [&](std::size_t i) {
    const PreparedImpression& imp = split[i];
    PerImpression& pi = per[i];
    const std::vector<double> scores = scorer.score(data, imp);
    if (scores.size() != imp.candidates.size()) {
      throw NumericError("scorer returned " + std::to_string(scores.size()) + " scores for " +
                         std::to_string(imp.candidates.size()) + " candidates");
    }

    std::vector<ScoredItem> items(scores.size());
    std::size_t positives = 0;
    for (std::size_t c = 0; c < scores.size(); ++c) {
      items[c] = {scores[c], imp.candidates[c].label};
      positives += static_cast<std::size_t>(imp.candidates[c].label != 0);
    }
    pi.no_positive = positives == 0;
    pi.no_negative = positives == scores.size();
    if (!pi.no_positive && !pi.no_negative) {
      pi.scored = true;
      pi.auc = auc(items);
      pi.mrr = mrr(items);
      pi.ndcg5 = ndcg_at_k(items, 5);
      pi.ndcg10 = ndcg_at_k(items, 10);
    }

    const std::size_t h = imp.history_news.size();
    if (h == 0 || h == 1 || h == 3 || h == 5) {
      pi.bucket = static_cast<int>(h);
    }

    if (want_diversity) {
      pi.has_diversity = true;
      pi.ilad_at_k.assign(static_cast<std::size_t>(max_k), 0.0);
      pi.ntr_at_k.assign(static_cast<std::size_t>(max_k), 0.0);
      const std::vector<std::size_t> order = rank_descending(scores);
      std::unordered_set<std::string> history_topics;
      for (int news : imp.history_news) {
        history_topics.insert(data.news[static_cast<std::size_t>(news)].topic);
      }
      // Grow the ranked list one item at a time; each new item contributes
      // its pairwise distances to the running ILAD sums and possibly a novel
      // clicked topic to the ratio.
      std::vector<const std::vector<double>*> embs;
      std::vector<double> norms;
      double dist_sum = 0.0;
      std::size_t included_pairs = 0;
      std::unordered_set<std::string> novel_topics;
      for (int k = 1; k <= max_k; ++k) {
        if (static_cast<std::size_t>(k) <= order.size()) {
          const data::PreparedCandidate& cand = imp.candidates[order[static_cast<std::size_t>(k - 1)]];
          const std::vector<double>* e = scorer.embedding(cand.news);
          if (e == nullptr) {
            throw NumericError("scorer advertises embeddings but lacks one for news " +
                               std::to_string(cand.news));
          }
          double norm = 0.0;
          for (double v : *e) {
            norm += v * v;
          }
          norm = std::sqrt(norm);
          for (std::size_t j = 0; j < embs.size(); ++j) {
            if (norm == 0.0 || norms[j] == 0.0) {
              ++pi.excluded_pairs;
              continue;
            }
            double dot = 0.0;
            for (std::size_t d = 0; d < e->size(); ++d) {
              dot += (*e)[d] * (*embs[j])[d];
            }
            dist_sum += 1.0 - dot / (norm * norms[j]);
            ++included_pairs;
          }
          embs.push_back(e);
          norms.push_back(norm);
          const data::NewsArticle& article = data.news[static_cast<std::size_t>(cand.news)];
          if (cand.label != 0 && history_topics.count(article.topic) == 0) {
            novel_topics.insert(article.topic);
          }
        }
        pi.ilad_at_k[static_cast<std::size_t>(k - 1)] =
            included_pairs > 0 ? dist_sum / static_cast<double>(included_pairs) : 0.0;
        pi.ntr_at_k[static_cast<std::size_t>(k - 1)] =
            static_cast<double>(novel_topics.size()) / static_cast<double>(k);
      }
    }
  });

  EvalReport report;
  report.scorer = scorer.name();
  for (const PerImpression& pi : per) {
    accumulate(report.overall, pi);
  }
  finalize(report.overall);

  if (options.cold_start) {
    for (int k : {0, 1, 3, 5}) {
      BucketMetrics bucket;
      bucket.history_length = k;
      for (const PerImpression& pi : per) {
        if (pi.bucket == k) {
          accumulate(bucket.metrics, pi);
        }
      }
      if (bucket.metrics.impressions_scored > 0) {
        finalize(bucket.metrics);
        report.cold_start.push_back(bucket);
      }
    }
  }

  if (want_diversity) {
    DiversityMetrics div;
    div.max_k = max_k;
    div.ilad_at_k.assign(static_cast<std::size_t>(max_k), 0.0);
    div.new_topic_ratio_at_k.assign(static_cast<std::size_t>(max_k), 0.0);
    std::size_t counted = 0;
    for (const PerImpression& pi : per) {
      if (!pi.has_diversity) {
        continue;
      }
      for (int k = 0; k < max_k; ++k) {
        div.ilad_at_k[static_cast<std::size_t>(k)] += pi.ilad_at_k[static_cast<std::size_t>(k)];
        div.new_topic_ratio_at_k[static_cast<std::size_t>(k)] +=
            pi.ntr_at_k[static_cast<std::size_t>(k)];
      }
      div.excluded_pairs += pi.excluded_pairs;
      ++counted;
    }
    if (counted > 0) {
      for (int k = 0; k < max_k; ++k) {
        div.ilad_at_k[static_cast<std::size_t>(k)] /= static_cast<double>(counted);
        div.new_topic_ratio_at_k[static_cast<std::size_t>(k)] /= static_cast<double>(counted);
      }
    }
    report.diversity = std::move(div);
  }

  return report;
}

Aggregate aggregate_runs(const std::vector<double>& values) {
  if (values.empty()) {
    throw NumericError("aggregate_runs needs at least one value");
  }
  Aggregate a;
  for (double v : values) {
    a.mean += v;
  }
  a.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) {
    var += (v - a.mean) * (v - a.mean);
  }
  a.stddev = std::sqrt(var / static_cast<double>(values.size()));
  return a;
}

}  // namespace pprec::eval
