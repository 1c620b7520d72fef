#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pprec/data/dataset.hpp"
#include "pprec/eval/metrics.hpp"
#include "pprec/model/model.hpp"

namespace pprec::eval {

// Anything that can score every candidate of a prepared impression.
// score() must be safe to call concurrently after prepare() returned.
class Scorer {
public:
  virtual ~Scorer() = default;
  virtual std::string name() const = 0;
  /// One-time setup over the dataset (e.g. embedding caches). threads >= 1.
  virtual void prepare(const data::Dataset& data, int threads) {
    (void)data;
    (void)threads;
  }
  virtual std::vector<double> score(const data::Dataset& data,
                                    const data::PreparedImpression& imp) const = 0;
  /// Content embedding of one news article for diversity metrics, or nullptr
  /// when this scorer has none.
  virtual const std::vector<double>* embedding(int news) const {
    (void)news;
    return nullptr;
  }
};

// Scores with a trained model. News content embeddings are time-independent
// under frozen parameters, so prepare() computes each news embedding once
// and scoring reuses them for histories and candidates alike.
class ModelScorer : public Scorer {
public:
  explicit ModelScorer(const model::PPRecModel& m) : model_(m) {
    model_.set_dropout_rng(nullptr);  // the copy always runs in inference mode
  }

  std::string name() const override { return "pprec"; }
  void prepare(const data::Dataset& data, int threads) override;
  std::vector<double> score(const data::Dataset& data,
                            const data::PreparedImpression& imp) const override;
  const std::vector<double>* embedding(int news) const override;

  const model::PPRecModel& model() const { return model_; }

private:
  mutable model::PPRecModel model_;  // frozen private copy; forward passes only
  std::vector<std::vector<double>> cache_;  // news index -> embedding values
};

/// ViewNum / RecentPop / CTR popularity baselines (user-independent).
class PopularityBaselineScorer : public Scorer {
public:
  enum class Kind { kViewNum, kRecentPop, kCtr };

  explicit PopularityBaselineScorer(Kind kind) : kind_(kind) {}
  /// Parses "viewnum" | "recentpop" | "ctr" (case-insensitive).
  static std::optional<Kind> parse(const std::string& name);

  std::string name() const override;
  std::vector<double> score(const data::Dataset& data,
                            const data::PreparedImpression& imp) const override;

private:
  Kind kind_;
};

struct SplitMetrics {
  double auc = 0.0;
  double mrr = 0.0;
  double ndcg5 = 0.0;
  double ndcg10 = 0.0;
  std::size_t impressions_scored = 0;
  std::size_t excluded_no_positive = 0;
  std::size_t excluded_no_negative = 0;
};

struct BucketMetrics {
  int history_length = 0;
  SplitMetrics metrics;
};

struct DiversityMetrics {
  // index k-1 holds the metric at depth K = k, for K in 1..max_k
  std::vector<double> ilad_at_k;
  std::vector<double> new_topic_ratio_at_k;
  std::size_t excluded_pairs = 0;
  int max_k = 10;
};

struct EvalOptions {
  bool cold_start = false;  // bucket by exact history length 0/1/3/5
  bool diversity = false;   // ILAD@K and newTopicRatio@K, K = 1..diversity_max_k
  int diversity_max_k = 10;
  int threads = 1;
};

struct EvalReport {
  std::string scorer;
  SplitMetrics overall;
  std::vector<BucketMetrics> cold_start;      // nonempty buckets only, ascending K
  std::optional<DiversityMetrics> diversity;  // unset when the scorer lacks embeddings
};

/// Score a split and aggregate ranking metrics plus optional analyses.
/// Impressions lacking a class are excluded from ranking metrics and counted.
/// The result is identical for any thread count.
EvalReport evaluate_scorer(Scorer& scorer, const data::Dataset& data,
                           const std::vector<data::PreparedImpression>& split,
                           const EvalOptions& options = {});

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
};

Aggregate aggregate_runs(const std::vector<double>& values);

}  // namespace pprec::eval
