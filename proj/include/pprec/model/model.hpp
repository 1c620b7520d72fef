#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pprec/common/rng.hpp"
#include "pprec/core/optim.hpp"
#include "pprec/core/tape.hpp"
#include "pprec/data/types.hpp"
#include "pprec/model/config.hpp"

namespace pprec::model {

using core::ParamStore;
using core::Tape;
using core::Tensor;
using core::Var;

/// Components of one candidate's ranking score, as plain numbers.
struct RankingBreakdown {
  double matching = 0.0;    // s_m = u . n
  double popularity = 0.0;  // s_p
  double gate = 0.0;        // eta; pinned to 0/1 when an ablation bypasses the mix
  double score = 0.0;       // s = (1 - eta) * s_m + eta * s_p
};

/// Same components as tape nodes, for training. Nodes an ablation removes
/// stay invalid.
struct ScoreNodes {
  Var matching;
  Var popularity;
  Var gate;
  Var score;
};

// The full ranking model: knowledge-aware news encoder, time-aware
// popularity predictor, popularity-aware user encoder, and the personalized
// score aggregator. All parameters live in one store keyed by dotted names;
// forward methods build nodes on a caller-provided tape, so one tape can hold
// a whole training batch.
//
// The object is copyable (parameters are plain tensors); read-only scoring
// from several threads should give each thread its own copy or its own
// forward-only tape over a frozen instance.
class PPRecModel {
public:
  PPRecModel(ModelConfig cfg, std::size_t word_vocab_size, std::size_t entity_vocab_size);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  std::size_t word_vocab_size() const { return word_vocab_size_; }
  std::size_t entity_vocab_size() const { return entity_vocab_size_; }

  // Training-mode dropout draws masks from this source; nullptr (the
  // default) disables dropout for inference and tests.
  void set_dropout_rng(Rng* rng) { dropout_rng_ = rng; }

  // --- news encoder ---------------------------------------------------
  /// Multi-head self-attention of the parameter set `prefix` over seq rows.
  Var mhsa(Tape& t, const std::string& prefix, Var seq);
  /// Cross attention: queries from query_seq, keys/values from context_seq.
  Var mhca(Tape& t, const std::string& prefix, Var query_seq, Var context_seq);
  /// Word and entity token representations (MHSA + MHCA sums). The entity
  /// Var is invalid when the article has no entities (or knowledge is
  /// ablated), and the word reps then omit the cross-attention term.
  std::pair<Var, Var> unified_token_reps(Tape& t, const data::NewsArticle& article);
  /// Additive attention pooling: alpha_i ∝ exp(q^T tanh(W x_i)); returns the
  /// weighted sum row and optionally the weights.
  Var attention_pool(Tape& t, const std::string& prefix, Var seq, Tensor* alpha_out = nullptr);
  /// Unified news embedding n; articles without entities give the pooled
  /// word representation unchanged.
  Var encode_news(Tape& t, const data::NewsArticle& article);

  // --- popularity predictor --------------------------------------------
  Var content_popularity(Tape& t, Var n);
  /// (p_r, recency embedding row) for one quantized recency bin.
  std::pair<Var, Var> recency_popularity(Tape& t, int recency_bin);
  /// Content-specific aggregator theta in (0,1).
  Var content_specific_gate(Tape& t, Var n, Var recency_emb);
  /// s_p = w_c * c_t + w_p * (theta * p_c + (1 - theta) * p_r), with the
  /// configured ablations applied.
  Var time_aware_popularity(Tape& t, Var n, int recency_bin, double ctr);
  /// CTR-only popularity w_c * c_t (the quantity whose CTR the user encoder
  /// bins; reported by the popularity inspector).
  double ctr_only_popularity(double ctr) const;

  // --- user encoder ----------------------------------------------------
  /// News-level MHSA over clicked-news embeddings [N x attn_dim].
  Var contextual_news_reps(Tape& t, Var history_embeddings);
  /// Content-popularity joint attention: returns (alpha [1 x N], u).
  std::pair<Var, Var> cpja(Tape& t, Var contextual_reps, const std::vector<int>& pop_bins);
  /// User embedding; empty history gives the zero vector.
  Var encode_user(Tape& t, const std::vector<Var>& history_news, const std::vector<int>& pop_bins);

  // --- ranking -----------------------------------------------------------
  /// Personalized aggregator gate eta in (0,1).
  Var personalized_gate(Tape& t, Var u);
  Var matching_score(Tape& t, Var u, Var n);
  /// Full per-candidate score with components, ablations applied.
  ScoreNodes score_candidate(Tape& t, Var u, Var n, int recency_bin, double ctr);
  /// Materialize a ScoreNodes into plain numbers.
  RankingBreakdown breakdown(const ScoreNodes& nodes) const;

private:
  Var dense_tanh_linear(Tape& t, const std::string& prefix, Var x);
  Var gate_logit(Tape& t, const std::string& prefix, Var x, int hidden);
  Var dropout(Tape& t, Var x);
  void init_params();

  ModelConfig cfg_;
  std::size_t word_vocab_size_;
  std::size_t entity_vocab_size_;
  ParamStore params_;
  Rng* dropout_rng_ = nullptr;
};

}  // namespace pprec::model
