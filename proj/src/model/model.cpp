#include "pprec/model/model.hpp"

#include "pprec/common/error.hpp"

namespace pprec::model {

PPRecModel::PPRecModel(ModelConfig cfg, std::size_t word_vocab_size,
                       std::size_t entity_vocab_size)
    : cfg_(std::move(cfg)), word_vocab_size_(word_vocab_size), entity_vocab_size_(entity_vocab_size) {
  cfg_.validate();
  if (word_vocab_size_ == 0) {
    throw ConfigError("word vocabulary is empty");
  }
  if (entity_vocab_size_ == 0) {
    throw ConfigError("entity vocabulary is empty");
  }
  init_params();
}

void PPRecModel::init_params() {
  const std::uint64_t seed = cfg_.seed;
  const auto D = static_cast<std::size_t>(cfg_.attn_dim());
  const auto Dw = static_cast<std::size_t>(cfg_.word_emb_dim);
  const auto De = static_cast<std::size_t>(cfg_.entity_emb_dim);
  const auto Dq = static_cast<std::size_t>(cfg_.query_dim);

  auto attention = [&](const std::string& prefix, std::size_t query_in, std::size_t context_in) {
    params_.create_glorot(prefix + ".Wq", query_in, D, seed);
    params_.create_glorot(prefix + ".Wk", context_in, D, seed);
    params_.create_glorot(prefix + ".Wv", context_in, D, seed);
  };
  auto pool = [&](const std::string& prefix, std::size_t in_dim) {
    params_.create_glorot(prefix + ".W", in_dim, Dq, seed);
    params_.create_glorot(prefix + ".q", Dq, 1, seed);
  };
  auto dense = [&](const std::string& prefix, std::size_t in_dim, std::size_t hidden) {
    params_.create_glorot(prefix + ".W1", in_dim, hidden, seed);
    params_.create_zeros(prefix + ".b1", 1, hidden);
    params_.create_glorot(prefix + ".W2", hidden, 1, seed);
    params_.create_zeros(prefix + ".b2", 1, 1);
  };

  params_.create_normal("news.word_emb", word_vocab_size_, Dw, 0.1, seed);
  attention("news.word_sa", Dw, Dw);
  pool("news.word_pool", D);
  if (!cfg_.ablation.no_knowledge) {
    params_.create_normal("news.entity_emb", entity_vocab_size_, De, 0.1, seed);
    params_.create_glorot("news.entity_proj.W", De, D, seed);
    attention("news.word_ca", Dw, D);
    attention("news.ent_sa", D, D);
    attention("news.ent_ca", D, Dw);
    pool("news.ent_pool", D);
    pool("news.fusion_pool", D);
  }

  dense("pop.content", D, static_cast<std::size_t>(cfg_.pop_hidden_dim));
  params_.create_normal("pop.recency_emb", static_cast<std::size_t>(cfg_.recency_bins),
                        static_cast<std::size_t>(cfg_.recency_emb_dim), 0.1, seed);
  dense("pop.recency", static_cast<std::size_t>(cfg_.recency_emb_dim),
        static_cast<std::size_t>(cfg_.pop_hidden_dim));
  const std::size_t gate_in = D + static_cast<std::size_t>(cfg_.recency_emb_dim);
  if (cfg_.single_layer_popularity_gate) {
    params_.create_glorot("pop.gate.W", gate_in, 1, seed);
    params_.create_zeros("pop.gate.b", 1, 1);
  } else {
    params_.create_glorot("pop.gate.W1", gate_in, static_cast<std::size_t>(cfg_.gate_hidden_dim),
                          seed);
    params_.create_zeros("pop.gate.b1", 1, static_cast<std::size_t>(cfg_.gate_hidden_dim));
    params_.create_glorot("pop.gate.W2", static_cast<std::size_t>(cfg_.gate_hidden_dim), 1, seed);
    params_.create_zeros("pop.gate.b2", 1, 1);
  }
  params_.create("pop.w_c", Tensor::scalar(1.0));
  params_.create("pop.w_p", Tensor::scalar(1.0));

  attention("user.sa", D, D);
  if (!cfg_.ablation.no_user_popularity) {
    params_.create_normal("user.pop_emb", static_cast<std::size_t>(cfg_.popularity_bins),
                          static_cast<std::size_t>(cfg_.pop_emb_dim), 0.1, seed);
  }
  params_.create_glorot("user.cpja.W", D + static_cast<std::size_t>(cfg_.pop_emb_dim), Dq, seed);
  params_.create_glorot("user.cpja.q", Dq, 1, seed);

  params_.create_glorot("rank.gate.W1", D, static_cast<std::size_t>(cfg_.gate_hidden_dim), seed);
  params_.create_zeros("rank.gate.b1", 1, static_cast<std::size_t>(cfg_.gate_hidden_dim));
  params_.create_glorot("rank.gate.W2", static_cast<std::size_t>(cfg_.gate_hidden_dim), 1, seed);
  params_.create_zeros("rank.gate.b2", 1, 1);
}

Var PPRecModel::dropout(Tape& t, Var x) {
  if (dropout_rng_ == nullptr || cfg_.dropout <= 0.0 || !t.grad_enabled()) {
    return x;
  }
  return t.mul_const(
      x, core::dropout_mask(x.value().rows(), x.value().cols(), cfg_.dropout, *dropout_rng_));
}

Var PPRecModel::mhsa(Tape& t, const std::string& prefix, Var seq) {
  return mhca(t, prefix, seq, seq);
}

Var PPRecModel::mhca(Tape& t, const std::string& prefix, Var query_seq, Var context_seq) {
  Var q = t.matmul(query_seq, t.param(params_.at(prefix + ".Wq")));
  Var k = t.matmul(context_seq, t.param(params_.at(prefix + ".Wk")));
  Var v = t.matmul(context_seq, t.param(params_.at(prefix + ".Wv")));
  return t.multi_head_mix(q, k, v, static_cast<std::size_t>(cfg_.attn_heads));
}

std::pair<Var, Var> PPRecModel::unified_token_reps(Tape& t, const data::NewsArticle& article) {
  if (article.title_tokens.empty()) {
    throw DataError("article " + article.news_id + " has an empty title");
  }
  Var words = dropout(t, t.lookup_rows(params_.at("news.word_emb"), article.title_tokens));
  const bool with_entities = !cfg_.ablation.no_knowledge && !article.entity_ids.empty();
  if (!with_entities) {
    return {dropout(t, mhsa(t, "news.word_sa", words)), Var{}};
  }
  Var entities = t.matmul(t.lookup_rows(params_.at("news.entity_emb"), article.entity_ids),
                          t.param(params_.at("news.entity_proj.W")));
  entities = dropout(t, entities);
  Var word_reps =
      t.add(mhsa(t, "news.word_sa", words), mhca(t, "news.word_ca", words, entities));
  Var entity_reps =
      t.add(mhsa(t, "news.ent_sa", entities), mhca(t, "news.ent_ca", entities, words));
  return {dropout(t, word_reps), dropout(t, entity_reps)};
}

Var PPRecModel::attention_pool(Tape& t, const std::string& prefix, Var seq, Tensor* alpha_out) {
  Var projected = t.tanh(t.matmul(seq, t.param(params_.at(prefix + ".W"))));
  Var scores = t.matmul(projected, t.param(params_.at(prefix + ".q")));  // [L x 1]
  Var alpha = t.softmax_rows(t.transpose(scores));                       // [1 x L]
  if (alpha_out != nullptr) {
    *alpha_out = alpha.value();
  }
  return t.matmul(alpha, seq);
}

Var PPRecModel::encode_news(Tape& t, const data::NewsArticle& article) {
  auto [word_reps, entity_reps] = unified_token_reps(t, article);
  Var w = attention_pool(t, "news.word_pool", word_reps);
  if (!entity_reps.valid()) {
    return w;
  }
  Var e = attention_pool(t, "news.ent_pool", entity_reps);
  return attention_pool(t, "news.fusion_pool", t.concat_rows({w, e}));
}

Var PPRecModel::dense_tanh_linear(Tape& t, const std::string& prefix, Var x) {
  Var hidden = t.tanh(t.add_rowvec(t.matmul(x, t.param(params_.at(prefix + ".W1"))),
                                   t.param(params_.at(prefix + ".b1"))));
  return t.add_rowvec(t.matmul(hidden, t.param(params_.at(prefix + ".W2"))),
                      t.param(params_.at(prefix + ".b2")));
}

Var PPRecModel::gate_logit(Tape& t, const std::string& prefix, Var x, int hidden) {
  if (params_.contains(prefix + ".W")) {  // single-layer affine form
    return t.add_rowvec(t.matmul(x, t.param(params_.at(prefix + ".W"))),
                        t.param(params_.at(prefix + ".b")));
  }
  (void)hidden;
  return dense_tanh_linear(t, prefix, x);
}

Var PPRecModel::content_popularity(Tape& t, Var n) {
  return dense_tanh_linear(t, "pop.content", n);
}

std::pair<Var, Var> PPRecModel::recency_popularity(Tape& t, int recency_bin) {
  if (recency_bin < 0 || recency_bin >= cfg_.recency_bins) {
    throw NumericError("recency bin " + std::to_string(recency_bin) + " outside [0, " +
                       std::to_string(cfg_.recency_bins - 1) + "]");
  }
  Var emb = t.lookup_rows(params_.at("pop.recency_emb"), {recency_bin});
  return {dense_tanh_linear(t, "pop.recency", emb), emb};
}

Var PPRecModel::content_specific_gate(Tape& t, Var n, Var recency_emb) {
  return t.sigmoid(gate_logit(t, "pop.gate", t.concat_cols({n, recency_emb}),
                              cfg_.gate_hidden_dim));
}

Var PPRecModel::time_aware_popularity(Tape& t, Var n, int recency_bin, double ctr) {
  if (ctr < 0.0 || ctr > 1.0) {
    throw NumericError("ctr " + std::to_string(ctr) + " outside [0, 1]");
  }
  const AblationConfig& ab = cfg_.ablation;
  Var p_hat;
  if (ab.no_recency) {  // theta forced to 1: content only
    p_hat = content_popularity(t, n);
  } else if (ab.no_content) {  // theta forced to 0: recency only
    p_hat = recency_popularity(t, recency_bin).first;
  } else {
    auto [p_r, r_emb] = recency_popularity(t, recency_bin);
    Var p_c = content_popularity(t, n);
    Var theta = content_specific_gate(t, n, r_emb);
    Var one = t.constant(Tensor::scalar(1.0));
    p_hat = t.add(t.mul(theta, p_c), t.mul(t.sub(one, theta), p_r));
  }
  Var s_p = t.mul(t.param(params_.at("pop.w_p")), p_hat);
  if (!ab.no_ctr) {
    s_p = t.add(s_p, t.scale(t.param(params_.at("pop.w_c")), ctr));
  }
  return s_p;
}

double PPRecModel::ctr_only_popularity(double ctr) const {
  return params_.at("pop.w_c").value.item() * ctr;
}

Var PPRecModel::contextual_news_reps(Tape& t, Var history_embeddings) {
  return mhsa(t, "user.sa", history_embeddings);
}

std::pair<Var, Var> PPRecModel::cpja(Tape& t, Var contextual_reps,
                                     const std::vector<int>& pop_bins) {
  const std::size_t n = contextual_reps.value().rows();
  if (pop_bins.size() != n) {
    throw NumericError("popularity bins (" + std::to_string(pop_bins.size()) +
                       ") do not match history length (" + std::to_string(n) + ")");
  }
  for (int bin : pop_bins) {
    if (bin < 0 || bin >= cfg_.popularity_bins) {
      throw NumericError("popularity bin " + std::to_string(bin) + " outside [0, " +
                         std::to_string(cfg_.popularity_bins - 1) + "]");
    }
  }
  Var pop;
  if (cfg_.ablation.no_user_popularity) {
    pop = t.constant(Tensor::zeros(n, static_cast<std::size_t>(cfg_.pop_emb_dim)));
  } else {
    pop = t.lookup_rows(params_.at("user.pop_emb"), pop_bins);
  }
  Var joint = t.concat_cols({contextual_reps, pop});
  Var projected = t.tanh(t.matmul(joint, t.param(params_.at("user.cpja.W"))));
  Var scores = t.matmul(projected, t.param(params_.at("user.cpja.q")));  // [N x 1]
  Var alpha = t.softmax_rows(t.transpose(scores));                       // [1 x N]
  return {alpha, t.matmul(alpha, contextual_reps)};
}

Var PPRecModel::encode_user(Tape& t, const std::vector<Var>& history_news,
                            const std::vector<int>& pop_bins) {
  if (history_news.empty()) {
    return t.constant(Tensor::zeros(1, static_cast<std::size_t>(cfg_.attn_dim())));
  }
  Var stacked = history_news.size() == 1 ? history_news.front() : t.concat_rows(history_news);
  Var contextual = dropout(t, contextual_news_reps(t, stacked));
  return cpja(t, contextual, pop_bins).second;
}

Var PPRecModel::personalized_gate(Tape& t, Var u) {
  return t.sigmoid(dense_tanh_linear(t, "rank.gate", u));
}

Var PPRecModel::matching_score(Tape& t, Var u, Var n) {
  return t.matmul(u, t.transpose(n));
}

ScoreNodes PPRecModel::score_candidate(Tape& t, Var u, Var n, int recency_bin, double ctr) {
  const AblationConfig& ab = cfg_.ablation;
  ScoreNodes out;
  if (!ab.no_matching_score) {
    out.matching = matching_score(t, u, n);
  }
  if (!ab.no_popularity_score) {
    out.popularity = time_aware_popularity(t, n, recency_bin, ctr);
  }
  if (ab.no_popularity_score) {
    out.score = out.matching;
  } else if (ab.no_matching_score) {
    out.score = out.popularity;
  } else {
    out.gate = personalized_gate(t, u);
    Var one = t.constant(Tensor::scalar(1.0));
    out.score = t.add(t.mul(t.sub(one, out.gate), out.matching),
                      t.mul(out.gate, out.popularity));
  }
  return out;
}

RankingBreakdown PPRecModel::breakdown(const ScoreNodes& nodes) const {
  RankingBreakdown b;
  b.matching = nodes.matching.valid() ? nodes.matching.item() : 0.0;
  b.popularity = nodes.popularity.valid() ? nodes.popularity.item() : 0.0;
  if (nodes.gate.valid()) {
    b.gate = nodes.gate.item();
  } else {
    // An ablation routed the score to one side; report the gate pinned there
    // so s = (1 - eta) * s_m + eta * s_p still holds.
    b.gate = cfg_.ablation.no_matching_score ? 1.0 : 0.0;
  }
  b.score = nodes.score.item();
  return b;
}

}  // namespace pprec::model
