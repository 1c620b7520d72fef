#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

namespace pprec::model {

// Component switches for the ablation experiments. Each removes one source
// of signal; the full model has all of them off.
struct AblationConfig {
  bool no_popularity_score = false;  // rank by matching score alone
  bool no_matching_score = false;    // rank by popularity score alone
  bool no_ctr = false;               // drop the w_c * c_t term from s_p
  bool no_content = false;           // force the popularity gate theta to 0
  bool no_recency = false;           // force the popularity gate theta to 1
  bool no_user_popularity = false;   // constant popularity embedding in CPJA
  bool no_knowledge = false;         // drop entity branches from the news encoder

  bool any() const {
    return no_popularity_score || no_matching_score || no_ctr || no_content || no_recency ||
           no_user_popularity || no_knowledge;
  }
};

// Model and training hyperparameters. Defaults follow the reference
// configuration; every dimension is overridable so tests can run scaled-down
// copies of the same architecture.
struct ModelConfig {
  int word_emb_dim = 300;
  int entity_emb_dim = 100;
  int attn_heads = 20;
  int head_dim = 20;        // per-head output; attention output = heads * head_dim
  int query_dim = 200;      // additive-attention query size
  int gate_hidden_dim = 100;  // hidden width of all two-layer gates
  int pop_hidden_dim = 128;   // hidden width of the popularity dense nets
  int recency_emb_dim = 100;
  int pop_emb_dim = 100;    // user-side popularity embedding width
  int recency_bins = 721;   // quantized hours 0..720
  int popularity_bins = 200;

  double dropout = 0.2;
  double learning_rate = 1e-4;
  int batch_size = 32;
  int epochs = 2;
  double ctr_window_hours = 1.0;

  int max_history = 50;
  int max_title_words = 30;
  int max_entities = 5;

  // The popularity aggregator gate as written is a single affine map; the
  // implemented default is a two-layer gate (100-dim tanh hidden) per the
  // stated gate-network convention. Set true for the single-layer form.
  bool single_layer_popularity_gate = false;

  std::uint64_t seed = 42;
  AblationConfig ablation;

  int attn_dim() const { return attn_heads * head_dim; }

  /// Throws ConfigError when any field is out of contract.
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

bool operator==(const AblationConfig& a, const AblationConfig& b);
bool operator==(const ModelConfig& a, const ModelConfig& b);

}  // namespace pprec::model
