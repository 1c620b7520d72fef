#include "pprec/model/config.hpp"

#include "pprec/common/error.hpp"

namespace pprec::model {

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) {
      throw ConfigError(std::string(name) + " must be positive, got " + std::to_string(v));
    }
  };
  positive(word_emb_dim, "word_emb_dim");
  positive(entity_emb_dim, "entity_emb_dim");
  positive(attn_heads, "attn_heads");
  positive(head_dim, "head_dim");
  positive(query_dim, "query_dim");
  positive(gate_hidden_dim, "gate_hidden_dim");
  positive(pop_hidden_dim, "pop_hidden_dim");
  positive(recency_emb_dim, "recency_emb_dim");
  positive(pop_emb_dim, "pop_emb_dim");
  positive(recency_bins, "recency_bins");
  positive(popularity_bins, "popularity_bins");
  positive(batch_size, "batch_size");
  positive(epochs, "epochs");
  positive(max_history, "max_history");
  positive(max_title_words, "max_title_words");
  positive(max_entities, "max_entities");
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ConfigError("dropout must lie in [0, 1), got " + std::to_string(dropout));
  }
  if (learning_rate <= 0.0) {
    throw ConfigError("learning_rate must be positive");
  }
  if (ctr_window_hours <= 0.0) {
    throw ConfigError("ctr_window_hours must be positive");
  }
  if (ablation.no_popularity_score && ablation.no_matching_score) {
    throw ConfigError("ablations cannot remove both the matching and the popularity score");
  }
  if (ablation.no_content && ablation.no_recency) {
    throw ConfigError(
        "ablations cannot remove both content and recency from the popularity predictor");
  }
}

namespace {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) {
    out = j.at(key).get<T>();
  }
}

}  // namespace

nlohmann::json to_json(const ModelConfig& cfg) {
  nlohmann::ordered_json j;
  j["word_emb_dim"] = cfg.word_emb_dim;
  j["entity_emb_dim"] = cfg.entity_emb_dim;
  j["attn_heads"] = cfg.attn_heads;
  j["head_dim"] = cfg.head_dim;
  j["query_dim"] = cfg.query_dim;
  j["gate_hidden_dim"] = cfg.gate_hidden_dim;
  j["pop_hidden_dim"] = cfg.pop_hidden_dim;
  j["recency_emb_dim"] = cfg.recency_emb_dim;
  j["pop_emb_dim"] = cfg.pop_emb_dim;
  j["recency_bins"] = cfg.recency_bins;
  j["popularity_bins"] = cfg.popularity_bins;
  j["dropout"] = cfg.dropout;
  j["learning_rate"] = cfg.learning_rate;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["ctr_window_hours"] = cfg.ctr_window_hours;
  j["max_history"] = cfg.max_history;
  j["max_title_words"] = cfg.max_title_words;
  j["max_entities"] = cfg.max_entities;
  j["single_layer_popularity_gate"] = cfg.single_layer_popularity_gate;
  j["seed"] = cfg.seed;
  nlohmann::ordered_json a;
  a["no_popularity_score"] = cfg.ablation.no_popularity_score;
  a["no_matching_score"] = cfg.ablation.no_matching_score;
  a["no_ctr"] = cfg.ablation.no_ctr;
  a["no_content"] = cfg.ablation.no_content;
  a["no_recency"] = cfg.ablation.no_recency;
  a["no_user_popularity"] = cfg.ablation.no_user_popularity;
  a["no_knowledge"] = cfg.ablation.no_knowledge;
  j["ablation"] = a;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  read_field(j, "word_emb_dim", cfg.word_emb_dim);
  read_field(j, "entity_emb_dim", cfg.entity_emb_dim);
  read_field(j, "attn_heads", cfg.attn_heads);
  read_field(j, "head_dim", cfg.head_dim);
  read_field(j, "query_dim", cfg.query_dim);
  read_field(j, "gate_hidden_dim", cfg.gate_hidden_dim);
  read_field(j, "pop_hidden_dim", cfg.pop_hidden_dim);
  read_field(j, "recency_emb_dim", cfg.recency_emb_dim);
  read_field(j, "pop_emb_dim", cfg.pop_emb_dim);
  read_field(j, "recency_bins", cfg.recency_bins);
  read_field(j, "popularity_bins", cfg.popularity_bins);
  read_field(j, "dropout", cfg.dropout);
  read_field(j, "learning_rate", cfg.learning_rate);
  read_field(j, "batch_size", cfg.batch_size);
  read_field(j, "epochs", cfg.epochs);
  read_field(j, "ctr_window_hours", cfg.ctr_window_hours);
  read_field(j, "max_history", cfg.max_history);
  read_field(j, "max_title_words", cfg.max_title_words);
  read_field(j, "max_entities", cfg.max_entities);
  read_field(j, "single_layer_popularity_gate", cfg.single_layer_popularity_gate);
  read_field(j, "seed", cfg.seed);
  if (j.contains("ablation")) {
    const nlohmann::json& a = j.at("ablation");
    read_field(a, "no_popularity_score", cfg.ablation.no_popularity_score);
    read_field(a, "no_matching_score", cfg.ablation.no_matching_score);
    read_field(a, "no_ctr", cfg.ablation.no_ctr);
    read_field(a, "no_content", cfg.ablation.no_content);
    read_field(a, "no_recency", cfg.ablation.no_recency);
    read_field(a, "no_user_popularity", cfg.ablation.no_user_popularity);
    read_field(a, "no_knowledge", cfg.ablation.no_knowledge);
  }
  cfg.validate();
  return cfg;
}

bool operator==(const AblationConfig& a, const AblationConfig& b) {
  return a.no_popularity_score == b.no_popularity_score &&
         a.no_matching_score == b.no_matching_score && a.no_ctr == b.no_ctr &&
         a.no_content == b.no_content && a.no_recency == b.no_recency &&
         a.no_user_popularity == b.no_user_popularity && a.no_knowledge == b.no_knowledge;
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
  return to_json(a) == to_json(b);
}

}  // namespace pprec::model
