#include "pprec/model/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <numeric>
#include <unordered_map>

#include "pprec/common/error.hpp"
#include "pprec/eval/evaluate.hpp"
#include "pprec/model/checkpoint.hpp"

namespace pprec::model {

std::vector<std::pair<int, int>> sample_training_pairs(const data::PreparedImpression& imp,
                                                       Rng& rng) {
  std::vector<int> positives;
  std::vector<int> negatives;
  for (std::size_t i = 0; i < imp.candidates.size(); ++i) {
    (imp.candidates[i].label != 0 ? positives : negatives).push_back(static_cast<int>(i));
  }
  if (positives.empty() || negatives.empty()) {
    return {};
  }
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(positives.size());
  for (int pos : positives) {
    pairs.emplace_back(pos, negatives[rng.index(negatives.size())]);
  }
  return pairs;
}

core::Var bpr_loss(core::Tape& t, const std::vector<std::pair<core::Var, core::Var>>& pairs) {
  if (pairs.empty()) {
    throw NumericError("bpr_loss needs at least one (positive, negative) pair");
  }
  std::vector<core::Var> terms;
  terms.reserve(pairs.size());
  for (const auto& [pos, neg] : pairs) {
    terms.push_back(t.log_sigmoid(t.sub(pos, neg)));
  }
  return t.scale(t.mean(t.stack_scalars(terms)), -1.0);
}

namespace {

double validation_auc(const PPRecModel& model, const data::Dataset& data) {
  if (data.valid.empty()) {
    return 0.5;
  }
  eval::ModelScorer scorer(model);
  const eval::EvalReport report = eval::evaluate_scorer(scorer, data, data.valid);
  return report.overall.impressions_scored > 0 ? report.overall.auc : 0.5;
}

void dump_batch(const data::Dataset& data, const std::vector<const data::PreparedImpression*>& batch,
                const std::vector<double>& scores) {
  std::cerr << "--- non-finite loss: offending batch ---\n";
  for (const data::PreparedImpression* imp : batch) {
    std::cerr << "impression user=" << imp->user << " ts=" << imp->ts << " history="
              << imp->history_news.size() << "\n";
    for (const data::PreparedCandidate& cand : imp->candidates) {
      std::cerr << "  news=" << data.news[static_cast<std::size_t>(cand.news)].news_id
                << " label=" << cand.label << " ctr=" << cand.ctr
                << " recency_bin=" << cand.recency_bin << "\n";
    }
  }
  std::cerr << "scored nodes in creation order:";
  for (double s : scores) {
    std::cerr << ' ' << s;
  }
  std::cerr << "\n----------------------------------------\n";
}

std::map<std::string, core::Tensor> snapshot_params(const PPRecModel& model) {
  std::map<std::string, core::Tensor> values;
  for (const auto& [name, param] : model.params()) {
    values.emplace(name, param.value);
  }
  return values;
}

void restore_params(PPRecModel& model, const std::map<std::string, core::Tensor>& values) {
  for (auto& [name, value] : values) {
    model.params().at(name).value = value;
  }
}

}  // namespace

TrainResult train_model(PPRecModel& model, const data::Dataset& data,
                        const TrainOptions& options) {
  const ModelConfig& cfg = model.config();
  TrainResult result;

  std::vector<std::size_t> trainable;
  trainable.reserve(data.train.size());
  for (std::size_t i = 0; i < data.train.size(); ++i) {
    bool has_pos = false;
    bool has_neg = false;
    for (const data::PreparedCandidate& cand : data.train[i].candidates) {
      (cand.label != 0 ? has_pos : has_neg) = true;
    }
    if (has_pos && has_neg) {
      trainable.push_back(i);
    } else {
      ++result.skipped_impressions;
    }
  }
  if (trainable.empty()) {
    throw DataError("training split has no impression with both a positive and a negative");
  }
  if (result.skipped_impressions > 0 && options.verbose) {
    std::cerr << "skipping " << result.skipped_impressions
              << " train impressions lacking a class\n";
  }

  core::AdamOptimizer adam({cfg.learning_rate});
  std::map<std::string, core::Tensor> best_params;
  const std::size_t batch_size = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::uint64_t epoch_index = static_cast<std::uint64_t>(epoch);
    std::vector<std::size_t> order = trainable;
    Rng shuffle_rng(derive_seed(cfg.seed, "epoch-shuffle", epoch_index));
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    Rng negative_rng(derive_seed(cfg.seed, "negative-sampling", epoch_index));
    Rng dropout_rng(derive_seed(cfg.seed, "dropout", epoch_index));

    double loss_sum = 0.0;
    std::size_t pair_count = 0;

    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      core::Tape tape;
      model.set_dropout_rng(&dropout_rng);

      // Encode each distinct news once per batch; histories and candidates
      // share the nodes (and their dropout masks).
      std::unordered_map<int, core::Var> news_nodes;
      auto news_node = [&](int news) {
        auto it = news_nodes.find(news);
        if (it != news_nodes.end()) {
          return it->second;
        }
        core::Var n = model.encode_news(tape, data.news[static_cast<std::size_t>(news)]);
        news_nodes.emplace(news, n);
        return n;
      };

      std::vector<std::pair<core::Var, core::Var>> pairs;
      std::vector<const data::PreparedImpression*> batch;
      std::vector<double> batch_scores;
      for (std::size_t b = start; b < end; ++b) {
        const data::PreparedImpression& imp = data.train[order[b]];
        batch.push_back(&imp);
        const std::vector<std::pair<int, int>> sampled = sample_training_pairs(imp, negative_rng);

        std::vector<core::Var> history;
        history.reserve(imp.history_news.size());
        for (int news : imp.history_news) {
          history.push_back(news_node(news));
        }
        core::Var u = model.encode_user(tape, history, imp.history_pop_bins);

        std::unordered_map<int, core::Var> candidate_scores;
        auto score_node = [&](int candidate) {
          auto it = candidate_scores.find(candidate);
          if (it != candidate_scores.end()) {
            return it->second;
          }
          const data::PreparedCandidate& cand =
              imp.candidates[static_cast<std::size_t>(candidate)];
          core::Var s =
              model.score_candidate(tape, u, news_node(cand.news), cand.recency_bin, cand.ctr)
                  .score;
          candidate_scores.emplace(candidate, s);
          batch_scores.push_back(s.item());
          return s;
        };
        for (const auto& [pos, neg] : sampled) {
          pairs.emplace_back(score_node(pos), score_node(neg));
        }
      }

      core::Var loss = bpr_loss(tape, pairs);
      const double loss_value = loss.item();
      if (!std::isfinite(loss_value)) {
        model.set_dropout_rng(nullptr);
        dump_batch(data, batch, batch_scores);
        throw NumericError("training loss is not finite (epoch " + std::to_string(epoch) +
                           ", batch starting at shuffled index " + std::to_string(start) +
                           "); batch dumped to stderr");
      }
      if (epoch == 1 && start == 0) {
        result.first_batch_loss = loss_value;
      }
      tape.backward(loss);
      adam.step(model.params());
      model.set_dropout_rng(nullptr);

      loss_sum += loss_value * static_cast<double>(pairs.size());
      pair_count += pairs.size();
    }
    result.trained_pairs += pair_count;

    EpochLog log;
    log.epoch = epoch;
    log.mean_loss = pair_count > 0 ? loss_sum / static_cast<double>(pair_count) : 0.0;
    log.valid_auc = validation_auc(model, data);

    if (!options.checkpoint_dir.empty()) {
      std::filesystem::create_directories(options.checkpoint_dir);
      log.checkpoint_path = (std::filesystem::path(options.checkpoint_dir) /
                             ("epoch_" + std::to_string(epoch) + ".ckpt"))
                                .string();
      CheckpointInfo info;
      info.word_vocab_digest = vocabulary_digest(data.word_vocab);
      info.entity_vocab_digest = vocabulary_digest(data.entity_vocab);
      info.epoch = epoch;
      info.valid_auc = log.valid_auc;
      save_checkpoint(log.checkpoint_path, model, info);
    }

    if (result.epochs.empty() || log.valid_auc > result.best_valid_auc) {
      result.best_valid_auc = log.valid_auc;
      result.best_epoch = epoch;
      best_params = snapshot_params(model);
    }
    result.epochs.push_back(log);

    if (options.verbose) {
      std::cerr << "epoch " << epoch << ": loss " << log.mean_loss << ", valid AUC "
                << log.valid_auc << "\n";
    }
  }

  if (options.select_best_epoch) {
    restore_params(model, best_params);
  } else {
    result.best_epoch = cfg.epochs;
    result.best_valid_auc = result.epochs.empty() ? 0.0 : result.epochs.back().valid_auc;
  }
  return result;
}

}  // namespace pprec::model
