#pragma once

#include <optional>
#include <string>

#include "pprec/data/types.hpp"
#include "pprec/model/model.hpp"

namespace pprec::model {

/// Provenance recorded alongside the weights.
struct CheckpointInfo {
  std::string word_vocab_digest;
  std::string entity_vocab_digest;
  int epoch = 0;
  double valid_auc = 0.0;
};

/// Stable digest of a vocabulary (id order and tokens).
std::string vocabulary_digest(const data::Vocabulary& vocab);

/// Versioned binary container: config JSON, provenance, named tensors.
void save_checkpoint(const std::string& path, const PPRecModel& model, const CheckpointInfo& info);

/// Rebuilds the model from the stored config and weights. A container whose
/// tensors do not match the config-derived architecture fails with
/// ConfigError; unreadable or corrupt files fail with DataError.
PPRecModel load_checkpoint(const std::string& path, CheckpointInfo* info = nullptr);

}  // namespace pprec::model
