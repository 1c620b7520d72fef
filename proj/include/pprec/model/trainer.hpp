#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pprec/common/rng.hpp"
#include "pprec/data/dataset.hpp"
#include "pprec/model/model.hpp"

namespace pprec::model {

/// One uniformly sampled in-impression negative per positive, as
/// (positive, negative) candidate indices. Impressions lacking either class
/// yield an empty list (callers count and skip them).
std::vector<std::pair<int, int>> sample_training_pairs(const data::PreparedImpression& imp,
                                                       Rng& rng);

/// BPR loss -mean(log sigmoid(s_pos - s_neg)) over score-node pairs.
core::Var bpr_loss(core::Tape& t, const std::vector<std::pair<core::Var, core::Var>>& pairs);

struct TrainOptions {
  /// When nonempty, writes epoch_<N>.ckpt files (and keeps the best) here.
  std::string checkpoint_dir;
  /// Print an epoch summary line to stderr after each epoch.
  bool verbose = false;
  /// Finish with the weights of the best validation-AUC epoch (the default)
  /// rather than the last epoch's. Turn off to inspect a fit as-is, e.g. in
  /// overfitting diagnostics.
  bool select_best_epoch = true;
};

struct EpochLog {
  int epoch = 0;           // 1-based
  double mean_loss = 0.0;  // pair-weighted mean over the epoch's batches
  double valid_auc = 0.0;
  std::string checkpoint_path;  // empty when checkpoints are not written
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  int best_epoch = 0;  // epoch whose weights the model ends up with
  double best_valid_auc = 0.0;
  double first_batch_loss = 0.0;
  std::size_t skipped_impressions = 0;  // train impressions lacking a class
  std::size_t trained_pairs = 0;        // total BPR pairs over all epochs
};

// Mini-batch Adam over seeded-shuffled training impressions with dropout,
// per-epoch validation AUC, and best-epoch weight selection. All randomness
// derives from the model config's seed; identical seeds give bit-identical
// trajectories. A non-finite loss dumps the offending batch to stderr and
// throws NumericError.
TrainResult train_model(PPRecModel& model, const data::Dataset& data,
                        const TrainOptions& options = {});

}  // namespace pprec::model
