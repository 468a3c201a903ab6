#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "ghost/autograd/adam.hpp"
#include "ghost/translate/model.hpp"
#include "ghost/translate/tokens.hpp"

namespace ghost::gt {

/// One training triple reduced to what the network sees: the normalized
/// bucket sequence and the tokenized object.
struct Sample {
  std::vector<double> source;
  TokenSeq target;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based, after completion
  double loss = 0.0;      // mean of the epoch's batch losses
  std::uint64_t steps = 0;
  double lr = 0.0;
};

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  ag::AdamConfig adam;  // lr 1e-3, linear warmup over 500 steps
  std::uint64_t seed = 0;  // drives per-epoch shuffling
  bool shuffle = true;
  /// Write a checkpoint every N completed epochs (0 = never) to checkpoint_path.
  std::size_t checkpoint_every = 0;
  std::filesystem::path checkpoint_path;
  std::function<void(const EpochStats&)> on_epoch;
};

/// Everything besides the weights needed to resume training bit-exactly.
struct TrainingSnapshot {
  std::size_t epoch = 0;
  std::uint64_t adam_steps = 0;
  std::vector<std::vector<double>> first_moments, second_moments;
  std::vector<double> loss_history;
};

/// Teacher-forced masked cross-entropy over a padded batch: the decoder reads
/// tokens[:, :-1] and predicts tokens[:, 1:], PAD targets ignored.
ag::Tensor batch_loss(const GhostTransformer& model, std::span<const Sample* const> batch);

class Trainer {
 public:
  Trainer(GhostTransformer& model, TrainConfig cfg);

  /// Runs epochs until cfg.epochs have completed in total; returns the
  /// per-epoch loss history (including epochs restored from a snapshot).
  /// Throws EmptyDataset, MixedSourceLengths, SourceLengthMismatch.
  const std::vector<double>& fit(const std::vector<Sample>& data);

  /// One optimizer step on the given batch; returns the batch loss.
  double step(std::span<const Sample* const> batch);

  /// Deterministic order of sample indices for a 0-based epoch.
  std::vector<std::size_t> epoch_order(std::size_t n, std::size_t epoch) const;

  TrainingSnapshot snapshot() const;
  void restore(const TrainingSnapshot& snap);

  const std::vector<double>& loss_history() const noexcept { return history_; }
  std::size_t epoch() const noexcept { return epoch_; }
  const ag::Adam& optimizer() const noexcept { return adam_; }
  const TrainConfig& config() const noexcept { return cfg_; }

 private:
  GhostTransformer& model_;
  TrainConfig cfg_;
  ag::Adam adam_;
  std::size_t epoch_ = 0;
  std::vector<double> history_;
};

/// Validates a dataset against the model: nonempty, equal source lengths
/// matching max_src_len, valid token sequences.
void validate_dataset(const GhostTransformer& model, const std::vector<Sample>& data);

}  // namespace ghost::gt
