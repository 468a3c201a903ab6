#include "ghost/translate/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "ghost/autograd/ops.hpp"
#include "ghost/error.hpp"
#include "ghost/translate/translate.hpp"

namespace ghost::gt {

void validate_dataset(const GhostTransformer& model, const std::vector<Sample>& data) {
  if (data.empty()) throw Error(ErrorCode::EmptyDataset, "no training samples");
  const std::size_t k = data.front().source.size();
  const Vocabulary vocab = model.config().vocabulary();
  for (const auto& s : data) {
    if (s.source.size() != k) throw Error(ErrorCode::MixedSourceLengths, "bucket sequences differ in length");
    if (!is_valid_sequence(s.target, vocab)) throw Error(ErrorCode::TokenOutOfRange, "invalid target token sequence");
  }
  if (k != model.config().max_src_len) {
    throw Error(ErrorCode::SourceLengthMismatch,
                "dataset K=" + std::to_string(k) + " but model expects " + std::to_string(model.config().max_src_len));
  }
}

ag::Tensor batch_loss(const GhostTransformer& model, std::span<const Sample* const> batch) {
  if (batch.empty()) throw Error(ErrorCode::EmptyDataset, "empty batch");
  const std::size_t B = batch.size(), K = batch.front()->source.size();
  std::vector<double> sources;
  sources.reserve(B * K);
  std::vector<TokenSeq> targets;
  targets.reserve(B);
  for (const Sample* s : batch) {
    if (s->source.size() != K) throw Error(ErrorCode::MixedSourceLengths, "bucket sequences differ in length");
    sources.insert(sources.end(), s->source.begin(), s->source.end());
    targets.push_back(s->target);
  }
  const PaddedBatch padded = batch_pad(targets);
  const std::size_t T = padded.cols - 1;
  std::vector<Token> inputs(B * T), labels(B * T);
  for (std::size_t r = 0; r < B; ++r) {
    for (std::size_t t = 0; t < T; ++t) {
      inputs[r * T + t] = padded.tokens[r * padded.cols + t];
      labels[r * T + t] = padded.tokens[r * padded.cols + t + 1];
    }
  }
  ag::Tensor memory = model.encode(sources, B);
  ag::Tensor logits = model.decode(memory, inputs, B);
  return ag::cross_entropy_masked(logits, labels, Vocabulary::pad());
}

Trainer::Trainer(GhostTransformer& model, TrainConfig cfg)
    : model_(model), cfg_(std::move(cfg)), adam_(model.parameters(), cfg_.adam) {
  if (cfg_.batch_size == 0) throw Error(ErrorCode::InvalidArgument, "batch size must be >= 1");
}

double Trainer::step(std::span<const Sample* const> batch) {
  ag::Tape tape;
  ag::TapeScope scope(tape);
  adam_.zero_grad();
  ag::Tensor loss = batch_loss(model_, batch);
  ag::backward(loss);
  adam_.step();
  return loss.item();
}

std::vector<std::size_t> Trainer::epoch_order(std::size_t n, std::size_t epoch) const {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (cfg_.shuffle) {
    std::mt19937_64 rng(cfg_.seed * 0x9E3779B97F4A7C15ULL + epoch);
    std::shuffle(order.begin(), order.end(), rng);
  }
  return order;
}

const std::vector<double>& Trainer::fit(const std::vector<Sample>& data) {
  validate_dataset(model_, data);
  for (; epoch_ < cfg_.epochs; ) {
    const auto order = epoch_order(data.size(), epoch_);
    double total = 0.0;
    std::size_t batches = 0;
    std::vector<const Sample*> batch;
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
      batch.clear();
      const std::size_t stop = std::min(order.size(), start + cfg_.batch_size);
      for (std::size_t i = start; i < stop; ++i) batch.push_back(&data[order[i]]);
      total += step(batch);
      ++batches;
    }
    ++epoch_;
    history_.push_back(total / static_cast<double>(batches));
    if (cfg_.on_epoch) {
      cfg_.on_epoch({epoch_, history_.back(), adam_.steps(), ag::warmup_lr(cfg_.adam, adam_.steps())});
    }
    if (cfg_.checkpoint_every > 0 && epoch_ % cfg_.checkpoint_every == 0 && !cfg_.checkpoint_path.empty()) {
      save_checkpoint(cfg_.checkpoint_path, model_, snapshot());
    }
  }
  return history_;
}

TrainingSnapshot Trainer::snapshot() const {
  return {epoch_, adam_.steps(), adam_.first_moments(), adam_.second_moments(), history_};
}

void Trainer::restore(const TrainingSnapshot& snap) {
  auto& m = adam_.first_moments();
  auto& v = adam_.second_moments();
  adam_.set_steps(snap.adam_steps);
  epoch_ = snap.epoch;
  history_ = snap.loss_history;
  if (snap.first_moments.empty() && snap.second_moments.empty()) {
    for (auto& x : m) std::fill(x.begin(), x.end(), 0.0);
    for (auto& x : v) std::fill(x.begin(), x.end(), 0.0);
    return;
  }
  if (snap.first_moments.size() != m.size() || snap.second_moments.size() != v.size()) {
    throw Error(ErrorCode::CorruptCheckpoint, "optimizer state does not match model parameters");
  }
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (snap.first_moments[i].size() != m[i].size() || snap.second_moments[i].size() != v[i].size()) {
      throw Error(ErrorCode::CorruptCheckpoint, "optimizer moment shape mismatch");
    }
  }
  m = snap.first_moments;
  v = snap.second_moments;
}

}  // namespace ghost::gt
