#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ghost/data/image.hpp"
#include "ghost/optics/bucket.hpp"
#include "ghost/translate/model.hpp"
#include "ghost/translate/trainer.hpp"

namespace ghost::gt {

struct DecodeOptions {
  /// Length cap including BOS and EOS; 0 selects max_tgt_len.
  std::size_t max_len = 0;
  /// Restrict each step's argmax to EOS and ids above the last emitted one.
  bool monotonic = false;
};

/// Greedy autoregressive decoding from BOS for B sources (row-major B×K).
/// Each emitted token is the argmax over the vocabulary; PAD or BOS
/// predictions end the sequence like EOS. Every returned sequence ends in EOS.
std::vector<TokenSeq> greedy_decode(const GhostTransformer& model, std::span<const double> sources, std::size_t batch,
                                    const DecodeOptions& opts = {});

/// Bucket sequences are min-max normalized first if not already. Throws
/// SourceLengthMismatch when K differs from the model's max_src_len.
data::Image translate(const GhostTransformer& model, const optics::BucketSequence& buckets,
                      const DecodeOptions& opts = {});
std::vector<data::Image> translate_batch(const GhostTransformer& model,
                                         const std::vector<optics::BucketSequence>& buckets,
                                         const DecodeOptions& opts = {}, std::size_t chunk = 64);

inline constexpr int kCheckpointVersion = 1;

struct LoadedCheckpoint {
  GhostTransformer model;
  TrainingSnapshot training;
  std::map<std::string, std::string> provenance;
};

/// Single-file bundle: a text manifest (version, config, tensor index, training
/// counters, provenance) terminated by "end", followed by one container per
/// parameter, per Adam moment, and the loss history.
void save_checkpoint(const std::filesystem::path& path, const GhostTransformer& model,
                     const TrainingSnapshot& training = {}, const std::map<std::string, std::string>& provenance = {});
/// Throws VersionMismatch or CorruptCheckpoint.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ghost::gt
