#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "ghost/data/image.hpp"
#include "ghost/recon/recon.hpp"
#include "ghost/translate/model.hpp"
#include "ghost/translate/trainer.hpp"

namespace ghost::pipeline {

enum class SpeckleKind { Rayleigh, Pink, File };

/// One experiment = one INI file. Relative paths resolve against the file's
/// directory. Every key has a default, unknown keys are rejected.
struct ExperimentConfig {
  struct Data {
    std::filesystem::path train_images, train_labels, test_images, test_labels;
    std::size_t train_count = 2000;
    std::size_t test_count = 100;
    std::size_t image_size = 16;
    double threshold = 0.5;
  } data;

  struct Optics {
    double beta = 0.15;
    data::PatternRounding rounding = data::PatternRounding::Nearest;
    SpeckleKind speckle = SpeckleKind::Rayleigh;
    double grain = 2.0;
    double exponent = 1.0;
    std::filesystem::path pattern_file;
    double noise = 0.0;  // applied to the test buckets only
  } optics;

  struct Model {
    std::size_t d_model = 128;
    std::size_t enc_layers = 2;
    std::size_t dec_layers = 2;
    std::size_t heads = 4;
    std::size_t d_ff = 0;
    /// Reuse a checkpoint trained elsewhere instead of <out>/model.ckpt.
    std::filesystem::path checkpoint;
  } model;

  struct Train {
    std::size_t batch_size = 32;
    std::size_t epochs = 100;
    double lr = 1e-3;
    std::size_t warmup = 500;
    std::size_t checkpoint_every = 1;
  } train;

  recon::CsConfig cs;
  bool monotonic_decode = false;

  struct Seeds {
    std::uint64_t patterns = 7;
    std::uint64_t noise = 11;
    std::uint64_t model = 1;
    std::uint64_t train = 3;
  } seeds;

  std::filesystem::path out_dir = "out";
  std::size_t render_count = 10;

  data::SamplingConfig sampling() const;
  gt::ModelConfig model_config() const;
  gt::TrainConfig train_config() const;

  /// Sets every stage seed from one value (patterns s, noise s+1, model s+2, train s+3).
  void override_seed(std::uint64_t s);

  /// Throws ConfigInvalid: unreadable dataset paths, β·N < 1, bad model dims.
  void validate() const;

  /// Key=value dump of every setting that influences an artifact, grouped by
  /// the stage that first reads it.
  /// Output directory and worker count are excluded.
  std::string canonical() const;
  /// 8-hex digest of canonical().
  std::string hash() const;
  /// Digest of the settings that determine the pattern stack and the
  /// training set, shared by every artifact that must agree on K.
  std::string optics_hash() const;
  /// Digest of the settings that determine a trained model apart from the
  /// epoch count, so a longer run can resume a shorter one.
  std::string model_hash() const;
};

/// Parses INI text; relative paths resolve against base_dir.
ExperimentConfig parse_config(std::istream& is, const std::filesystem::path& base_dir);
/// Throws ConfigInvalid when the file is missing or malformed.
ExperimentConfig load_config(const std::filesystem::path& path);

std::string_view speckle_name(SpeckleKind k);

}  // namespace ghost::pipeline
