#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ghost/data/container.hpp"
#include "ghost/data/image.hpp"
#include "ghost/error.hpp"
#include "ghost/metrics/metrics.hpp"
#include "ghost/optics/bucket.hpp"
#include "ghost/optics/speckle.hpp"
#include "ghost/pipeline/config.hpp"

namespace ghost::pipeline {

struct RunOptions {
  std::size_t workers = 1;
  /// Skip provenance checks and retrain from scratch.
  bool force = false;
  std::function<void(const std::string&)> log;
};

/// Where each stage reads and writes under the output directory.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path patterns() const { return root / "patterns.gc"; }
  std::filesystem::path objects(data::Split s) const { return root / "objects" / (split_tag(s) + ".gc"); }
  std::filesystem::path buckets(data::Split s) const { return root / "buckets" / (split_tag(s) + ".gc"); }
  std::filesystem::path checkpoint() const { return root / "model.ckpt"; }
  std::filesystem::path loss_csv() const { return root / "loss.csv"; }
  std::filesystem::path recon(metrics::Method m) const;
  std::filesystem::path recon_pgm_dir(metrics::Method m) const;
  std::filesystem::path report(metrics::Method m) const;
  std::filesystem::path montage() const { return root / "render" / "montage.pgm"; }
  std::filesystem::path bars() const { return root / "render" / "bars.csv"; }

  static std::string split_tag(data::Split s) { return s == data::Split::Train ? "train" : "test"; }
};

/// Multi-container files: containers back to back.
void save_containers(const std::filesystem::path& path, const std::vector<data::Container>& items);
/// Throws MissingArtifact when the file does not exist.
std::vector<data::Container> load_containers(const std::filesystem::path& path);

/// Image stack [n, H, W] plus optional labels [n].
std::vector<data::Container> images_to_containers(const std::string& name, const data::ImageSet& set,
                                                  const std::map<std::string, std::string>& attrs);
data::ImageSet images_from_containers(const std::vector<data::Container>& items);

/// Stage outputs: attributes carry config_hash, optics_hash and seeds.
void cmd_speckles(const ExperimentConfig& cfg, const RunOptions& opts = {});
void cmd_simulate(const ExperimentConfig& cfg, const RunOptions& opts = {});
void cmd_train(const ExperimentConfig& cfg, const RunOptions& opts = {});
void cmd_translate(const ExperimentConfig& cfg, const RunOptions& opts = {});
void cmd_reconstruct(metrics::Method method, const ExperimentConfig& cfg, const RunOptions& opts = {});
/// Evaluates every reconstruction present. Throws MissingArtifact if none.
std::vector<metrics::MetricReport> cmd_evaluate(const ExperimentConfig& cfg, const RunOptions& opts = {});
void cmd_render(const ExperimentConfig& cfg, const RunOptions& opts = {});

/// speckles, simulate, train, translate, reconstruct-cgi, reconstruct-cs,
/// evaluate, render.
const std::vector<std::string>& command_names();
void run_command(const std::string& name, const ExperimentConfig& cfg, const RunOptions& opts = {});
/// Runs every command in pipeline order.
void run_all(const ExperimentConfig& cfg, const RunOptions& opts = {});

/// 2 config error, 3 missing or incompatible artifact, 4 numerical failure.
int exit_code(ErrorCode code);

}  // namespace ghost::pipeline
