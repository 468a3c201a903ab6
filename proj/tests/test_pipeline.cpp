#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "ghost/error.hpp"
#include "ghost/pipeline/pipeline.hpp"
#include "support.hpp"

using namespace ghost;
namespace fs = std::filesystem;
namespace pl = ghost::pipeline;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

std::string tiny_ini(const std::string& out, double beta = 0.25, const std::string& extra_model = "") {
  const auto d = testing::data_dir().string();
  std::ostringstream os;
  os << "[data]\n"
     << "train_images = " << d << "/mnist5k-train-images-idx3-ubyte.gz\n"
     << "train_labels = " << d << "/mnist5k-train-labels-idx1-ubyte.gz\n"
     << "test_images = " << d << "/mnist5k-test-images-idx3-ubyte.gz\n"
     << "test_labels = " << d << "/mnist5k-test-labels-idx1-ubyte.gz\n"
     << "train_count = 30\ntest_count = 6\nimage_size = 8\n"
     << "[optics]\nbeta = " << beta << "\nspeckle = rayleigh\ngrain = 1\nnoise = 0.05\n"
     << "[model]\nd_model = 16\nenc_layers = 1\ndec_layers = 1\nheads = 2\n" << extra_model
     << "[train]\nbatch_size = 8\nepochs = 2\nwarmup = 5\n"
     << "[cs]\nmax_iters = 100\n"
     << "[seeds]\npatterns = 5\nnoise = 6\nmodel = 7\ntrain = 8\n"
     << "[output]\ndir = " << out << "\nrender_count = 4\n";
  return os.str();
}

pl::ExperimentConfig config_from(const std::string& text, const fs::path& base = "/") {
  std::istringstream is(text);
  return pl::parse_config(is, base);
}

std::map<std::string, std::string> snapshot_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    files[fs::relative(e.path(), root).string()] = {std::istreambuf_iterator<char>(in), {}};
  }
  return files;
}

}  // namespace

TEST_CASE("config parsing and validation") {
  const auto dir = testing::scratch_dir("pipeline-config");
  const auto cfg = config_from(tiny_ini((dir / "out").string()));
  CHECK(cfg.data.image_size == 8);
  CHECK(cfg.sampling().n_patterns() == 16);
  CHECK(cfg.model_config().max_src_len == 16);
  CHECK(cfg.train_config().adam.warmup_steps == 5);
  CHECK(cfg.seeds.noise == 6);
  CHECK_NOTHROW(cfg.validate());

  CHECK(code_of([] { config_from("[optics]\nbetta = 0.1\n"); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([] { config_from("[optics]\nbeta = lots\n"); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([] { config_from("[optics]\nspeckle = laser\n"); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([] { config_from("beta = 0.1\n"); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([] { pl::load_config("/nonexistent/exp.ini"); }) == ErrorCode::ConfigInvalid);

  auto no_data = cfg;
  no_data.data.train_images = "/nonexistent/images.gz";
  CHECK(code_of([&] { no_data.validate(); }) == ErrorCode::ConfigInvalid);
  auto sparse = cfg;
  sparse.optics.beta = 0.01;  // 0.64 patterns
  CHECK(code_of([&] { sparse.validate(); }) == ErrorCode::ConfigInvalid);
  auto heads = cfg;
  heads.model.heads = 3;
  CHECK(code_of([&] { heads.validate(); }) == ErrorCode::ConfigInvalid);

  const auto relative = config_from("[data]\ntrain_images = d/x.gz\n[output]\ndir = o\n", "/base/dir");
  CHECK(relative.data.train_images == fs::path("/base/dir/d/x.gz"));
  CHECK(relative.out_dir == fs::path("/base/dir/o"));
}

TEST_CASE("config hashes track what they cover") {
  const auto cfg = config_from(tiny_ini("/tmp/a"));
  auto moved = cfg;
  moved.out_dir = "/tmp/b";
  CHECK(moved.hash() == cfg.hash());

  auto reseeded = cfg;
  reseeded.override_seed(100);
  CHECK(reseeded.seeds.patterns == 100);
  CHECK(reseeded.seeds.train == 103);
  CHECK(reseeded.hash() != cfg.hash());
  CHECK(reseeded.optics_hash() != cfg.optics_hash());

  auto noisy = cfg;
  noisy.optics.noise = 0.2;
  CHECK(noisy.hash() != cfg.hash());
  CHECK(noisy.optics_hash() == cfg.optics_hash());
  CHECK(noisy.model_hash() == cfg.model_hash());

  auto longer = cfg;
  longer.train.epochs = 3;
  CHECK(longer.hash() != cfg.hash());
  CHECK(longer.model_hash() == cfg.model_hash());
  auto faster = cfg;
  faster.train.lr = 0.01;
  CHECK(faster.model_hash() != cfg.model_hash());
  CHECK(faster.optics_hash() == cfg.optics_hash());
  CHECK(cfg.hash().size() == 8);
}

TEST_CASE("missing upstream artifacts") {
  const auto dir = testing::scratch_dir("pipeline-missing");
  const auto cfg = config_from(tiny_ini((dir / "out").string()));
  for (const char* cmd : {"simulate", "train", "translate", "reconstruct-cgi", "evaluate", "render"}) {
    CHECK(code_of([&] { pl::run_command(cmd, cfg); }) == ErrorCode::MissingArtifact);
  }
  CHECK(code_of([&] { pl::run_command("teleport", cfg); }) == ErrorCode::ConfigInvalid);
  CHECK(pl::exit_code(ErrorCode::MissingArtifact) == 3);
  CHECK(pl::exit_code(ErrorCode::ConfigInvalid) == 2);
  CHECK(pl::exit_code(ErrorCode::IncompatibleArtifacts) == 3);
  CHECK(pl::exit_code(ErrorCode::ConstantSequence) == 4);
}

TEST_CASE("full pipeline is reproducible byte for byte") {
  const auto dir = testing::scratch_dir("pipeline-repro");
  const auto a = config_from(tiny_ini((dir / "a").string()));
  const auto b = config_from(tiny_ini((dir / "b").string()));
  pl::run_all(a);
  pl::RunOptions threads;
  threads.workers = 3;
  pl::run_all(b, threads);

  const auto first = snapshot_tree(dir / "a");
  const auto second = snapshot_tree(dir / "b");
  CHECK(first.size() >= 20);
  REQUIRE(first.size() == second.size());
  for (const auto& [name, bytes] : first) {
    INFO(name);
    REQUIRE(second.count(name) == 1);
    CHECK(second.at(name) == bytes);
  }

  // Rerunning in place leaves every artifact unchanged.
  pl::run_all(a);
  CHECK(snapshot_tree(dir / "a") == first);

  // Recorded provenance and zero-background GT output.
  const auto gt = pl::load_containers(pl::Layout{dir / "a"}.recon(metrics::Method::GT));
  CHECK(gt.front().attr("config_hash") == a.hash());
  CHECK(gt.front().attr("noise") == "0.050000000000000003");
  for (const auto& img : pl::images_from_containers(gt).images) CHECK(img.is_binary());
  CHECK(fs::is_regular_file(pl::Layout{dir / "a"}.montage()));
  std::ifstream loss(pl::Layout{dir / "a"}.loss_csv());
  std::string header, row;
  std::getline(loss, header);
  CHECK(header == "epoch,loss");
  int rows = 0;
  while (std::getline(loss, row)) ++rows;
  CHECK(rows == 2);
}

TEST_CASE("extending the epoch count resumes training bit-exactly") {
  const auto dir = testing::scratch_dir("pipeline-resume");
  const auto straight = config_from(tiny_ini((dir / "straight").string()));
  const auto resumed = config_from(tiny_ini((dir / "resumed").string()));
  for (const char* cmd : {"speckles", "simulate"}) {
    pl::run_command(cmd, straight);
    pl::run_command(cmd, resumed);
  }
  pl::run_command("train", straight);

  auto shorter = resumed;
  shorter.train.epochs = 1;
  pl::run_command("train", shorter);
  std::vector<std::string> log;
  pl::RunOptions opts;
  opts.log = [&](const std::string& line) { log.push_back(line); };
  pl::run_command("train", resumed, opts);
  CHECK(log.front() == "train: resuming at epoch 1");
  CHECK(log.size() == 2);

  const auto a = snapshot_tree(dir / "straight");
  const auto b = snapshot_tree(dir / "resumed");
  CHECK(a.at("loss.csv") == b.at("loss.csv"));
  CHECK(a.at("model.ckpt") == b.at("model.ckpt"));

  // A finished run is left as is; a checkpoint past the target is discarded.
  log.clear();
  pl::run_command("train", resumed, opts);
  CHECK(log.size() == 1);
  CHECK(snapshot_tree(dir / "resumed") == b);
  log.clear();
  pl::run_command("train", shorter, opts);
  CHECK(log.front() == "train: existing checkpoint is from another configuration, starting over");
}

TEST_CASE("incompatible and mismatched artifacts") {
  const auto dir = testing::scratch_dir("pipeline-compat");
  const auto cfg = config_from(tiny_ini((dir / "base").string()));
  for (const char* cmd : {"speckles", "simulate", "train", "reconstruct-cgi"}) pl::run_command(cmd, cfg);

  // A checkpoint trained at K=16 cannot translate K=32 buckets.
  const auto ckpt = pl::Layout{dir / "base"}.checkpoint().string();
  const auto other = config_from(tiny_ini((dir / "other").string(), 0.5, "checkpoint = " + ckpt + "\n"));
  pl::run_command("speckles", other);
  pl::run_command("simulate", other);
  pl::run_command("train", other);  // external checkpoint, nothing to do
  CHECK_FALSE(fs::exists(pl::Layout{dir / "other"}.checkpoint()));
  CHECK(code_of([&] { pl::run_command("translate", other); }) == ErrorCode::IncompatibleArtifacts);
  pl::RunOptions force;
  force.force = true;
  CHECK(code_of([&] { pl::run_command("translate", other, force); }) == ErrorCode::IncompatibleArtifacts);

  // Reconstructions made under one config are refused under another unless forced.
  auto changed = cfg;
  changed.cs.max_iters = 50;
  CHECK(code_of([&] { pl::run_command("evaluate", changed); }) == ErrorCode::ProvenanceMismatch);
  CHECK_NOTHROW(pl::run_command("evaluate", changed, force));

  // Stale patterns are refused by downstream stages.
  auto reseeded = cfg;
  reseeded.seeds.patterns = 99;
  CHECK(code_of([&] { pl::run_command("simulate", reseeded); }) == ErrorCode::ProvenanceMismatch);

  // Same optics, different noise: the clean model translates the noisy buckets.
  auto noisy = config_from(tiny_ini((dir / "noisy").string(), 0.25, "checkpoint = " + ckpt + "\n"));
  noisy.optics.noise = 0.096;
  for (const char* cmd : {"speckles", "simulate", "translate", "evaluate"}) pl::run_command(cmd, noisy);
}

#ifdef GHOST_CLI
TEST_CASE("command-line exit codes") {
  const auto dir = testing::scratch_dir("pipeline-cli");
  {
    std::ofstream(dir / "exp.ini") << tiny_ini((dir / "out").string());
    std::ofstream(dir / "bad.ini") << "[optics]\nbeta = 0.1\ncolour = red\n";
  }
  auto run = [&](const std::string& args) {
    const std::string cmd = std::string(GHOST_CLI) + " " + args + " -q > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  const std::string cfg = "--config " + (dir / "exp.ini").string();
  CHECK(run("translate " + cfg) == 3);
  CHECK(run("speckles --config " + (dir / "bad.ini").string()) == 2);
  CHECK(run("speckles --config " + (dir / "none.ini").string()) == 2);
  CHECK(run("levitate " + cfg) == 2);
  CHECK(run("speckles") == 2);
  CHECK(run("speckles " + cfg) == 0);
  CHECK(fs::is_regular_file(dir / "out" / "patterns.gc"));
  CHECK(run("speckles " + cfg + " --seed 4 --out " + (dir / "seeded").string()) == 0);
  CHECK(fs::is_regular_file(dir / "seeded" / "patterns.gc"));
  CHECK(run("all " + cfg + " --workers 2") == 0);
  CHECK(fs::is_regular_file(dir / "out" / "render" / "bars.csv"));
}
#endif
