// ghostt: ghost-translation pipeline driver.
//
//   ghostt <command> --config exp.ini [--seed N] [--out DIR] [--workers N] [--force]
//
// Commands run one stage each; `all` runs them in order.

#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "ghost/error.hpp"
#include "ghost/pipeline/pipeline.hpp"

namespace pl = ghost::pipeline;

int main(int argc, char** argv) {
  CLI::App app{"Ghost translation: simulate single-pixel imaging and reconstruct by CGI, CS or a transformer"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::size_t workers = 1;
  bool force = false;
  bool quiet = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Experiment INI file")->required();
    sub->add_option("--seed", seed, "Override every stage seed (patterns s, noise s+1, model s+2, train s+3)");
    sub->add_option("--out", out_dir, "Output directory (overrides output.dir)");
    sub->add_option("--workers", workers, "Worker threads for per-image work")->check(CLI::PositiveNumber);
    sub->add_flag("--force", force, "Ignore provenance mismatches; retrain from scratch");
    sub->add_flag("-q,--quiet", quiet, "Suppress progress lines");
  };
  const std::pair<const char*, const char*> commands[] = {
      {"speckles", "Generate or import the illumination pattern stack"},
      {"simulate", "Compute bucket signals for the train and test objects"},
      {"train", "Train the transformer on the training buckets"},
      {"translate", "Reconstruct test objects with the trained transformer"},
      {"reconstruct-cgi", "Reconstruct test objects by correlation"},
      {"reconstruct-cs", "Reconstruct test objects by compressed sensing"},
      {"evaluate", "Score every reconstruction against the test objects"},
      {"render", "Write the comparison montage and bar-chart data"},
      {"all", "Run every stage in order"},
  };
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    auto cfg = pl::load_config(config_path);
    if (seed) cfg.override_seed(*seed);
    if (out_dir) cfg.out_dir = *out_dir;
    pl::RunOptions opts;
    opts.workers = workers;
    opts.force = force;
    if (!quiet) opts.log = [](const std::string& line) { std::cerr << line << '\n'; };
    if (command == "all") {
      pl::run_all(cfg, opts);
    } else {
      pl::run_command(command, cfg, opts);
    }
  } catch (const ghost::Error& e) {
    std::cerr << "ghostt " << command << ": " << e.what() << '\n';
    return pl::exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "ghostt " << command << ": " << e.what() << '\n';
    return 4;
  }
  return 0;
}
