#include "ghost/pipeline/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "ghost/data/idx.hpp"
#include "ghost/recon/recon.hpp"
#include "ghost/translate/tokens.hpp"
#include "ghost/translate/translate.hpp"

namespace ghost::pipeline {

namespace fs = std::filesystem;
using metrics::Method;

namespace {

constexpr std::size_t kDecodeChunk = 64;

void say(const RunOptions& opts, const std::string& msg) {
  if (opts.log) opts.log(msg);
}

[[noreturn]] void missing(const fs::path& p) { throw Error(ErrorCode::MissingArtifact, "missing " + p.string()); }

std::map<std::string, std::string> provenance(const ExperimentConfig& cfg) {
  return {{"config_hash", cfg.hash()}, {"optics_hash", cfg.optics_hash()}};
}

void check_optics(const data::Container& c, const ExperimentConfig& cfg, const RunOptions& opts) {
  const std::string found = c.attr_or("optics_hash", "none");
  if (!opts.force && found != cfg.optics_hash()) {
    throw Error(ErrorCode::ProvenanceMismatch, c.name + " was produced under optics " + found + ", config has " +
                                                   cfg.optics_hash() + " (rerun upstream stages or pass --force)");
  }
}

// Runs fn(i) for i in [0, n) on up to `workers` threads; the first exception wins.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = n;
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

data::ImageSet load_dataset(const ExperimentConfig& cfg, data::Split split) {
  const bool train = split == data::Split::Train;
  const auto& images = train ? cfg.data.train_images : cfg.data.test_images;
  const auto& labels = train ? cfg.data.train_labels : cfg.data.test_labels;
  const std::size_t count = train ? cfg.data.train_count : cfg.data.test_count;
  auto raw = data::load_idx(images, labels, split);
  if (raw.size() < count) {
    throw Error(ErrorCode::ConfigInvalid, images.string() + " holds " + std::to_string(raw.size()) +
                                              " images, config asks for " + std::to_string(count));
  }
  return data::preprocess(raw.head(count), cfg.data.image_size, cfg.data.threshold);
}

optics::PatternStack load_patterns(const ExperimentConfig& cfg, const RunOptions& opts) {
  const auto items = load_containers(Layout{cfg.out_dir}.patterns());
  check_optics(items.front(), cfg, opts);
  return optics::PatternStack::from_container(items.front());
}

struct BucketFile {
  std::vector<optics::BucketSequence> sequences;
  data::Container header;  // payload dropped
};

BucketFile load_buckets(const ExperimentConfig& cfg, data::Split split, const RunOptions& opts) {
  auto items = load_containers(Layout{cfg.out_dir}.buckets(split));
  data::Container& c = items.front();
  check_optics(c, cfg, opts);
  if (c.dims.size() != 2) throw Error(ErrorCode::HeaderMismatch, "bucket container must be [n, K]");
  const auto values = c.values<double>();
  const double noise = std::stod(c.attr_or("noise", "0"));
  BucketFile out;
  const std::size_t k = c.dims[1];
  for (std::size_t i = 0; i < c.dims[0]; ++i) {
    out.sequences.push_back({{values.begin() + i * k, values.begin() + (i + 1) * k}, noise, false});
  }
  c.payload.clear();
  out.header = std::move(c);
  return out;
}

data::ImageSet load_objects(const ExperimentConfig& cfg, data::Split split) {
  return images_from_containers(load_containers(Layout{cfg.out_dir}.objects(split)));
}

void require_k(std::size_t found, std::size_t expected, const std::string& what) {
  if (found != expected) {
    throw Error(ErrorCode::IncompatibleArtifacts,
                what + " has K=" + std::to_string(found) + " but the config implies K=" + std::to_string(expected));
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_recon(const ExperimentConfig& cfg, Method m, const std::vector<data::Image>& images, double noise) {
  const Layout layout{cfg.out_dir};
  data::ImageSet set;
  set.images = images;
  set.split = data::Split::Test;
  auto attrs = provenance(cfg);
  attrs["method"] = metrics::method_name(m);
  attrs["noise"] = fmt(noise);
  save_containers(layout.recon(m), images_to_containers("recon", set, attrs));
  const fs::path dir = layout.recon_pgm_dir(m);
  fs::remove_all(dir);
  fs::create_directories(dir);
  for (std::size_t i = 0; i < images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%04zu.pgm", i);
    data::write_pgm(dir / name, images[i]);
  }
}

}  // namespace

fs::path Layout::recon(Method m) const { return root / "recon" / (std::string(metrics::method_name(m)) + ".gc"); }
fs::path Layout::recon_pgm_dir(Method m) const { return root / "recon" / metrics::method_name(m); }
fs::path Layout::report(Method m) const {
  return root / "metrics" / (std::string(metrics::method_name(m)) + ".csv");
}

void save_containers(const fs::path& path, const std::vector<data::Container>& items) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path.string());
  for (const auto& c : items) data::write_container(os, c);
  if (!os) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

std::vector<data::Container> load_containers(const fs::path& path) {
  if (!fs::is_regular_file(path)) missing(path);
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::vector<data::Container> out;
  while (is.peek() != std::char_traits<char>::eof()) out.push_back(data::read_container(is));
  if (out.empty()) throw Error(ErrorCode::HeaderMismatch, path.string() + " holds no containers");
  return out;
}

std::vector<data::Container> images_to_containers(const std::string& name, const data::ImageSet& set,
                                                  const std::map<std::string, std::string>& attrs) {
  if (set.empty()) throw Error(ErrorCode::EmptySet, "no images to store");
  set.validate();
  const auto& first = set.images.front();
  std::vector<double> values;
  values.reserve(set.size() * first.size());
  for (const auto& img : set.images) values.insert(values.end(), img.pixels().begin(), img.pixels().end());
  auto c = data::Container::from<double>(name, {set.size(), first.height(), first.width()},
                                         std::span<const double>(values));
  c.attrs = attrs;
  c.attrs["split"] = Layout::split_tag(set.split);
  std::vector<data::Container> out{std::move(c)};
  if (set.labels) {
    out.push_back(data::Container::from<std::int32_t>("labels", {set.size()}, std::span<const int>(*set.labels)));
  }
  return out;
}

data::ImageSet images_from_containers(const std::vector<data::Container>& items) {
  const auto& c = items.front();
  if (c.dims.size() != 3) throw Error(ErrorCode::HeaderMismatch, c.name + " must be [n, H, W]");
  const auto values = c.values<double>();
  data::ImageSet set;
  set.split = c.attr_or("split", "train") == "test" ? data::Split::Test : data::Split::Train;
  const std::size_t h = c.dims[1], w = c.dims[2];
  for (std::size_t i = 0; i < c.dims[0]; ++i) {
    set.images.emplace_back(w, h, std::vector<double>(values.begin() + i * w * h, values.begin() + (i + 1) * w * h));
  }
  if (items.size() > 1 && items[1].name == "labels") set.labels = items[1].values<std::int32_t>();
  set.validate();
  return set;
}

void cmd_speckles(const ExperimentConfig& cfg, const RunOptions& opts) {
  const auto sampling = cfg.sampling();
  optics::PatternStack stack = [&] {
    switch (cfg.optics.speckle) {
      case SpeckleKind::Rayleigh: return optics::gen_rayleigh_speckles(sampling, cfg.optics.grain, cfg.seeds.patterns);
      case SpeckleKind::Pink: return optics::gen_pink_speckles(sampling, cfg.optics.exponent, cfg.seeds.patterns);
      case SpeckleKind::File: break;
    }
    if (!fs::is_regular_file(cfg.optics.pattern_file)) missing(cfg.optics.pattern_file);
    auto imported = optics::PatternStack::from_container(data::load_container(cfg.optics.pattern_file));
    if (imported.width() != cfg.data.image_size || imported.height() != cfg.data.image_size) {
      throw Error(ErrorCode::IncompatibleArtifacts, "imported patterns do not match the image size");
    }
    require_k(imported.count(), sampling.n_patterns(), cfg.optics.pattern_file.string());
    return imported;
  }();
  auto c = stack.to_container("patterns");
  for (const auto& [k, v] : provenance(cfg)) c.attrs[k] = v;
  save_containers(Layout{cfg.out_dir}.patterns(), {c});
  say(opts, "speckles: " + std::to_string(stack.count()) + " " + std::string(speckle_name(cfg.optics.speckle)) +
                " patterns of " + std::to_string(stack.width()) + "x" + std::to_string(stack.height()));
}

void cmd_simulate(const ExperimentConfig& cfg, const RunOptions& opts) {
  const auto patterns = load_patterns(cfg, opts);
  require_k(patterns.count(), cfg.sampling().n_patterns(), "pattern stack");
  const Layout layout{cfg.out_dir};
  for (auto split : {data::Split::Train, data::Split::Test}) {
    const auto set = load_dataset(cfg, split);
    const bool noisy = split == data::Split::Test && cfg.optics.noise > 0.0;
    std::vector<double> values(set.size() * patterns.count());
    parallel_for(set.size(), opts.workers, [&](std::size_t i) {
      auto b = optics::compute_bucket_signals(patterns, set.images[i]);
      if (noisy) b = optics::add_noise(b, cfg.optics.noise, cfg.seeds.noise + i);
      std::copy(b.values.begin(), b.values.end(), values.begin() + i * patterns.count());
    });
    auto attrs = provenance(cfg);
    save_containers(layout.objects(split), images_to_containers("objects", set, attrs));
    auto c = data::Container::from<double>("buckets", {set.size(), patterns.count()}, std::span<const double>(values),
                                           noisy ? cfg.seeds.noise : 0);
    c.attrs = attrs;
    c.attrs["noise"] = fmt(noisy ? cfg.optics.noise : 0.0);
    c.attrs["split"] = Layout::split_tag(split);
    save_containers(layout.buckets(split), {c});
    say(opts, "simulate: " + std::to_string(set.size()) + " " + Layout::split_tag(split) + " objects" +
                  (noisy ? ", noise " + fmt(cfg.optics.noise) : ""));
  }
}

void cmd_train(const ExperimentConfig& cfg, const RunOptions& opts) {
  if (!cfg.model.checkpoint.empty()) {
    say(opts, "train: using external checkpoint " + cfg.model.checkpoint.string());
    return;
  }
  const Layout layout{cfg.out_dir};
  const auto objects = load_objects(cfg, data::Split::Train);
  const auto buckets = load_buckets(cfg, data::Split::Train, opts);
  const auto model_cfg = cfg.model_config();
  require_k(buckets.header.dims[1], model_cfg.max_src_len, "training buckets");
  if (objects.size() != buckets.sequences.size()) {
    throw Error(ErrorCode::IncompatibleArtifacts, "training objects and buckets differ in count");
  }

  std::vector<gt::Sample> samples;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    try {
      samples.push_back({optics::normalize_buckets(buckets.sequences[i]).values, gt::tokenize_image(objects.images[i])});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ConstantSequence) throw;
      say(opts, "train: skipping object " + std::to_string(i) + " (constant bucket sequence)");
    }
  }

  gt::GhostTransformer fresh(model_cfg, cfg.seeds.model);
  gt::TrainingSnapshot snapshot;
  std::optional<gt::LoadedCheckpoint> resumed;
  if (!opts.force && fs::is_regular_file(layout.checkpoint())) {
    auto loaded = gt::load_checkpoint(layout.checkpoint());
    const auto it = loaded.provenance.find("model_hash");
    if (it != loaded.provenance.end() && it->second == cfg.model_hash() && loaded.model.config() == model_cfg &&
        loaded.training.epoch <= cfg.train.epochs) {
      snapshot = loaded.training;
      resumed.emplace(std::move(loaded));
      say(opts, "train: resuming at epoch " + std::to_string(snapshot.epoch));
    } else {
      say(opts, "train: existing checkpoint is from another configuration, starting over");
    }
  }
  gt::GhostTransformer& model = resumed ? resumed->model : fresh;

  auto prov = provenance(cfg);
  prov["model_hash"] = cfg.model_hash();
  prov["seed"] = std::to_string(cfg.seeds.model);
  const std::size_t every = cfg.train.checkpoint_every;
  auto tc = cfg.train_config();
  tc.checkpoint_every = 0;
  const gt::Trainer* active = nullptr;
  tc.on_epoch = [&](const gt::EpochStats& s) {
    char line[96];
    std::snprintf(line, sizeof line, "train: epoch %zu loss %.4f lr %.2e", s.epoch, s.loss, s.lr);
    say(opts, line);
    if (every > 0 && s.epoch % every == 0) gt::save_checkpoint(layout.checkpoint(), model, active->snapshot(), prov);
  };
  gt::Trainer trainer(model, tc);
  active = &trainer;
  if (resumed) trainer.restore(snapshot);
  const auto& history = trainer.fit(samples);
  gt::save_checkpoint(layout.checkpoint(), model, trainer.snapshot(), prov);

  std::ofstream csv(layout.loss_csv());
  if (!csv) throw Error(ErrorCode::Io, "cannot write " + layout.loss_csv().string());
  csv << "epoch,loss\n";
  for (std::size_t e = 0; e < history.size(); ++e) csv << e + 1 << ',' << fmt(history[e]) << '\n';
}

void cmd_translate(const ExperimentConfig& cfg, const RunOptions& opts) {
  const Layout layout{cfg.out_dir};
  const fs::path ckpt = cfg.model.checkpoint.empty() ? layout.checkpoint() : cfg.model.checkpoint;
  if (!fs::is_regular_file(ckpt)) missing(ckpt);
  const auto buckets = load_buckets(cfg, data::Split::Test, opts);
  const auto loaded = gt::load_checkpoint(ckpt);
  const auto& model = loaded.model;
  require_k(buckets.header.dims[1], model.config().max_src_len, "checkpoint " + ckpt.string() + " (test buckets)");
  if (model.config().image_width != cfg.data.image_size || model.config().image_height != cfg.data.image_size) {
    throw Error(ErrorCode::IncompatibleArtifacts, "checkpoint image size differs from the config");
  }
  const auto it = loaded.provenance.find("optics_hash");
  if (!opts.force && (it == loaded.provenance.end() || it->second != cfg.optics_hash())) {
    throw Error(ErrorCode::ProvenanceMismatch, "checkpoint was trained under different optics (pass --force to use it)");
  }

  gt::DecodeOptions decode;
  decode.monotonic = cfg.monotonic_decode;
  const auto& seqs = buckets.sequences;
  const std::size_t side = cfg.data.image_size;
  std::vector<data::Image> out(seqs.size(), data::Image(side, side, 0.0));
  const std::size_t chunks = (seqs.size() + kDecodeChunk - 1) / kDecodeChunk;
  parallel_for(chunks, opts.workers, [&](std::size_t c) {
    const std::size_t start = c * kDecodeChunk, stop = std::min(seqs.size(), start + kDecodeChunk);
    std::vector<optics::BucketSequence> chunk;
    std::vector<std::size_t> index;
    for (std::size_t i = start; i < stop; ++i) {
      // A constant sequence carries no information; leave the image dark.
      if (std::ranges::adjacent_find(seqs[i].values, std::ranges::not_equal_to{}) == seqs[i].values.end()) continue;
      chunk.push_back(optics::normalize_buckets(seqs[i]));
      index.push_back(i);
    }
    if (chunk.empty()) return;
    const auto images = gt::translate_batch(model, chunk, decode, kDecodeChunk);
    for (std::size_t j = 0; j < index.size(); ++j) out[index[j]] = images[j];
  });
  write_recon(cfg, Method::GT, out, buckets.sequences.front().noise_level);
  say(opts, "translate: " + std::to_string(out.size()) + " images");
}

void cmd_reconstruct(Method method, const ExperimentConfig& cfg, const RunOptions& opts) {
  if (method == Method::GT) {
    cmd_translate(cfg, opts);
    return;
  }
  const auto patterns = load_patterns(cfg, opts);
  const auto buckets = load_buckets(cfg, data::Split::Test, opts);
  require_k(buckets.header.dims[1], patterns.count(), "test buckets");
  const auto& seqs = buckets.sequences;
  std::vector<data::Image> out(seqs.size());
  std::atomic<std::size_t> unconverged{0};
  parallel_for(seqs.size(), opts.workers, [&](std::size_t i) {
    if (method == Method::CGI) {
      out[i] = recon::cgi_reconstruct(patterns, seqs[i]).image;
    } else {
      const auto r = recon::cs_reconstruct(patterns, seqs[i], cfg.cs);
      if (!r.converged) ++unconverged;
      out[i] = r.image;
    }
  });
  write_recon(cfg, method, out, seqs.front().noise_level);
  std::string msg = "reconstruct-" + std::string(metrics::method_name(method)) + ": " + std::to_string(out.size()) + " images";
  if (unconverged > 0) msg += ", " + std::to_string(unconverged.load()) + " hit max_iters";
  say(opts, msg);
}

std::vector<metrics::MetricReport> cmd_evaluate(const ExperimentConfig& cfg, const RunOptions& opts) {
  const Layout layout{cfg.out_dir};
  const auto truth = load_objects(cfg, data::Split::Test);
  std::optional<data::ImageSet> reference;
  if (truth.labels && fs::is_regular_file(layout.objects(data::Split::Train))) {
    reference = load_objects(cfg, data::Split::Train);
    if (!reference->labels) reference.reset();
  }
  std::vector<metrics::MetricReport> reports;
  for (Method m : {Method::CGI, Method::CS, Method::GT}) {
    if (!fs::is_regular_file(layout.recon(m))) continue;
    const auto items = load_containers(layout.recon(m));
    const std::string found = items.front().attr_or("config_hash", "none");
    if (!opts.force && found != cfg.hash()) {
      throw Error(ErrorCode::ProvenanceMismatch, layout.recon(m).string() + " has config " + found + ", expected " +
                                                     cfg.hash() + " (pass --force to evaluate anyway)");
    }
    const auto recons = images_from_containers(items);
    const double noise = std::stod(items.front().attr_or("noise", "0"));
    auto report = metrics::evaluate(m, cfg.optics.beta, noise, recons.images, truth, reference ? &*reference : nullptr);
    fs::create_directories(layout.report(m).parent_path());
    metrics::write_report_csv(layout.report(m), report);
    char line[128];
    std::snprintf(line, sizeof line, "evaluate: %s ssim %.4f mse %.4f exact %.3f", std::string(metrics::method_name(m)).c_str(),
                  report.ssim.mean, report.mse.mean, report.exact_match_rate);
    say(opts, line);
    reports.push_back(std::move(report));
  }
  if (reports.empty()) missing(layout.root / "recon");
  return reports;
}

void cmd_render(const ExperimentConfig& cfg, const RunOptions& opts) {
  const Layout layout{cfg.out_dir};
  const auto truth = load_objects(cfg, data::Split::Test);
  const std::size_t n = std::min(cfg.render_count, truth.size());
  auto head = [n](const std::vector<data::Image>& v) { return std::vector<data::Image>(v.begin(), v.begin() + n); };

  std::vector<std::vector<data::Image>> rows{head(truth.images)};
  std::ofstream bars;
  fs::create_directories(layout.bars().parent_path());
  bars.open(layout.bars());
  if (!bars) throw Error(ErrorCode::Io, "cannot write " + layout.bars().string());
  bars << "method,beta,noise,mse_mean,mse_std,snr_db_mean,snr_db_std,ssim_mean,ssim_std,exact_match_rate,knn_rate\n";
  for (Method m : {Method::CGI, Method::CS, Method::GT}) {
    if (fs::is_regular_file(layout.recon(m))) {
      const auto recons = images_from_containers(load_containers(layout.recon(m)));
      if (recons.size() < n) throw Error(ErrorCode::IncompatibleArtifacts, "too few reconstructions to render");
      rows.push_back(head(recons.images));
    }
    if (fs::is_regular_file(layout.report(m))) {
      const auto r = metrics::read_report_csv(layout.report(m));
      bars << metrics::method_name(m) << ',' << fmt(r.beta) << ',' << fmt(r.noise_level) << ',' << fmt(r.mse.mean) << ','
           << fmt(r.mse.stddev) << ',' << fmt(r.snr_db.mean) << ',' << fmt(r.snr_db.stddev) << ',' << fmt(r.ssim.mean)
           << ',' << fmt(r.ssim.stddev) << ',' << fmt(r.exact_match_rate) << ','
           << (r.knn_rate ? fmt(*r.knn_rate) : std::string()) << '\n';
    }
  }
  data::write_pgm(layout.montage(), data::montage(rows, 1, 0.5));
  say(opts, "render: " + std::to_string(rows.size()) + " rows x " + std::to_string(n) + " columns");
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"speckles",        "simulate",       "train",    "translate",
                                              "reconstruct-cgi", "reconstruct-cs", "evaluate", "render"};
  return names;
}

void run_command(const std::string& name, const ExperimentConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  if (name == "speckles") cmd_speckles(cfg, opts);
  else if (name == "simulate") cmd_simulate(cfg, opts);
  else if (name == "train") cmd_train(cfg, opts);
  else if (name == "translate") cmd_translate(cfg, opts);
  else if (name == "reconstruct-cgi") cmd_reconstruct(Method::CGI, cfg, opts);
  else if (name == "reconstruct-cs") cmd_reconstruct(Method::CS, cfg, opts);
  else if (name == "evaluate") cmd_evaluate(cfg, opts);
  else if (name == "render") cmd_render(cfg, opts);
  else throw Error(ErrorCode::ConfigInvalid, "unknown command '" + name + "'");
}

void run_all(const ExperimentConfig& cfg, const RunOptions& opts) {
  for (const auto& name : command_names()) run_command(name, cfg, opts);
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigInvalid:
    case ErrorCode::InvalidArgument:
      return 2;
    case ErrorCode::MissingArtifact:
    case ErrorCode::IncompatibleArtifacts:
    case ErrorCode::ProvenanceMismatch:
    case ErrorCode::Io:
    case ErrorCode::BadMagic:
    case ErrorCode::TruncatedPayload:
    case ErrorCode::HeaderMismatch:
    case ErrorCode::ChecksumMismatch:
    case ErrorCode::VersionMismatch:
    case ErrorCode::CorruptCheckpoint:
    case ErrorCode::SourceLengthMismatch:
    case ErrorCode::DimensionMismatch:
      return 3;
    default:
      return 4;
  }
}

}  // namespace ghost::pipeline
