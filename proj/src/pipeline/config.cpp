#include "ghost/pipeline/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "ghost/data/container.hpp"
#include "ghost/error.hpp"

namespace ghost::pipeline {

namespace pt = boost::property_tree;

namespace {

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorCode::ConfigInvalid, msg); }

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || p != end) invalid("bad value '" + text + "' for " + key);
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  invalid("bad boolean '" + text + "' for " + key);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string digest(const std::string& text) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", data::crc32_of(std::as_bytes(std::span(text.data(), text.size()))));
  return buf;
}

}  // namespace

std::string_view speckle_name(SpeckleKind k) {
  switch (k) {
    case SpeckleKind::Rayleigh: return "rayleigh";
    case SpeckleKind::Pink: return "pink";
    case SpeckleKind::File: return "file";
  }
  return "?";
}

ExperimentConfig parse_config(std::istream& is, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    invalid(e.what());
  }

  ExperimentConfig c;
  auto path = [&](const std::string& v) -> std::filesystem::path {
    if (v.empty()) return {};
    const std::filesystem::path p(v);
    return (p.is_absolute() ? p : base_dir / p).lexically_normal();
  };
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto size = [](std::size_t& dst) -> Setter {
    return [&dst](const std::string& k, const std::string& v) { dst = parse_number<std::size_t>(k, v); };
  };
  auto u64 = [](std::uint64_t& dst) -> Setter {
    return [&dst](const std::string& k, const std::string& v) { dst = parse_number<std::uint64_t>(k, v); };
  };
  auto real = [](double& dst) -> Setter {
    return [&dst](const std::string& k, const std::string& v) { dst = parse_number<double>(k, v); };
  };
  auto file = [&](std::filesystem::path& dst) -> Setter {
    return [&dst, path](const std::string&, const std::string& v) { dst = path(v); };
  };

  const std::map<std::string, Setter> keys{
      {"data.train_images", file(c.data.train_images)},
      {"data.train_labels", file(c.data.train_labels)},
      {"data.test_images", file(c.data.test_images)},
      {"data.test_labels", file(c.data.test_labels)},
      {"data.train_count", size(c.data.train_count)},
      {"data.test_count", size(c.data.test_count)},
      {"data.image_size", size(c.data.image_size)},
      {"data.threshold", real(c.data.threshold)},
      {"optics.beta", real(c.optics.beta)},
      {"optics.rounding",
       [&](const std::string& k, const std::string& v) {
         if (v == "nearest") c.optics.rounding = data::PatternRounding::Nearest;
         else if (v == "ceil") c.optics.rounding = data::PatternRounding::Ceil;
         else invalid("bad value '" + v + "' for " + k);
       }},
      {"optics.speckle",
       [&](const std::string& k, const std::string& v) {
         if (v == "rayleigh") c.optics.speckle = SpeckleKind::Rayleigh;
         else if (v == "pink") c.optics.speckle = SpeckleKind::Pink;
         else if (v == "file") c.optics.speckle = SpeckleKind::File;
         else invalid("bad value '" + v + "' for " + k);
       }},
      {"optics.grain", real(c.optics.grain)},
      {"optics.exponent", real(c.optics.exponent)},
      {"optics.pattern_file", file(c.optics.pattern_file)},
      {"optics.noise", real(c.optics.noise)},
      {"model.d_model", size(c.model.d_model)},
      {"model.enc_layers", size(c.model.enc_layers)},
      {"model.dec_layers", size(c.model.dec_layers)},
      {"model.heads", size(c.model.heads)},
      {"model.d_ff", size(c.model.d_ff)},
      {"model.checkpoint", file(c.model.checkpoint)},
      {"train.batch_size", size(c.train.batch_size)},
      {"train.epochs", size(c.train.epochs)},
      {"train.lr", real(c.train.lr)},
      {"train.warmup", size(c.train.warmup)},
      {"train.checkpoint_every", size(c.train.checkpoint_every)},
      {"cs.lambda", real(c.cs.lambda)},
      {"cs.max_iters", size(c.cs.max_iters)},
      {"cs.rel_tol", real(c.cs.rel_tol)},
      {"cs.nonneg", [&](const std::string& k, const std::string& v) { c.cs.nonneg = parse_bool(k, v); }},
      {"decode.monotonic", [&](const std::string& k, const std::string& v) { c.monotonic_decode = parse_bool(k, v); }},
      {"seeds.patterns", u64(c.seeds.patterns)},
      {"seeds.noise", u64(c.seeds.noise)},
      {"seeds.model", u64(c.seeds.model)},
      {"seeds.train", u64(c.seeds.train)},
      {"output.dir", file(c.out_dir)},
      {"output.render_count", size(c.render_count)},
  };

  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) invalid("key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      const auto it = keys.find(full);
      if (it == keys.end()) invalid("unknown key '" + full + "'");
      it->second(full, value.data());
    }
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) invalid("cannot read config " + path.string());
  return parse_config(is, std::filesystem::absolute(path).parent_path());
}

data::SamplingConfig ExperimentConfig::sampling() const {
  const std::size_t n = data.image_size * data.image_size;
  try {
    return data::SamplingConfig(n, optics.beta, optics.rounding);
  } catch (const Error& e) {
    invalid(e.what());
  }
}

gt::ModelConfig ExperimentConfig::model_config() const {
  gt::ModelConfig m;
  m.n_enc_layers = model.enc_layers;
  m.n_dec_layers = model.dec_layers;
  m.d_model = model.d_model;
  m.n_heads = model.heads;
  m.d_ff = model.d_ff;
  m.image_width = data.image_size;
  m.image_height = data.image_size;
  m.max_src_len = sampling().n_patterns();
  return m;
}

gt::TrainConfig ExperimentConfig::train_config() const {
  gt::TrainConfig t;
  t.batch_size = train.batch_size;
  t.epochs = train.epochs;
  t.adam.lr_max = train.lr;
  t.adam.warmup_steps = train.warmup;
  t.seed = seeds.train;
  t.checkpoint_every = train.checkpoint_every;
  return t;
}

void ExperimentConfig::override_seed(std::uint64_t s) {
  seeds = {s, s + 1, s + 2, s + 3};
}

void ExperimentConfig::validate() const {
  auto need = [](const std::filesystem::path& p, const char* what) {
    if (p.empty()) invalid(std::string(what) + " is not set");
    if (!std::filesystem::is_regular_file(p)) invalid(std::string(what) + " not found: " + p.string());
  };
  need(data.train_images, "data.train_images");
  need(data.test_images, "data.test_images");
  if (!data.train_labels.empty()) need(data.train_labels, "data.train_labels");
  if (!data.test_labels.empty()) need(data.test_labels, "data.test_labels");
  if (optics.speckle == SpeckleKind::File) need(optics.pattern_file, "optics.pattern_file");
  if (!model.checkpoint.empty()) need(model.checkpoint, "model.checkpoint");
  if (data.image_size == 0 || data.train_count == 0 || data.test_count == 0) invalid("empty data selection");
  if (!(data.threshold > 0.0 && data.threshold <= 1.0)) invalid("data.threshold must lie in (0,1]");
  if (!(optics.noise >= 0.0)) invalid("optics.noise must be >= 0");
  if (!(optics.beta * double(data.image_size * data.image_size) >= 1.0)) invalid("beta * N must be >= 1");
  (void)sampling();
  if (train.batch_size == 0) invalid("train.batch_size must be positive");
  if (!(train.lr > 0.0)) invalid("train.lr must be positive");
  try {
    model_config().validate();
  } catch (const Error& e) {
    invalid(e.what());
  }
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream os;
  os << "data.image_size=" << data.image_size << '\n'
     << "data.test_count=" << data.test_count << '\n'
     << "data.test_images=" << data.test_images.string() << '\n'
     << "data.test_labels=" << data.test_labels.string() << '\n'
     << "data.threshold=" << fmt(data.threshold) << '\n'
     << "data.train_count=" << data.train_count << '\n'
     << "data.train_images=" << data.train_images.string() << '\n'
     << "data.train_labels=" << data.train_labels.string() << '\n'
     << "optics.beta=" << fmt(optics.beta) << '\n'
     << "optics.exponent=" << fmt(optics.exponent) << '\n'
     << "optics.grain=" << fmt(optics.grain) << '\n'
     << "optics.pattern_file=" << optics.pattern_file.string() << '\n'
     << "optics.rounding=" << (optics.rounding == data::PatternRounding::Ceil ? "ceil" : "nearest") << '\n'
     << "optics.speckle=" << speckle_name(optics.speckle) << '\n'
     << "seeds.patterns=" << seeds.patterns << '\n';
  const std::string optics_part = os.str();
  os << "model.checkpoint=" << model.checkpoint.string() << '\n'
     << "model.d_ff=" << model.d_ff << '\n'
     << "model.d_model=" << model.d_model << '\n'
     << "model.dec_layers=" << model.dec_layers << '\n'
     << "model.enc_layers=" << model.enc_layers << '\n'
     << "model.heads=" << model.heads << '\n'
     << "seeds.model=" << seeds.model << '\n'
     << "seeds.train=" << seeds.train << '\n'
     << "train.batch_size=" << train.batch_size << '\n'
     << "train.lr=" << fmt(train.lr) << '\n'
     << "train.warmup=" << train.warmup << '\n';
  os << "train.epochs=" << train.epochs << '\n'
     << "cs.lambda=" << fmt(cs.lambda) << '\n'
     << "cs.max_iters=" << cs.max_iters << '\n'
     << "cs.nonneg=" << cs.nonneg << '\n'
     << "cs.rel_tol=" << fmt(cs.rel_tol) << '\n'
     << "decode.monotonic=" << monotonic_decode << '\n'
     << "optics.noise=" << fmt(optics.noise) << '\n'
     << "output.render_count=" << render_count << '\n'
     << "seeds.noise=" << seeds.noise << '\n';
  return os.str();
}

std::string ExperimentConfig::hash() const { return digest(canonical()); }

std::string ExperimentConfig::optics_hash() const {
  const std::string all = canonical();
  return digest(all.substr(0, all.find("model.checkpoint=")));
}

std::string ExperimentConfig::model_hash() const {
  const std::string all = canonical();
  return digest(all.substr(0, all.find("train.epochs=")));
}

}  // namespace ghost::pipeline
