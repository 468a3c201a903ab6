#include "ghost/translate/translate.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ghost/autograd/ops.hpp"
#include "ghost/data/container.hpp"
#include "ghost/error.hpp"

namespace ghost::gt {

std::vector<TokenSeq> greedy_decode(const GhostTransformer& model, std::span<const double> sources, std::size_t batch,
                                    const DecodeOptions& opts) {
  const ModelConfig& cfg = model.config();
  const Vocabulary vocab = cfg.vocabulary();
  const std::size_t V = cfg.vocab_size();
  const std::size_t max_len = std::min(opts.max_len ? opts.max_len : cfg.max_tgt_len(), cfg.max_tgt_len());
  if (max_len < 2) throw Error(ErrorCode::InvalidArgument, "max_len must leave room for BOS and EOS");

  const ag::Tensor memory = model.encode(sources, batch);
  DecoderCache cache = model.start_decoding(memory);
  std::vector<TokenSeq> seqs(batch, TokenSeq{vocab.bos()});
  std::vector<bool> done(batch, false);
  std::vector<Token> step(batch);

  for (std::size_t len = 1; len < max_len; ++len) {
    if (std::all_of(done.begin(), done.end(), [](bool d) { return d; })) break;
    // finished rows keep feeding PAD; their logits are ignored
    for (std::size_t b = 0; b < batch; ++b) step[b] = done[b] ? Vocabulary::pad() : seqs[b].back();
    const ag::Tensor logits = model.decode_step(cache, step);
    const auto data = logits.data();

    for (std::size_t b = 0; b < batch; ++b) {
      if (done[b]) continue;
      const double* row = data.data() + b * V;
      Token best;
      if (opts.monotonic) {
        const Token last = seqs[b].back() == vocab.bos() ? 0 : seqs[b].back();
        best = vocab.eos();
        for (Token t = last + 1; t <= static_cast<Token>(cfg.n_pixels()); ++t) {
          if (row[t] > row[best]) best = t;
        }
      } else {
        best = static_cast<Token>(std::max_element(row, row + V) - row);
      }
      if (!vocab.is_pixel(best) || len + 1 == max_len) {
        // EOS, PAD, BOS, or out of room
        seqs[b].push_back(vocab.eos());
        done[b] = true;
      } else {
        seqs[b].push_back(best);
      }
    }
  }
  for (std::size_t b = 0; b < batch; ++b) {
    if (!done[b]) seqs[b].push_back(vocab.eos());
  }
  return seqs;
}

data::Image translate(const GhostTransformer& model, const optics::BucketSequence& buckets, const DecodeOptions& opts) {
  return translate_batch(model, {buckets}, opts).front();
}

std::vector<data::Image> translate_batch(const GhostTransformer& model,
                                         const std::vector<optics::BucketSequence>& buckets,
                                         const DecodeOptions& opts, std::size_t chunk) {
  const ModelConfig& cfg = model.config();
  std::vector<data::Image> out;
  out.reserve(buckets.size());
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t start = 0; start < buckets.size(); start += chunk) {
    const std::size_t stop = std::min(buckets.size(), start + chunk);
    std::vector<double> sources;
    for (std::size_t i = start; i < stop; ++i) {
      if (buckets[i].size() != cfg.max_src_len) {
        throw Error(ErrorCode::SourceLengthMismatch, "bucket length " + std::to_string(buckets[i].size()) +
                                                         " but model expects " + std::to_string(cfg.max_src_len));
      }
      const auto norm = buckets[i].normalized ? buckets[i] : optics::normalize_buckets(buckets[i]);
      sources.insert(sources.end(), norm.values.begin(), norm.values.end());
    }
    for (const auto& seq : greedy_decode(model, sources, stop - start, opts)) {
      out.push_back(detokenize(seq, cfg.image_width, cfg.image_height));
    }
  }
  return out;
}

namespace {

constexpr std::string_view kManifestMagic = "ghost-checkpoint";

[[noreturn]] void corrupt(const std::string& what) { throw Error(ErrorCode::CorruptCheckpoint, what); }

std::size_t read_size(std::istringstream& is, const std::string& key) {
  std::string tok;
  if (!(is >> tok) || !tok.starts_with(key + "=")) corrupt("expected " + key);
  try {
    return static_cast<std::size_t>(std::stoull(tok.substr(key.size() + 1)));
  } catch (const std::exception&) {
    corrupt("bad value for " + key);
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const GhostTransformer& model, const TrainingSnapshot& training,
                     const std::map<std::string, std::string>& provenance) {
  const ModelConfig& c = model.config();
  const auto& params = model.named_parameters();
  const bool with_moments = !training.first_moments.empty();
  if (with_moments && (training.first_moments.size() != params.size() || training.second_moments.size() != params.size())) {
    throw Error(ErrorCode::InvalidArgument, "optimizer state does not match model parameters");
  }

  std::ostringstream manifest;
  manifest << kManifestMagic << " version=" << kCheckpointVersion << '\n';
  manifest << "config n_enc_layers=" << c.n_enc_layers << " n_dec_layers=" << c.n_dec_layers << " d_model=" << c.d_model
           << " n_heads=" << c.n_heads << " d_ff=" << c.d_ff << " image_width=" << c.image_width
           << " image_height=" << c.image_height << " max_src_len=" << c.max_src_len << '\n';
  manifest << "training epoch=" << training.epoch << " adam_steps=" << training.adam_steps
           << " moments=" << (with_moments ? 1 : 0) << " history=" << training.loss_history.size() << '\n';
  for (const auto& [k, v] : provenance) manifest << "provenance " << k << ' ' << v << '\n';
  manifest << "tensors " << params.size() << '\n';
  for (const auto& [name, t] : params) manifest << "tensor " << name << ' ' << ag::shape_str(t.shape()) << '\n';
  manifest << "end\n";

  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path.string());
  os << manifest.str();
  auto dims_of = [](const ag::Tensor& t) { return std::vector<std::size_t>(t.shape().begin(), t.shape().end()); };
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = params[i];
    data::write_container(os, data::Container::from<double>("param." + name, dims_of(t), t.data()));
    if (with_moments) {
      data::write_container(os, data::Container::from<double>("adam_m." + name, dims_of(t),
                                                              std::span<const double>(training.first_moments[i])));
      data::write_container(os, data::Container::from<double>("adam_v." + name, dims_of(t),
                                                              std::span<const double>(training.second_moments[i])));
    }
  }
  data::write_container(os, data::Container::from<double>("loss_history", {training.loss_history.size()},
                                                          std::span<const double>(training.loss_history)));
  if (!os) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot read " + path.string());

  std::string line;
  if (!std::getline(is, line)) corrupt("empty checkpoint");
  {
    std::istringstream head(line);
    std::string magic, version;
    head >> magic >> version;
    if (magic != kManifestMagic) corrupt("not a checkpoint: " + path.string());
    if (version != "version=" + std::to_string(kCheckpointVersion)) {
      throw Error(ErrorCode::VersionMismatch, "checkpoint " + version + ", expected version=" +
                                                  std::to_string(kCheckpointVersion));
    }
  }

  ModelConfig cfg;
  TrainingSnapshot training;
  std::map<std::string, std::string> provenance;
  bool with_moments = false;
  std::size_t history_len = 0, tensor_count = 0;
  bool saw_config = false;
  while (std::getline(is, line) && line != "end") {
    std::istringstream fields(line);
    std::string kind;
    fields >> kind;
    if (kind == "config") {
      cfg.n_enc_layers = read_size(fields, "n_enc_layers");
      cfg.n_dec_layers = read_size(fields, "n_dec_layers");
      cfg.d_model = read_size(fields, "d_model");
      cfg.n_heads = read_size(fields, "n_heads");
      cfg.d_ff = read_size(fields, "d_ff");
      cfg.image_width = read_size(fields, "image_width");
      cfg.image_height = read_size(fields, "image_height");
      cfg.max_src_len = read_size(fields, "max_src_len");
      saw_config = true;
    } else if (kind == "training") {
      training.epoch = read_size(fields, "epoch");
      training.adam_steps = read_size(fields, "adam_steps");
      with_moments = read_size(fields, "moments") != 0;
      history_len = read_size(fields, "history");
    } else if (kind == "provenance") {
      std::string k, v;
      fields >> k >> v;
      provenance[k] = v;
    } else if (kind == "tensors") {
      fields >> tensor_count;
    } else if (kind != "tensor") {
      corrupt("unknown manifest line '" + line + "'");
    }
  }
  if (line != "end" || !saw_config) corrupt("truncated manifest");

  try {
    cfg.validate();
    GhostTransformer model(cfg, 0);
    if (model.named_parameters().size() != tensor_count) corrupt("tensor count does not match model config");
    for (const auto& [name, handle] : model.named_parameters()) {
      ag::Tensor t = handle;
      auto load_into = [&](const std::string& expect, std::vector<double>& dst) {
        const data::Container c = data::read_container(is);
        if (c.name != expect) corrupt("expected " + expect + ", found " + c.name);
        auto values = c.values<double>();
        if (values.size() != t.numel()) corrupt("size mismatch for " + expect);
        dst = std::move(values);
      };
      std::vector<double> values;
      load_into("param." + name, values);
      std::copy(values.begin(), values.end(), t.data().begin());
      if (with_moments) {
        load_into("adam_m." + name, training.first_moments.emplace_back());
        load_into("adam_v." + name, training.second_moments.emplace_back());
      }
    }
    const data::Container hist = data::read_container(is);
    if (hist.name != "loss_history") corrupt("missing loss history");
    training.loss_history = hist.values<double>();
    if (training.loss_history.size() != history_len) corrupt("loss history length mismatch");
    return LoadedCheckpoint{std::move(model), std::move(training), std::move(provenance)};
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CorruptCheckpoint) throw;
    corrupt(e.what());
  }
}

}  // namespace ghost::gt
