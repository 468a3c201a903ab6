#include "ghost/translate/model.hpp"

#include <cmath>
#include <random>

#include "ghost/autograd/ops.hpp"
#include "ghost/error.hpp"

namespace ghost::gt {

using ag::Shape;
using ag::Tensor;

void ModelConfig::validate() const {
  if (n_enc_layers == 0 || n_dec_layers == 0 || d_model == 0 || n_heads == 0 || image_width == 0 ||
      image_height == 0 || max_src_len == 0) {
    throw Error(ErrorCode::InvalidArgument, "model dims must be >= 1");
  }
  if (d_model % n_heads != 0) throw Error(ErrorCode::InvalidArgument, "d_model must be divisible by n_heads");
}

std::vector<double> sinusoidal_table(std::size_t len, std::size_t d) {
  std::vector<double> table(len * d);
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) * rate;
      table[pos * d + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return table;
}

Tensor& GhostTransformer::add_param(const std::string& name, Shape shape) {
  params_.emplace_back(name, Tensor::zeros(std::move(shape), true));
  return params_.back().second;
}

GhostTransformer::GhostTransformer(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t d = cfg_.d_model, ff = cfg_.ff_dim(), V = cfg_.vocab_size();
  params_.reserve(16 + 16 * cfg_.n_enc_layers + 26 * cfg_.n_dec_layers);

  auto linear = [&](const std::string& name, std::size_t in, std::size_t out) {
    Linear l;
    l.w = add_param(name + ".w", {in, out});
    l.b = add_param(name + ".b", {out});
    return l;
  };
  auto norm = [&](const std::string& name) {
    Norm n;
    n.gain = add_param(name + ".gain", {d});
    n.bias = add_param(name + ".bias", {d});
    return n;
  };
  auto attention = [&](const std::string& name) {
    return Attention{linear(name + ".q", d, d), linear(name + ".k", d, d), linear(name + ".v", d, d),
                     linear(name + ".o", d, d)};
  };
  auto ffn = [&](const std::string& name) { return FeedForward{linear(name + ".in", d, ff), linear(name + ".out", ff, d)}; };

  src_embed_ = linear("src_embed", 1, d);
  for (std::size_t i = 0; i < cfg_.n_enc_layers; ++i) {
    const std::string p = "enc" + std::to_string(i);
    EncoderLayer layer;
    layer.norm1 = norm(p + ".norm1");
    layer.self_attn = attention(p + ".self");
    layer.norm2 = norm(p + ".norm2");
    layer.ffn = ffn(p + ".ffn");
    encoder_.push_back(std::move(layer));
  }
  enc_norm_ = norm("enc.norm");
  tgt_embed_ = add_param("tgt_embed", {V, d});
  for (std::size_t i = 0; i < cfg_.n_dec_layers; ++i) {
    const std::string p = "dec" + std::to_string(i);
    DecoderLayer layer;
    layer.norm1 = norm(p + ".norm1");
    layer.self_attn = attention(p + ".self");
    layer.norm2 = norm(p + ".norm2");
    layer.cross_attn = attention(p + ".cross");
    layer.norm3 = norm(p + ".norm3");
    layer.ffn = ffn(p + ".ffn");
    decoder_.push_back(std::move(layer));
  }
  dec_norm_ = norm("dec.norm");
  out_proj_ = linear("out_proj", d, V);

  // Xavier-uniform weights and embeddings, zero biases and shifts, unit gains.
  std::mt19937_64 rng(seed);
  for (auto& [name, t] : params_) {
    auto data = t.data();
    if (name.ends_with(".gain")) {
      std::fill(data.begin(), data.end(), 1.0);
    } else if (name.ends_with(".w") || name == "tgt_embed") {
      const double bound = std::sqrt(6.0 / static_cast<double>(t.dim(0) + t.dim(1)));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (double& v : data) v = u(rng);
    }
  }

  position_rows_ = std::max(cfg_.max_src_len, cfg_.max_tgt_len());
  position_table_ = sinusoidal_table(position_rows_, d);
}

std::vector<Tensor> GhostTransformer::parameters() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& [_, t] : params_) out.push_back(t);
  return out;
}

Tensor& GhostTransformer::parameter(const std::string& name) {
  for (auto& [n, t] : params_) {
    if (n == name) return t;
  }
  throw Error(ErrorCode::InvalidArgument, "no parameter named " + name);
}

std::size_t GhostTransformer::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

Tensor GhostTransformer::positions(std::size_t len) const {
  const std::size_t d = cfg_.d_model;
  return Tensor::from({len, d}, std::vector<double>(position_table_.begin(),
                                                    position_table_.begin() + static_cast<std::ptrdiff_t>(len * d)));
}

Tensor GhostTransformer::attend(const Attention& a, const Tensor& q_in, const Tensor& kv_in, bool causal,
                                ForwardTrace* trace) const {
  const std::size_t B = q_in.dim(0), Tq = q_in.dim(1), Tk = kv_in.dim(1);
  const std::size_t H = cfg_.n_heads, dh = cfg_.d_model / H;

  auto heads = [&](const Linear& l, const Tensor& x, std::size_t T) {
    return ag::transpose(ag::reshape(ag::affine(x, l.w, l.b), {B, T, H, dh}), 1, 2);  // [B,H,T,dh]
  };
  Tensor q = heads(a.q, q_in, Tq);
  Tensor k = heads(a.k, kv_in, Tk);
  Tensor v = heads(a.v, kv_in, Tk);

  Tensor scores = ag::scale(ag::matmul(q, ag::transpose(k, -1, -2)), 1.0 / std::sqrt(static_cast<double>(dh)));
  if (causal) {
    std::vector<std::uint8_t> mask(Tq * Tk, 0);
    for (std::size_t i = 0; i < Tq; ++i)
      for (std::size_t j = i + 1; j < Tk; ++j) mask[i * Tk + j] = 1;
    scores = ag::masked_fill(scores, mask, {Tq, Tk}, ag::kNegInf);
  }
  Tensor probs = ag::softmax(scores);
  if (trace) trace->attention.push_back(probs);
  Tensor ctx = ag::reshape(ag::transpose(ag::matmul(probs, v), 1, 2), {B, Tq, cfg_.d_model});
  return ag::affine(ctx, a.o.w, a.o.b);
}

Tensor GhostTransformer::feed_forward(const FeedForward& f, const Tensor& x) const {
  return ag::affine(ag::relu(ag::affine(x, f.in.w, f.in.b)), f.out.w, f.out.b);
}

Tensor GhostTransformer::encode(std::span<const double> sources, std::size_t batch, ForwardTrace* trace) const {
  if (batch == 0 || sources.size() % batch != 0) throw Error(ErrorCode::ShapeMismatch, "source buffer not divisible by batch");
  const std::size_t S = sources.size() / batch;
  if (S > cfg_.max_src_len) {
    throw Error(ErrorCode::SourceTooLong, std::to_string(S) + " > max_src_len " + std::to_string(cfg_.max_src_len));
  }
  const double emb_scale = std::sqrt(static_cast<double>(cfg_.d_model));
  Tensor src = Tensor::from({batch, S, 1}, std::vector<double>(sources.begin(), sources.end()));
  Tensor x = ag::add(ag::scale(ag::affine(src, src_embed_.w, src_embed_.b), emb_scale), positions(S));
  for (const auto& layer : encoder_) {
    Tensor h = ag::layer_norm(x, layer.norm1.gain, layer.norm1.bias);
    x = ag::add(x, attend(layer.self_attn, h, h, false, trace));
    h = ag::layer_norm(x, layer.norm2.gain, layer.norm2.bias);
    x = ag::add(x, feed_forward(layer.ffn, h));
  }
  return ag::layer_norm(x, enc_norm_.gain, enc_norm_.bias);
}

Tensor GhostTransformer::decode(const Tensor& memory, std::span<const Token> inputs, std::size_t batch,
                                ForwardTrace* trace) const {
  if (batch == 0 || inputs.size() % batch != 0) throw Error(ErrorCode::ShapeMismatch, "token buffer not divisible by batch");
  const std::size_t T = inputs.size() / batch;
  if (T > cfg_.max_tgt_len()) {
    throw Error(ErrorCode::TargetTooLong, std::to_string(T) + " > max_tgt_len " + std::to_string(cfg_.max_tgt_len()));
  }
  const double emb_scale = std::sqrt(static_cast<double>(cfg_.d_model));
  Tensor y = ag::add(ag::scale(ag::embedding(tgt_embed_, inputs, {batch, T}), emb_scale), positions(T));
  for (const auto& layer : decoder_) {
    Tensor h = ag::layer_norm(y, layer.norm1.gain, layer.norm1.bias);
    y = ag::add(y, attend(layer.self_attn, h, h, true, trace));
    h = ag::layer_norm(y, layer.norm2.gain, layer.norm2.bias);
    y = ag::add(y, attend(layer.cross_attn, h, memory, false, trace));
    h = ag::layer_norm(y, layer.norm3.gain, layer.norm3.bias);
    y = ag::add(y, feed_forward(layer.ffn, h));
  }
  y = ag::layer_norm(y, dec_norm_.gain, dec_norm_.bias);
  return ag::affine(y, out_proj_.w, out_proj_.b);
}

DecoderCache GhostTransformer::start_decoding(const Tensor& memory) const {
  const std::size_t B = memory.dim(0), S = memory.dim(1);
  const std::size_t H = cfg_.n_heads, dh = cfg_.d_model / H;
  DecoderCache cache;
  cache.batch = B;
  for (const auto& layer : decoder_) {
    const auto& a = layer.cross_attn;
    cache.cross_k.push_back(ag::transpose(ag::reshape(ag::affine(memory, a.k.w, a.k.b), {B, S, H, dh}), 1, 2));
    cache.cross_v.push_back(ag::transpose(ag::reshape(ag::affine(memory, a.v.w, a.v.b), {B, S, H, dh}), 1, 2));
    cache.self_k.emplace_back();
    cache.self_v.emplace_back();
  }
  return cache;
}

Tensor GhostTransformer::decode_step(DecoderCache& cache, std::span<const Token> tokens) const {
  const std::size_t B = cache.batch, t = cache.length;
  if (tokens.size() != B) throw Error(ErrorCode::ShapeMismatch, "decode_step needs one token per row");
  if (t + 1 > cfg_.max_tgt_len()) throw Error(ErrorCode::TargetTooLong, "decoding past max_tgt_len");
  const std::size_t d = cfg_.d_model, H = cfg_.n_heads, dh = d / H;
  const double emb_scale = std::sqrt(static_cast<double>(d));
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  const Tensor pos = Tensor::from({d}, std::vector<double>(position_table_.begin() + static_cast<std::ptrdiff_t>(t * d),
                                                           position_table_.begin() + static_cast<std::ptrdiff_t>((t + 1) * d)));
  Tensor y = ag::add(ag::scale(ag::embedding(tgt_embed_, tokens, {B, 1}), emb_scale), pos);

  auto heads = [&](const Linear& l, const Tensor& x) {
    return ag::transpose(ag::reshape(ag::affine(x, l.w, l.b), {B, 1, H, dh}), 1, 2);
  };
  auto attend_cached = [&](const Attention& a, const Tensor& q, const Tensor& k, const Tensor& v) {
    Tensor probs = ag::softmax(ag::scale(ag::matmul(q, ag::transpose(k, -1, -2)), inv_sqrt_dh));
    Tensor ctx = ag::reshape(ag::transpose(ag::matmul(probs, v), 1, 2), {B, 1, d});
    return ag::affine(ctx, a.o.w, a.o.b);
  };

  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    const auto& layer = decoder_[i];
    Tensor h = ag::layer_norm(y, layer.norm1.gain, layer.norm1.bias);
    Tensor k = heads(layer.self_attn.k, h), v = heads(layer.self_attn.v, h);
    cache.self_k[i] = t == 0 ? k : ag::concat({cache.self_k[i], k}, 2);
    cache.self_v[i] = t == 0 ? v : ag::concat({cache.self_v[i], v}, 2);
    y = ag::add(y, attend_cached(layer.self_attn, heads(layer.self_attn.q, h), cache.self_k[i], cache.self_v[i]));
    h = ag::layer_norm(y, layer.norm2.gain, layer.norm2.bias);
    y = ag::add(y, attend_cached(layer.cross_attn, heads(layer.cross_attn.q, h), cache.cross_k[i], cache.cross_v[i]));
    h = ag::layer_norm(y, layer.norm3.gain, layer.norm3.bias);
    y = ag::add(y, feed_forward(layer.ffn, h));
  }
  ++cache.length;
  y = ag::layer_norm(y, dec_norm_.gain, dec_norm_.bias);
  return ag::reshape(ag::affine(y, out_proj_.w, out_proj_.b), {B, cfg_.vocab_size()});
}

Tensor GhostTransformer::forward(std::span<const double> source, std::span<const Token> target,
                                 ForwardTrace* trace) const {
  const Vocabulary vocab = cfg_.vocabulary();
  if (target.empty() || target.front() != vocab.bos()) throw Error(ErrorCode::InvalidArgument, "target must start with BOS");
  if (target.size() > cfg_.max_tgt_len()) throw Error(ErrorCode::TargetTooLong, "target longer than max_tgt_len");
  Tensor memory = encode(source, 1, trace);
  const std::size_t T = std::max<std::size_t>(target.size(), 2) - 1;
  Tensor logits = decode(memory, target.first(T), 1, trace);
  return ag::reshape(logits, {T, cfg_.vocab_size()});
}

}  // namespace ghost::gt
