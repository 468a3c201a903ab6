#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ghost/autograd/tensor.hpp"
#include "ghost/translate/tokens.hpp"

namespace ghost::gt {

struct ModelConfig {
  std::size_t n_enc_layers = 6;
  std::size_t n_dec_layers = 6;
  std::size_t d_model = 512;
  std::size_t n_heads = 8;
  std::size_t d_ff = 0;  // 0 selects 4·d_model
  std::size_t image_width = 32;
  std::size_t image_height = 32;
  std::size_t max_src_len = 52;  // K

  std::size_t ff_dim() const { return d_ff ? d_ff : 4 * d_model; }
  std::size_t n_pixels() const { return image_width * image_height; }
  std::size_t vocab_size() const { return n_pixels() + 3; }
  std::size_t max_tgt_len() const { return n_pixels() + 2; }
  Vocabulary vocabulary() const { return Vocabulary{n_pixels()}; }

  /// Throws InvalidArgument on zero dims or d_model % n_heads != 0.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Optional capture of intermediate attention probabilities, each
/// [B, H, Tq, Tk], in execution order (encoder layers, then per decoder
/// layer self- then cross-attention).
struct ForwardTrace {
  std::vector<ag::Tensor> attention;
};

/// Incremental decoding state. Holds, per decoder layer, the self-attention
/// keys and values of every token consumed so far and the cross-attention
/// keys and values of the encoder memory, each [B, H, T, d/H].
struct DecoderCache {
  std::size_t batch = 0;
  std::size_t length = 0;  // tokens consumed
  std::vector<ag::Tensor> self_k, self_v, cross_k, cross_v;
};

/// Encoder-decoder transformer mapping a bucket sequence to lit-pixel tokens.
///
/// Source: each normalized bucket value passes through a learned 1→d affine
/// map; target tokens use a learned table. Both are scaled by √d and summed
/// with a sinusoidal position table. Blocks use pre-norm residual wiring, and
/// each stack ends with a layer norm.
class GhostTransformer {
 public:
  GhostTransformer(ModelConfig cfg, std::uint64_t seed);
  GhostTransformer(const GhostTransformer&) = delete;
  GhostTransformer& operator=(const GhostTransformer&) = delete;
  GhostTransformer(GhostTransformer&&) = default;
  GhostTransformer& operator=(GhostTransformer&&) = default;

  const ModelConfig& config() const noexcept { return cfg_; }

  /// Parameters in a fixed order with stable names.
  const std::vector<std::pair<std::string, ag::Tensor>>& named_parameters() const noexcept { return params_; }
  std::vector<ag::Tensor> parameters() const;
  ag::Tensor& parameter(const std::string& name);
  std::size_t parameter_count() const;

  /// sources: B rows of length S ≤ max_src_len (row-major). Returns [B, S, d].
  ag::Tensor encode(std::span<const double> sources, std::size_t batch, ForwardTrace* trace = nullptr) const;

  /// Decoder over the input tokens (B×T, row-major) with causal self-attention.
  /// Returns logits [B, T, V].
  ag::Tensor decode(const ag::Tensor& memory, std::span<const Token> inputs, std::size_t batch,
                    ForwardTrace* trace = nullptr) const;

  /// Prepares incremental decoding over an encoded batch [B, S, d].
  DecoderCache start_decoding(const ag::Tensor& memory) const;
  /// Consumes one token per row and returns next-token logits [B, V]. Equal
  /// to the last row of decode() over the same prefix, without recomputing
  /// earlier positions.
  ag::Tensor decode_step(DecoderCache& cache, std::span<const Token> tokens) const;

  /// Teacher-forced logits for a single (source, target) pair: the decoder reads
  /// target[0..T-2] and the logits at row t predict target[t+1]. [T-1, V].
  ag::Tensor forward(std::span<const double> source, std::span<const Token> target,
                     ForwardTrace* trace = nullptr) const;

 private:
  struct Linear {
    ag::Tensor w, b;
  };
  struct Norm {
    ag::Tensor gain, bias;
  };
  struct Attention {
    Linear q, k, v, o;
  };
  struct FeedForward {
    Linear in, out;
  };
  struct EncoderLayer {
    Norm norm1, norm2;
    Attention self_attn;
    FeedForward ffn;
  };
  struct DecoderLayer {
    Norm norm1, norm2, norm3;
    Attention self_attn, cross_attn;
    FeedForward ffn;
  };

  ag::Tensor attend(const Attention& a, const ag::Tensor& q_in, const ag::Tensor& kv_in, bool causal,
                    ForwardTrace* trace) const;
  ag::Tensor feed_forward(const FeedForward& f, const ag::Tensor& x) const;
  ag::Tensor positions(std::size_t len) const;

  ag::Tensor& add_param(const std::string& name, ag::Shape shape);

  ModelConfig cfg_;
  std::vector<std::pair<std::string, ag::Tensor>> params_;
  std::vector<double> position_table_;  // [max_len, d]
  std::size_t position_rows_ = 0;

  Linear src_embed_;
  ag::Tensor tgt_embed_;
  std::vector<EncoderLayer> encoder_;
  Norm enc_norm_;
  std::vector<DecoderLayer> decoder_;
  Norm dec_norm_;
  Linear out_proj_;
};

/// Sinusoidal position encoding table [len, d].
std::vector<double> sinusoidal_table(std::size_t len, std::size_t d);

}  // namespace ghost::gt
