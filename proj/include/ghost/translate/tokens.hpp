#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ghost/data/image.hpp"

namespace ghost::gt {

using Token = std::int64_t;
using TokenSeq = std::vector<Token>;

/// PAD = 0, pixel ids 1..N in raster order from the upper-left corner,
/// BOS = N+1, EOS = N+2.
struct Vocabulary {
  std::size_t n_pixels = 0;

  static constexpr Token pad() { return 0; }
  Token bos() const { return static_cast<Token>(n_pixels) + 1; }
  Token eos() const { return static_cast<Token>(n_pixels) + 2; }
  std::size_t size() const { return n_pixels + 3; }
  bool is_pixel(Token t) const { return t >= 1 && t <= static_cast<Token>(n_pixels); }
};

/// BOS, ids of lit pixels (row·W + col + 1) ascending, EOS. Throws NonBinaryImage.
TokenSeq tokenize_image(const data::Image& image);

/// Lights every pixel id present before the first EOS. BOS and PAD are skipped;
/// duplicates and disorder are harmless. Throws TokenOutOfRange.
data::Image detokenize(std::span<const Token> tokens, std::size_t width, std::size_t height);

/// Checks the TokenSeq invariants: BOS first, EOS before any PAD, strictly
/// increasing pixel ids in between, only PAD after EOS.
bool is_valid_sequence(std::span<const Token> tokens, const Vocabulary& vocab);

struct PaddedBatch {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Token> tokens;   // rows × cols, PAD-filled
  std::vector<std::uint8_t> mask;  // 1 at real positions
};

PaddedBatch batch_pad(const std::vector<TokenSeq>& seqs);

}  // namespace ghost::gt
