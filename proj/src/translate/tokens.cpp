#include "ghost/translate/tokens.hpp"

#include <algorithm>
#include <string>

#include "ghost/error.hpp"

namespace ghost::gt {

TokenSeq tokenize_image(const data::Image& image) {
  if (!image.is_binary()) throw Error(ErrorCode::NonBinaryImage, "tokenize needs a binary image");
  const Vocabulary vocab{image.size()};
  TokenSeq seq{vocab.bos()};
  for (std::size_t i = 0; i < image.size(); ++i) {
    if (image[i] == 1.0) seq.push_back(static_cast<Token>(i) + 1);
  }
  seq.push_back(vocab.eos());
  return seq;
}

data::Image detokenize(std::span<const Token> tokens, std::size_t width, std::size_t height) {
  const Vocabulary vocab{width * height};
  data::Image img(width, height, 0.0);
  for (Token t : tokens) {
    if (t == vocab.eos()) break;
    if (t == Vocabulary::pad() || t == vocab.bos()) continue;
    if (!vocab.is_pixel(t)) throw Error(ErrorCode::TokenOutOfRange, "token " + std::to_string(t) + " outside vocabulary");
    img[static_cast<std::size_t>(t - 1)] = 1.0;
  }
  return img;
}

bool is_valid_sequence(std::span<const Token> tokens, const Vocabulary& vocab) {
  if (tokens.size() < 2 || tokens.front() != vocab.bos()) return false;
  Token last = 0;
  std::size_t i = 1;
  for (; i < tokens.size() && tokens[i] != vocab.eos(); ++i) {
    if (!vocab.is_pixel(tokens[i]) || tokens[i] <= last) return false;
    last = tokens[i];
  }
  if (i == tokens.size()) return false;
  return std::all_of(tokens.begin() + static_cast<std::ptrdiff_t>(i) + 1, tokens.end(),
                     [](Token t) { return t == Vocabulary::pad(); });
}

PaddedBatch batch_pad(const std::vector<TokenSeq>& seqs) {
  PaddedBatch b;
  b.rows = seqs.size();
  for (const auto& s : seqs) b.cols = std::max(b.cols, s.size());
  b.tokens.assign(b.rows * b.cols, Vocabulary::pad());
  b.mask.assign(b.rows * b.cols, 0);
  for (std::size_t r = 0; r < b.rows; ++r) {
    std::copy(seqs[r].begin(), seqs[r].end(), b.tokens.begin() + static_cast<std::ptrdiff_t>(r * b.cols));
    std::fill_n(b.mask.begin() + static_cast<std::ptrdiff_t>(r * b.cols), seqs[r].size(), 1);
  }
  return b;
}

}  // namespace ghost::gt
