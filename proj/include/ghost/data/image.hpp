#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace ghost::data {

/// Row-major W×H grid of intensities in [0,1]. Used for objects, patterns
/// and reconstructions alike.
class Image {
 public:
  Image() = default;
  Image(std::size_t width, std::size_t height, double fill = 0.0);
  Image(std::size_t width, std::size_t height, std::vector<double> pixels);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return pixels_.size(); }

  double operator()(std::size_t row, std::size_t col) const { return pixels_[row * width_ + col]; }
  double& operator()(std::size_t row, std::size_t col) { return pixels_[row * width_ + col]; }
  double operator[](std::size_t i) const { return pixels_[i]; }
  double& operator[](std::size_t i) { return pixels_[i]; }

  std::span<const double> pixels() const noexcept { return pixels_; }
  std::span<double> pixels() noexcept { return pixels_; }

  bool is_binary() const noexcept;
  bool same_dims(const Image& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<double> pixels_;
};

enum class Split { Train, Test };

struct ImageSet {
  std::vector<Image> images;
  std::optional<std::vector<int>> labels;
  Split split = Split::Train;

  std::size_t size() const noexcept { return images.size(); }
  bool empty() const noexcept { return images.empty(); }

  /// Throws DimensionMismatch if images disagree on dims or labels misalign.
  void validate() const;
  /// First `count` items (clamped), preserving labels and split tag.
  ImageSet head(std::size_t count) const;
};

/// How K is derived from β·N. `Nearest` is the default. `Ceil` reproduces
/// the published pattern counts (52, 154, 21, 31 at N=1024).
enum class PatternRounding { Nearest, Ceil };

class SamplingConfig {
 public:
  SamplingConfig(std::size_t n_pixels, double sampling_ratio,
                 PatternRounding rounding = PatternRounding::Nearest);

  /// Explicit pattern count; β becomes K/N.
  static SamplingConfig with_patterns(std::size_t n_pixels, std::size_t n_patterns);

  std::size_t n_pixels() const noexcept { return n_pixels_; }
  double sampling_ratio() const noexcept { return sampling_ratio_; }
  std::size_t n_patterns() const noexcept { return n_patterns_; }

  /// Side length of the square grid; throws if N is not a perfect square.
  std::size_t side() const;

 private:
  SamplingConfig() = default;
  std::size_t n_pixels_ = 0;
  double sampling_ratio_ = 0.0;
  std::size_t n_patterns_ = 0;
};

}  // namespace ghost::data
