#include "ghost/data/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ghost/error.hpp"

namespace ghost::data {

Image::Image(std::size_t width, std::size_t height, double fill)
    : width_(width), height_(height), pixels_(width * height, fill) {
  if (fill < 0.0 || fill > 1.0) throw Error(ErrorCode::InvalidArgument, "pixel fill outside [0,1]");
}

Image::Image(std::size_t width, std::size_t height, std::vector<double> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (pixels_.size() != width * height) {
    throw Error(ErrorCode::DimensionMismatch,
                "pixel count " + std::to_string(pixels_.size()) + " != " + std::to_string(width) +
                    "x" + std::to_string(height));
  }
  for (double p : pixels_) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "pixel outside [0,1]");
  }
}

bool Image::is_binary() const noexcept {
  return std::ranges::all_of(pixels_, [](double p) { return p == 0.0 || p == 1.0; });
}

void ImageSet::validate() const {
  if (labels && labels->size() != images.size()) {
    throw Error(ErrorCode::DimensionMismatch, "label count != image count");
  }
  for (const auto& img : images) {
    if (!img.same_dims(images.front())) throw Error(ErrorCode::DimensionMismatch, "mixed image dims");
  }
}

ImageSet ImageSet::head(std::size_t count) const {
  count = std::min(count, images.size());
  ImageSet out;
  out.split = split;
  out.images.assign(images.begin(), images.begin() + static_cast<std::ptrdiff_t>(count));
  if (labels) out.labels.emplace(labels->begin(), labels->begin() + static_cast<std::ptrdiff_t>(count));
  return out;
}

SamplingConfig::SamplingConfig(std::size_t n_pixels, double sampling_ratio, PatternRounding rounding)
    : n_pixels_(n_pixels), sampling_ratio_(sampling_ratio) {
  if (n_pixels == 0) throw Error(ErrorCode::InvalidArgument, "n_pixels must be positive");
  if (!(sampling_ratio > 0.0 && sampling_ratio <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "sampling ratio must be in (0,1]");
  }
  const double exact = sampling_ratio * static_cast<double>(n_pixels);
  // 1e-9 slack keeps ceil(0.15*1024) at 154 despite representation error
  const double k = rounding == PatternRounding::Nearest ? std::round(exact) : std::ceil(exact - 1e-9);
  n_patterns_ = static_cast<std::size_t>(k);
  if (n_patterns_ < 1) throw Error(ErrorCode::InvalidArgument, "sampling ratio yields K < 1");
}

SamplingConfig SamplingConfig::with_patterns(std::size_t n_pixels, std::size_t n_patterns) {
  if (n_pixels == 0 || n_patterns == 0) throw Error(ErrorCode::InvalidArgument, "N and K must be positive");
  SamplingConfig cfg;
  cfg.n_pixels_ = n_pixels;
  cfg.n_patterns_ = n_patterns;
  cfg.sampling_ratio_ = static_cast<double>(n_patterns) / static_cast<double>(n_pixels);
  return cfg;
}

std::size_t SamplingConfig::side() const {
  const auto s = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n_pixels_))));
  if (s * s != n_pixels_) throw Error(ErrorCode::InvalidArgument, "n_pixels is not a square");
  return s;
}

}  // namespace ghost::data
