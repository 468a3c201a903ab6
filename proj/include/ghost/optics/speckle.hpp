#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ghost/data/container.hpp"
#include "ghost/data/image.hpp"

namespace ghost::optics {

enum class PatternKind { Rayleigh, Pink, Imported };

std::string_view kind_name(PatternKind k);
PatternKind parse_kind(std::string_view name);

/// K illumination patterns of identical dims, values in [0,1], stored
/// contiguously pattern-major.
class PatternStack {
 public:
  PatternStack(std::size_t width, std::size_t height, std::size_t count, std::vector<double> values,
               PatternKind kind, std::uint64_t seed, double parameter);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t count() const noexcept { return count_; }
  std::size_t pixels_per_pattern() const noexcept { return width_ * height_; }

  PatternKind kind() const noexcept { return kind_; }
  std::uint64_t seed() const noexcept { return seed_; }
  /// Grain (Rayleigh) or spectral exponent (pink); 0 for imported stacks.
  double parameter() const noexcept { return parameter_; }

  std::span<const double> pattern(std::size_t i) const {
    return std::span<const double>(values_).subspan(i * pixels_per_pattern(), pixels_per_pattern());
  }
  std::span<const double> values() const noexcept { return values_; }
  data::Image image(std::size_t i) const;

  data::Container to_container(const std::string& name = "patterns") const;
  /// Any container with dims [K,H,W] and f64 values in [0,1]; the kind
  /// attribute is honored when present, otherwise the stack is `imported`.
  static PatternStack from_container(const data::Container& c);

  friend bool operator==(const PatternStack&, const PatternStack&) = default;

 private:
  std::size_t width_, height_, count_;
  std::vector<double> values_;
  PatternKind kind_;
  std::uint64_t seed_;
  double parameter_;
};

/// Fully developed speckle: unit-amplitude random-phase pupil of radius
/// width/(2·grain) frequency bins, inverse FFT, squared magnitude, per-pattern
/// max normalization.
PatternStack gen_rayleigh_speckles(const data::SamplingConfig& cfg, double grain, std::uint64_t seed);

/// 1/f^exponent power-spectrum patterns (complex white Gaussian field times
/// f^(-exponent/2), DC removed), real part rescaled per pattern to [0,1].
PatternStack gen_pink_speckles(const data::SamplingConfig& cfg, double exponent, std::uint64_t seed);

}  // namespace ghost::optics
