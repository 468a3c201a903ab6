#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ghost/data/image.hpp"
#include "ghost/optics/speckle.hpp"

namespace ghost::optics {

struct BucketSequence {
  std::vector<double> values;
  double noise_level = 0.0;
  bool normalized = false;

  std::size_t size() const noexcept { return values.size(); }
  friend bool operator==(const BucketSequence&, const BucketSequence&) = default;
};

/// values[i] = sum over pixels of P_i · O (unit pixel area).
BucketSequence compute_bucket_signals(const PatternStack& patterns, const data::Image& object);

/// Background-light model: each reading gains mu·(1 + 0.25·g) with g ~ N(0,1)
/// and mu = level · mean(values). A zero-mean sequence is returned unchanged.
BucketSequence add_noise(const BucketSequence& buckets, double level, std::uint64_t seed);

/// Affine map of the sequence onto [0,1]. Throws ConstantSequence when max == min.
BucketSequence normalize_buckets(const BucketSequence& buckets);

inline constexpr double kNoiseRelativeSpread = 0.25;

}  // namespace ghost::optics
