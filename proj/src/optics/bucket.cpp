#include "ghost/optics/bucket.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "ghost/error.hpp"

namespace ghost::optics {

BucketSequence compute_bucket_signals(const PatternStack& patterns, const data::Image& object) {
  if (patterns.width() != object.width() || patterns.height() != object.height()) {
    throw Error(ErrorCode::DimensionMismatch, "pattern and object dims differ");
  }
  BucketSequence out;
  out.values.resize(patterns.count());
  const auto obj = object.pixels();
  for (std::size_t i = 0; i < patterns.count(); ++i) {
    const auto p = patterns.pattern(i);
    out.values[i] = std::inner_product(p.begin(), p.end(), obj.begin(), 0.0);
  }
  return out;
}

BucketSequence add_noise(const BucketSequence& buckets, double level, std::uint64_t seed) {
  if (!(level >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise level must be >= 0");
  BucketSequence out = buckets;
  out.noise_level = level;
  if (buckets.values.empty() || level == 0.0) return out;

  const double mean =
      std::accumulate(buckets.values.begin(), buckets.values.end(), 0.0) / static_cast<double>(buckets.size());
  if (mean == 0.0) return out;
  const double offset = level * mean;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  for (double& v : out.values) v += offset * (1.0 + kNoiseRelativeSpread * gauss(rng));
  return out;
}

BucketSequence normalize_buckets(const BucketSequence& buckets) {
  if (buckets.size() < 2) throw Error(ErrorCode::ConstantSequence, "need at least two readings");
  const auto [lo, hi] = std::ranges::minmax(buckets.values);
  if (!(hi > lo)) throw Error(ErrorCode::ConstantSequence, "bucket sequence is constant");
  BucketSequence out = buckets;
  for (double& v : out.values) v = (v - lo) / (hi - lo);
  out.normalized = true;
  return out;
}

}  // namespace ghost::optics
