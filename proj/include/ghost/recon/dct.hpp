#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ghost::recon {

/// Orthonormal type-II 2-D DCT on an n×n row-major grid, computed as C·X·Cᵀ
/// with the orthonormal DCT-II matrix C. The inverse is Cᵀ·Y·C.
class Dct2 {
 public:
  explicit Dct2(std::size_t n);

  std::size_t side() const noexcept { return n_; }

  void forward(std::span<const double> image, std::span<double> coeffs) const;
  void inverse(std::span<const double> coeffs, std::span<double> image) const;

  std::vector<double> forward(std::span<const double> image) const;
  std::vector<double> inverse(std::span<const double> coeffs) const;

 private:
  void apply(std::span<const double> in, std::span<double> out, bool transpose) const;

  std::size_t n_;
  std::vector<double> basis_;  // basis_[k*n + i] = C[k][i]
};

std::vector<double> dct2(std::span<const double> image, std::size_t side);
std::vector<double> idct2(std::span<const double> coeffs, std::size_t side);

}  // namespace ghost::recon
