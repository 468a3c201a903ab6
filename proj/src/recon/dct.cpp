#include "ghost/recon/dct.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "ghost/error.hpp"

namespace ghost::recon {

Dct2::Dct2(std::size_t n) : n_(n), basis_(n * n) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "DCT size must be positive");
  const auto nd = static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double alpha = std::sqrt((k == 0 ? 1.0 : 2.0) / nd);
    for (std::size_t i = 0; i < n; ++i) {
      basis_[k * n + i] = alpha * std::cos(std::numbers::pi * (2.0 * static_cast<double>(i) + 1.0) *
                                           static_cast<double>(k) / (2.0 * nd));
    }
  }
}

// out = M · in · Mᵀ where M = C (forward) or Cᵀ (inverse).
void Dct2::apply(std::span<const double> in, std::span<double> out, bool transpose) const {
  if (in.size() != n_ * n_ || out.size() != n_ * n_) {
    throw Error(ErrorCode::DimensionMismatch, "DCT input is not " + std::to_string(n_) + "x" + std::to_string(n_));
  }
  auto m = [&](std::size_t r, std::size_t c) { return transpose ? basis_[c * n_ + r] : basis_[r * n_ + c]; };
  std::vector<double> tmp(n_ * n_, 0.0);
  // tmp = M · in
  for (std::size_t r = 0; r < n_; ++r)
    for (std::size_t k = 0; k < n_; ++k) {
      const double a = m(r, k);
      for (std::size_t c = 0; c < n_; ++c) tmp[r * n_ + c] += a * in[k * n_ + c];
    }
  // out = tmp · Mᵀ
  for (std::size_t r = 0; r < n_; ++r)
    for (std::size_t c = 0; c < n_; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < n_; ++k) s += tmp[r * n_ + k] * m(c, k);
      out[r * n_ + c] = s;
    }
}

void Dct2::forward(std::span<const double> image, std::span<double> coeffs) const { apply(image, coeffs, false); }
void Dct2::inverse(std::span<const double> coeffs, std::span<double> image) const { apply(coeffs, image, true); }

std::vector<double> Dct2::forward(std::span<const double> image) const {
  std::vector<double> out(n_ * n_);
  forward(image, out);
  return out;
}

std::vector<double> Dct2::inverse(std::span<const double> coeffs) const {
  std::vector<double> out(n_ * n_);
  inverse(coeffs, out);
  return out;
}

std::vector<double> dct2(std::span<const double> image, std::size_t side) { return Dct2(side).forward(image); }
std::vector<double> idct2(std::span<const double> coeffs, std::size_t side) { return Dct2(side).inverse(coeffs); }

}  // namespace ghost::recon
