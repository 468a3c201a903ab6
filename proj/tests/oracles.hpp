#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance gate. Nothing here calls into the library's solvers.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "ghost/optics/speckle.hpp"

namespace testing {

using ghost::optics::PatternKind;
using ghost::optics::PatternStack;

inline PatternStack random_stack(std::size_t side, std::size_t k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(side * side * k);
  for (auto& x : v) x = u(rng);
  return PatternStack(side, side, k, std::move(v), PatternKind::Imported, 0, 0);
}

// Orthonormal DCT-II by its defining sum, used as an oracle.
inline std::vector<double> naive_dct2(const std::vector<double>& x, std::size_t n) {
  std::vector<double> out(n * n, 0.0);
  const double pi = std::numbers::pi;
  auto a = [&](std::size_t k) { return k == 0 ? std::sqrt(1.0 / double(n)) : std::sqrt(2.0 / double(n)); };
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = 0; v < n; ++v) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          s += x[i * n + j] * std::cos(pi * (2.0 * double(i) + 1.0) * double(u) / (2.0 * double(n))) *
               std::cos(pi * (2.0 * double(j) + 1.0) * double(v) / (2.0 * double(n)));
      out[u * n + v] = a(u) * a(v) * s;
    }
  return out;
}

// Independent reference: plain ISTA on an explicit matrix M = A·Dᵀ where D is
// the naive orthonormal DCT matrix.
struct IstaResult {
  std::vector<double> c;
  double objective;
};

inline IstaResult reference_ista(const PatternStack& p, const std::vector<double>& y, double lambda, int iters) {
  const std::size_t n = p.width(), N = n * n, K = p.count();
  // basis[col][pix] = value of the col-th DCT basis image at pix, read off
  // the naive forward map applied to unit images.
  std::vector<std::vector<double>> basis(N, std::vector<double>(N));
  for (std::size_t pix = 0; pix < N; ++pix) {
    std::vector<double> d(N, 0.0);
    d[pix] = 1.0;
    const auto row = naive_dct2(d, n);
    for (std::size_t col = 0; col < N; ++col) basis[col][pix] = row[col];
  }
  std::vector<double> M(K * N);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t col = 0; col < N; ++col) {
      double s = 0.0;
      for (std::size_t pix = 0; pix < N; ++pix) s += p.pattern(k)[pix] * basis[col][pix];
      M[k * N + col] = s;
    }
  // Lipschitz bound from the Frobenius norm (>= spectral norm squared).
  double L = 0.0;
  for (double m : M) L += m * m;
  std::vector<double> c(N, 0.0), r(K);
  auto objective = [&](const std::vector<double>& cc) {
    double fit = 0.0, l1 = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      double s = -y[k];
      for (std::size_t j = 0; j < N; ++j) s += M[k * N + j] * cc[j];
      fit += s * s;
    }
    for (double v : cc) l1 += std::abs(v);
    return 0.5 * fit + lambda * l1;
  };
  for (int it = 0; it < iters; ++it) {
    for (std::size_t k = 0; k < K; ++k) {
      double s = -y[k];
      for (std::size_t j = 0; j < N; ++j) s += M[k * N + j] * c[j];
      r[k] = s;
    }
    for (std::size_t j = 0; j < N; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += M[k * N + j] * r[k];
      const double v = c[j] - s / L, t = lambda / L;
      c[j] = v > t ? v - t : (v < -t ? v + t : 0.0);
    }
  }
  return {c, objective(c)};
}


}  // namespace testing
