#pragma once

#include <cstddef>
#include <vector>

#include "ghost/data/image.hpp"
#include "ghost/optics/bucket.hpp"
#include "ghost/optics/speckle.hpp"

namespace ghost::recon {

struct CgiResult {
  data::Image image;        // raw field min-max scaled to [0,1]
  std::vector<double> raw;  // covariance field, row-major
};

/// Correlation ghost image: per-pixel sample covariance between the bucket
/// readings and the pattern values, (1/K)·Σ (I_i − Ī)(P_i − P̄).
CgiResult cgi_reconstruct(const optics::PatternStack& patterns, const optics::BucketSequence& buckets);

/// Min-max scale to [0,1]; a constant field maps to all zeros.
data::Image to_display(const std::vector<double>& field, std::size_t width, std::size_t height);

struct CsConfig {
  /// Sparsity weight; a non-positive value selects 0.01·‖Bᵀy‖∞ where B is the
  /// measurement operator lifted into the DCT basis.
  double lambda = 0.0;
  std::size_t max_iters = 500;
  double rel_tol = 1e-6;
  bool nonneg = true;
};

struct CsResult {
  data::Image image;
  std::vector<double> coefficients;
  std::vector<double> raw;  // idct2(coefficients) before clamping
  std::vector<double> objective_trace;  // accepted objective per iteration, trace[0] at c = 0
  std::size_t iterations = 0;
  std::size_t restarts = 0;
  double objective = 0.0;
  double lambda = 0.0;
  double lipschitz = 0.0;
  bool converged = false;  // false means max_iters was hit (DidNotConverge)
};

/// Solves min_c ½‖A·idct2(c) − y‖² + λ‖c‖₁ by FISTA with objective-based
/// momentum restart. Steps that would raise the objective are rejected and
/// replaced by a plain proximal-gradient step, so the trace never increases.
CsResult cs_reconstruct(const optics::PatternStack& patterns, const optics::BucketSequence& buckets,
                        const CsConfig& cfg = {});

/// ½‖Ax − y‖² + λ‖c‖₁ for x = idct2(c).
double cs_objective(const optics::PatternStack& patterns, const optics::BucketSequence& buckets,
                    const std::vector<double>& coefficients, double lambda);

}  // namespace ghost::recon
