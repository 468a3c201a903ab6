#include "ghost/recon/recon.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ghost/error.hpp"
#include "ghost/recon/dct.hpp"

namespace ghost::recon {

namespace {

void check_aligned(const optics::PatternStack& patterns, const optics::BucketSequence& buckets) {
  if (patterns.count() != buckets.size()) {
    throw Error(ErrorCode::DimensionMismatch, "pattern count " + std::to_string(patterns.count()) +
                                                  " != bucket count " + std::to_string(buckets.size()));
  }
  if (patterns.count() == 0) throw Error(ErrorCode::DimensionMismatch, "no patterns");
}

double norm2(const std::vector<double>& v) { return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)); }

/// Measurement operator in the DCT domain: B·c = A·idct2(c), Bᵀ·r = dct2(Aᵀ·r).
class LiftedOperator {
 public:
  explicit LiftedOperator(const optics::PatternStack& patterns)
      : patterns_(patterns), dct_(patterns.width()), npix_(patterns.pixels_per_pattern()) {
    if (patterns.width() != patterns.height()) throw Error(ErrorCode::DimensionMismatch, "CS needs square patterns");
  }

  std::size_t rows() const { return patterns_.count(); }
  std::size_t cols() const { return npix_; }

  std::vector<double> apply(const std::vector<double>& coeffs) const {
    const auto x = dct_.inverse(coeffs);
    std::vector<double> out(rows());
    for (std::size_t i = 0; i < rows(); ++i) {
      const auto p = patterns_.pattern(i);
      out[i] = std::inner_product(p.begin(), p.end(), x.begin(), 0.0);
    }
    return out;
  }

  std::vector<double> adjoint(const std::vector<double>& r) const {
    std::vector<double> x(npix_, 0.0);
    for (std::size_t i = 0; i < rows(); ++i) {
      const auto p = patterns_.pattern(i);
      for (std::size_t j = 0; j < npix_; ++j) x[j] += r[i] * p[j];
    }
    return dct_.forward(x);
  }

  const Dct2& basis() const { return dct_; }

 private:
  const optics::PatternStack& patterns_;
  Dct2 dct_;
  std::size_t npix_;
};

double objective(const LiftedOperator& op, const std::vector<double>& y, const std::vector<double>& c, double lambda) {
  auto r = op.apply(c);
  double fit = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) fit += (r[i] - y[i]) * (r[i] - y[i]);
  double l1 = 0.0;
  for (double v : c) l1 += std::abs(v);
  return 0.5 * fit + lambda * l1;
}

double power_iteration(const LiftedOperator& op) {
  std::mt19937_64 rng(0x5eedULL);
  std::normal_distribution<double> g;
  std::vector<double> v(op.cols());
  for (double& x : v) x = g(rng);
  double est = 0.0;
  for (int it = 0; it < 1000; ++it) {
    const double n = norm2(v);
    for (double& x : v) x /= n;
    auto w = op.adjoint(op.apply(v));
    const double next = std::inner_product(v.begin(), v.end(), w.begin(), 0.0);
    v = std::move(w);
    if (it > 10 && std::abs(next - est) <= 1e-12 * std::abs(next)) {
      est = next;
      break;
    }
    est = next;
  }
  return est;
}

double soft(double v, double t) { return v > t ? v - t : (v < -t ? v + t : 0.0); }

}  // namespace

data::Image to_display(const std::vector<double>& field, std::size_t width, std::size_t height) {
  const auto [lo, hi] = std::ranges::minmax(field);
  std::vector<double> px(field.size(), 0.0);
  if (hi > lo) {
    for (std::size_t i = 0; i < field.size(); ++i) px[i] = (field[i] - lo) / (hi - lo);
  }
  return data::Image(width, height, std::move(px));
}

CgiResult cgi_reconstruct(const optics::PatternStack& patterns, const optics::BucketSequence& buckets) {
  check_aligned(patterns, buckets);
  const std::size_t k = patterns.count(), npix = patterns.pixels_per_pattern();
  const double kd = static_cast<double>(k);

  const double mean_i = std::accumulate(buckets.values.begin(), buckets.values.end(), 0.0) / kd;
  std::vector<double> mean_p(npix, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    const auto p = patterns.pattern(i);
    for (std::size_t j = 0; j < npix; ++j) mean_p[j] += p[j];
  }
  for (double& m : mean_p) m /= kd;

  std::vector<double> raw(npix, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    const double di = buckets.values[i] - mean_i;
    const auto p = patterns.pattern(i);
    for (std::size_t j = 0; j < npix; ++j) raw[j] += di * (p[j] - mean_p[j]);
  }
  for (double& r : raw) r /= kd;

  return {to_display(raw, patterns.width(), patterns.height()), std::move(raw)};
}

double cs_objective(const optics::PatternStack& patterns, const optics::BucketSequence& buckets,
                    const std::vector<double>& coefficients, double lambda) {
  check_aligned(patterns, buckets);
  return objective(LiftedOperator(patterns), buckets.values, coefficients, lambda);
}

CsResult cs_reconstruct(const optics::PatternStack& patterns, const optics::BucketSequence& buckets,
                        const CsConfig& cfg) {
  check_aligned(patterns, buckets);
  if (cfg.max_iters < 1) throw Error(ErrorCode::InvalidArgument, "max_iters must be >= 1");
  if (!(cfg.rel_tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "rel_tol must be positive");

  const LiftedOperator op(patterns);
  const auto& y = buckets.values;

  CsResult res;
  res.lambda = cfg.lambda;
  if (!(res.lambda > 0.0)) {
    const auto aty = op.adjoint(y);
    double peak = 0.0;
    for (double v : aty) peak = std::max(peak, std::abs(v));
    res.lambda = peak > 0.0 ? 0.01 * peak : 1e-12;
  }
  const double lambda = res.lambda;
  res.lipschitz = 1.01 * power_iteration(op);
  const double L = res.lipschitz > 0.0 ? res.lipschitz : 1.0;

  std::vector<double> x(op.cols(), 0.0), z = x, x_new(op.cols());
  double t = 1.0;
  double f = objective(op, y, x, lambda);
  res.objective_trace.push_back(f);
  bool restarted_last = false;

  for (res.iterations = 1; res.iterations <= cfg.max_iters; ++res.iterations) {
    auto r = op.apply(z);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= y[i];
    const auto grad = op.adjoint(r);
    for (std::size_t j = 0; j < x_new.size(); ++j) x_new[j] = soft(z[j] - grad[j] / L, lambda / L);
    const double f_new = objective(op, y, x_new, lambda);

    if (f_new > f) {
      res.objective_trace.push_back(f);
      if (restarted_last) {
        // even the plain proximal step cannot descend: x is stationary to rounding
        res.converged = true;
        break;
      }
      ++res.restarts;
      restarted_last = true;
      t = 1.0;
      z = x;
      continue;
    }
    restarted_last = false;

    const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    double diff = 0.0, size = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double d = x_new[j] - x[j];
      z[j] = x_new[j] + ((t - 1.0) / t_new) * d;
      diff += d * d;
      size += x_new[j] * x_new[j];
    }
    x.swap(x_new);
    t = t_new;
    f = f_new;
    res.objective_trace.push_back(f);
    if (std::sqrt(diff) <= cfg.rel_tol * std::max(std::sqrt(size), 1e-300)) {
      res.converged = true;
      break;
    }
  }
  res.iterations = std::min(res.iterations, cfg.max_iters);

  res.objective = f;
  res.raw = op.basis().inverse(x);
  res.coefficients = std::move(x);
  if (cfg.nonneg) {
    std::vector<double> px(res.raw.size());
    for (std::size_t j = 0; j < px.size(); ++j) px[j] = std::clamp(res.raw[j], 0.0, 1.0);
    res.image = data::Image(patterns.width(), patterns.height(), std::move(px));
  } else {
    res.image = to_display(res.raw, patterns.width(), patterns.height());
  }
  return res;
}

}  // namespace ghost::recon
