#include "ghost/optics/speckle.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>

#include "ghost/error.hpp"

namespace ghost::optics {

namespace {

/// In-place inverse 2-D DFT over a reusable buffer. FFTW planning is not
/// thread-safe, so each generator call owns its plan.
class InverseFft2d {
 public:
  InverseFft2d(std::size_t width, std::size_t height)
      : n_(width * height), buf_(fftw_alloc_complex(n_)) {
    plan_ = fftw_plan_dft_2d(static_cast<int>(height), static_cast<int>(width), buf_, buf_, FFTW_BACKWARD,
                             FFTW_ESTIMATE);
  }
  ~InverseFft2d() {
    fftw_destroy_plan(plan_);
    fftw_free(buf_);
  }
  InverseFft2d(const InverseFft2d&) = delete;
  InverseFft2d& operator=(const InverseFft2d&) = delete;

  std::complex<double>* data() { return reinterpret_cast<std::complex<double>*>(buf_); }
  void run() { fftw_execute(plan_); }

 private:
  std::size_t n_;
  fftw_complex* buf_;
  fftw_plan plan_;
};

// Signed frequency index for FFT bin i on an n-point axis.
double freq(std::size_t i, std::size_t n) {
  const auto si = static_cast<double>(i);
  return i < (n + 1) / 2 ? si : si - static_cast<double>(n);
}

}  // namespace

std::string_view kind_name(PatternKind k) {
  switch (k) {
    case PatternKind::Rayleigh: return "rayleigh";
    case PatternKind::Pink: return "pink";
    case PatternKind::Imported: return "imported";
  }
  return "?";
}

PatternKind parse_kind(std::string_view name) {
  for (auto k : {PatternKind::Rayleigh, PatternKind::Pink, PatternKind::Imported}) {
    if (kind_name(k) == name) return k;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown pattern kind '" + std::string(name) + "'");
}

PatternStack::PatternStack(std::size_t width, std::size_t height, std::size_t count, std::vector<double> values,
                           PatternKind kind, std::uint64_t seed, double parameter)
    : width_(width), height_(height), count_(count), values_(std::move(values)), kind_(kind), seed_(seed),
      parameter_(parameter) {
  if (values_.size() != width * height * count) throw Error(ErrorCode::DimensionMismatch, "pattern stack size mismatch");
  for (double v : values_) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::InvalidArgument, "pattern value outside [0,1]");
  }
}

data::Image PatternStack::image(std::size_t i) const {
  auto p = pattern(i);
  return data::Image(width_, height_, std::vector<double>(p.begin(), p.end()));
}

data::Container PatternStack::to_container(const std::string& name) const {
  auto c = data::Container::from<double>(name, {count_, height_, width_}, values_, seed_);
  c.attrs["kind"] = std::string(kind_name(kind_));
  std::ostringstream param;
  param.precision(17);
  param << parameter_;
  c.attrs["parameter"] = param.str();
  return c;
}

PatternStack PatternStack::from_container(const data::Container& c) {
  if (c.dims.size() != 3) throw Error(ErrorCode::DimensionMismatch, "pattern container must have dims [K,H,W]");
  auto kind = PatternKind::Imported;
  double parameter = 0.0;
  if (auto it = c.attrs.find("kind"); it != c.attrs.end()) {
    kind = parse_kind(it->second);
    parameter = std::stod(c.attr_or("parameter", "0"));
  }
  return PatternStack(c.dims[2], c.dims[1], c.dims[0], c.values<double>(), kind, c.seed, parameter);
}

PatternStack gen_rayleigh_speckles(const data::SamplingConfig& cfg, double grain, std::uint64_t seed) {
  if (!(grain >= 1.0)) throw Error(ErrorCode::InvalidArgument, "grain must be >= 1 pixel");
  const std::size_t side = cfg.side();
  const double radius = static_cast<double>(side) / (2.0 * grain);
  if (radius < 1.0) throw Error(ErrorCode::GrainTooLarge, "pupil radius below one frequency bin");

  const std::size_t npix = side * side, k = cfg.n_patterns();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  InverseFft2d fft(side, side);
  std::vector<double> out(npix * k);

  for (std::size_t p = 0; p < k; ++p) {
    auto* field = fft.data();
    for (std::size_t v = 0; v < side; ++v) {
      for (std::size_t u = 0; u < side; ++u) {
        const double fu = freq(u, side), fv = freq(v, side);
        // phase is drawn for every bin so the stream does not depend on the pupil shape
        const double ph = phase(rng);
        field[v * side + u] = std::hypot(fu, fv) <= radius ? std::polar(1.0, ph) : std::complex<double>{};
      }
    }
    fft.run();
    double* dst = out.data() + p * npix;
    double peak = 0.0;
    for (std::size_t i = 0; i < npix; ++i) {
      dst[i] = std::norm(field[i]);
      peak = std::max(peak, dst[i]);
    }
    for (std::size_t i = 0; i < npix; ++i) dst[i] /= peak;
  }
  return PatternStack(side, side, k, std::move(out), PatternKind::Rayleigh, seed, grain);
}

PatternStack gen_pink_speckles(const data::SamplingConfig& cfg, double exponent, std::uint64_t seed) {
  if (!(exponent > 0.0)) throw Error(ErrorCode::InvalidArgument, "exponent must be positive");
  const std::size_t side = cfg.side();
  const std::size_t npix = side * side, k = cfg.n_patterns();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  InverseFft2d fft(side, side);
  std::vector<double> out(npix * k);

  for (std::size_t p = 0; p < k; ++p) {
    auto* field = fft.data();
    for (std::size_t v = 0; v < side; ++v) {
      for (std::size_t u = 0; u < side; ++u) {
        const double re = gauss(rng), im = gauss(rng);
        const double f = std::hypot(freq(u, side), freq(v, side));
        field[v * side + u] = f == 0.0 ? std::complex<double>{} : std::complex<double>(re, im) * std::pow(f, -exponent / 2.0);
      }
    }
    fft.run();
    double* dst = out.data() + p * npix;
    double lo = field[0].real(), hi = lo;
    for (std::size_t i = 0; i < npix; ++i) {
      dst[i] = field[i].real();
      lo = std::min(lo, dst[i]);
      hi = std::max(hi, dst[i]);
    }
    const double span = hi - lo;
    for (std::size_t i = 0; i < npix; ++i) dst[i] = span > 0.0 ? (dst[i] - lo) / span : 0.0;
  }
  return PatternStack(side, side, k, std::move(out), PatternKind::Pink, seed, exponent);
}

}  // namespace ghost::optics
