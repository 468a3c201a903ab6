#include "ghost/metrics/metrics.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "ghost/error.hpp"

namespace ghost::metrics {

namespace {

void check_dims(const data::Image& a, const data::Image& b) {
  if (!a.same_dims(b)) throw Error(ErrorCode::DimensionMismatch, "images differ in dims");
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= n;
  for (double v : values) s.stddev += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(s.stddev / n);
  return s;
}

double l1_distance(const data::Image& a, const data::Image& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return d;
}

}  // namespace

double mse(const data::Image& recon, const data::Image& truth) {
  check_dims(recon, truth);
  double s = 0.0;
  for (std::size_t i = 0; i < recon.size(); ++i) s += (recon[i] - truth[i]) * (recon[i] - truth[i]);
  return s / static_cast<double>(recon.size());
}

Snr snr(const data::Image& recon, const data::Image& truth) {
  check_dims(recon, truth);
  double signal = 0.0, error = 0.0;
  for (std::size_t i = 0; i < recon.size(); ++i) {
    signal += recon[i];
    error += std::abs(recon[i] - truth[i]);
  }
  if (error == 0.0) return {kSnrCapDb, true};
  if (!(signal > 0.0)) throw Error(ErrorCode::ZeroSignal, "reconstruction has no signal");
  return {10.0 * std::log10(signal / error), false};
}

double ssim(const data::Image& a, const data::Image& b) {
  check_dims(a, b);
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double va = 0.0, vb = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
    cov += (a[i] - ma) * (b[i] - mb);
  }
  va /= n;
  vb /= n;
  cov /= n;
  return ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

std::size_t nearest_neighbor(const data::Image& query, const data::ImageSet& reference) {
  if (reference.empty()) throw Error(ErrorCode::EmptySet, "empty reference set");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < reference.size(); ++i) {
    check_dims(query, reference.images[i]);
    const double d = l1_distance(query, reference.images[i]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

Accuracy accuracy(const std::vector<data::Image>& recons, const data::ImageSet& truth,
                  const data::ImageSet* reference) {
  if (recons.size() != truth.size()) throw Error(ErrorCode::DimensionMismatch, "reconstruction count != truth count");
  Accuracy acc;
  if (recons.empty()) return acc;
  std::size_t exact = 0;
  for (std::size_t i = 0; i < recons.size(); ++i) exact += recons[i] == truth.images[i];
  acc.exact_match_rate = static_cast<double>(exact) / static_cast<double>(recons.size());

  if (reference) {
    if (!truth.labels || !reference->labels) throw Error(ErrorCode::MissingLabels, "k-NN accuracy needs labels");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < recons.size(); ++i) {
      correct += (*reference->labels)[nearest_neighbor(recons[i], *reference)] == (*truth.labels)[i];
    }
    acc.knn_rate = static_cast<double>(correct) / static_cast<double>(recons.size());
  }
  return acc;
}

std::string_view method_name(Method m) {
  switch (m) {
    case Method::CGI: return "CGI";
    case Method::CS: return "CS";
    case Method::GT: return "GT";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (auto m : {Method::CGI, Method::CS, Method::GT}) {
    if (method_name(m) == name) return m;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown method '" + std::string(name) + "'");
}

void MetricReport::aggregate() {
  std::vector<double> m, s, q;
  std::size_t exact = 0, knn = 0, knn_n = 0;
  for (const auto& im : per_image) {
    m.push_back(im.mse);
    s.push_back(im.snr_db);
    q.push_back(im.ssim);
    exact += im.exact_match;
    if (im.knn_correct) {
      ++knn_n;
      knn += *im.knn_correct;
    }
  }
  mse = summarize(m);
  snr_db = summarize(s);
  ssim = summarize(q);
  exact_match_rate = per_image.empty() ? 0.0 : static_cast<double>(exact) / static_cast<double>(per_image.size());
  knn_rate.reset();
  if (knn_n > 0) knn_rate = static_cast<double>(knn) / static_cast<double>(knn_n);
}

MetricReport evaluate(Method method, double beta, double noise_level, const std::vector<data::Image>& recons,
                      const data::ImageSet& truth, const data::ImageSet* reference) {
  if (recons.size() != truth.size()) throw Error(ErrorCode::DimensionMismatch, "reconstruction count != truth count");
  if (reference && (!truth.labels || !reference->labels)) {
    throw Error(ErrorCode::MissingLabels, "k-NN accuracy needs labels");
  }
  MetricReport r;
  r.method = method;
  r.beta = beta;
  r.noise_level = noise_level;
  for (std::size_t i = 0; i < recons.size(); ++i) {
    ImageMetrics im;
    im.mse = mse(recons[i], truth.images[i]);
    try {
      const Snr s = snr(recons[i], truth.images[i]);
      im.snr_db = s.db;
      im.snr_flag = s.perfect_match ? 1 : 0;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ZeroSignal) throw;
      im.snr_db = -kSnrCapDb;
      im.snr_flag = -1;
    }
    im.ssim = ssim(recons[i], truth.images[i]);
    im.exact_match = recons[i] == truth.images[i];
    if (reference) {
      im.knn_correct = (*reference->labels)[nearest_neighbor(recons[i], *reference)] == (*truth.labels)[i];
    }
    r.per_image.push_back(im);
  }
  r.aggregate();
  return r;
}

void write_report_csv(const std::filesystem::path& path, const MetricReport& report) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path.string());
  os.precision(17);
  os << "index,mse,snr_db,snr_flag,ssim,exact_match,knn_correct\n";
  for (std::size_t i = 0; i < report.per_image.size(); ++i) {
    const auto& m = report.per_image[i];
    os << i << ',' << m.mse << ',' << m.snr_db << ',' << m.snr_flag << ',' << m.ssim << ',' << (m.exact_match ? 1 : 0)
       << ',' << (m.knn_correct ? std::to_string(*m.knn_correct ? 1 : 0) : "") << '\n';
  }
  os << "mean," << report.mse.mean << ',' << report.snr_db.mean << ",," << report.ssim.mean << ','
     << report.exact_match_rate << ',' << (report.knn_rate ? std::to_string(*report.knn_rate) : "") << '\n';
  os << "std," << report.mse.stddev << ',' << report.snr_db.stddev << ",," << report.ssim.stddev << ",,\n";
  os << "# method=" << method_name(report.method) << " beta=" << report.beta << " noise=" << report.noise_level
     << " n=" << report.per_image.size() << '\n';
}

MetricReport read_report_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::Io, "cannot read " + path.string());
  MetricReport r;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.starts_with("mean,") || line.starts_with("std,")) continue;
    if (line.starts_with("# ")) {
      std::istringstream fields(line.substr(2));
      std::string tok;
      while (fields >> tok) {
        const auto eq = tok.find('=');
        const std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
        if (k == "method") r.method = parse_method(v);
        if (k == "beta") r.beta = std::stod(v);
        if (k == "noise") r.noise_level = std::stod(v);
      }
      continue;
    }
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
    if (line.ends_with(',')) cols.emplace_back();
    if (cols.size() != 7) throw Error(ErrorCode::HeaderMismatch, "malformed metric row in " + path.string());
    ImageMetrics m;
    m.mse = std::stod(cols[1]);
    m.snr_db = std::stod(cols[2]);
    m.snr_flag = std::stoi(cols[3]);
    m.ssim = std::stod(cols[4]);
    m.exact_match = cols[5] == "1";
    if (!cols[6].empty()) m.knn_correct = cols[6] == "1";
    r.per_image.push_back(m);
  }
  r.aggregate();
  return r;
}

}  // namespace ghost::metrics
