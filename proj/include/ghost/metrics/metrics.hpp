#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ghost/data/image.hpp"

namespace ghost::metrics {

/// Mean squared pixel difference.
double mse(const data::Image& recon, const data::Image& truth);

/// Value reported for an infinite SNR (recon == truth), and its negative for
/// an all-dark reconstruction in batch reports.
inline constexpr double kSnrCapDb = 100.0;

struct Snr {
  double db = 0.0;
  bool perfect_match = false;  // db is the +kSnrCapDb sentinel
};

/// 10·log10(Σ recon / Σ |recon − truth|). Throws ZeroSignal when Σ recon <= 0
/// and the images differ.
Snr snr(const data::Image& recon, const data::Image& truth);

/// Global single-window SSIM with c1 = (0.01·L)², c2 = (0.03·L)², L = 1.
/// Means, variances and covariance are population moments over all pixels.
double ssim(const data::Image& a, const data::Image& b);

struct Accuracy {
  double exact_match_rate = 0.0;
  std::optional<double> knn_rate;
};

/// Exact match = identical pixel sets. knn_rate (computed when `reference` is
/// given) = share of reconstructions whose nearest reference image under L1
/// distance (Hamming for binary images) has the truth label. Throws
/// MissingLabels when either set lacks labels in that case.
Accuracy accuracy(const std::vector<data::Image>& recons, const data::ImageSet& truth,
                  const data::ImageSet* reference = nullptr);

/// Index of the nearest reference image under L1 distance.
std::size_t nearest_neighbor(const data::Image& query, const data::ImageSet& reference);

enum class Method { CGI, CS, GT };
std::string_view method_name(Method m);
Method parse_method(std::string_view name);

struct ImageMetrics {
  double mse = 0.0;
  double snr_db = 0.0;
  int snr_flag = 0;  // 0 ok, +1 perfect match sentinel, -1 zero-signal sentinel
  double ssim = 0.0;
  bool exact_match = false;
  std::optional<bool> knn_correct;
};

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;
};

struct MetricReport {
  Method method = Method::GT;
  double beta = 0.0;
  double noise_level = 0.0;
  std::vector<ImageMetrics> per_image;
  Summary mse, snr_db, ssim;
  double exact_match_rate = 0.0;
  std::optional<double> knn_rate;

  /// Recomputes the aggregates from per_image.
  void aggregate();
};

MetricReport evaluate(Method method, double beta, double noise_level, const std::vector<data::Image>& recons,
                      const data::ImageSet& truth, const data::ImageSet* reference = nullptr);

/// One row per image, then `mean` and `std` footer rows and a trailing
/// `# key=value` summary line.
void write_report_csv(const std::filesystem::path& path, const MetricReport& report);
MetricReport read_report_csv(const std::filesystem::path& path);

}  // namespace ghost::metrics
