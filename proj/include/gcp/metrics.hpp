#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "gcp/colorspace.hpp"

namespace gcp {

// Hasler-Suesstrunk colorfulness on 0-255 channels:
// sqrt(var(rg) + var(yb)) + 0.3 * sqrt(mean(rg)^2 + mean(yb)^2),
// rg = R - G, yb = (R + G) / 2 - B, population statistics.
double colorfulness(const RgbImage& img);
// Mean colorfulness of a batch [N, 3, H, W] in [0, 1].
double mean_colorfulness(const torch::Tensor& images);

// Gaussian statistics of an embedding set, float64.
struct FeatureStats {
  torch::Tensor mu;     // [d]
  torch::Tensor sigma;  // [d, d]
  int64_t n = 0;

  // Rows of `features` [n, d] are samples; n >= 2; unbiased covariance.
  static FeatureStats from_features(const torch::Tensor& features);
  void validate() const;
};

// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}). The trace of the
// square root is taken from the eigenvalues of S_a^{1/2} S_b S_a^{1/2};
// eigenvalues down to -1e-6 (relative to the largest) are clipped to 0,
// anything more negative is a ValidationError.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

// Image batch [N, 3, R, R] in [0, 1] -> embeddings [N, d].
struct FeatureExtractor {
  std::string identity;
  int64_t resolution = 0;
  std::function<torch::Tensor(const torch::Tensor&)> embed;
};

double fid(const torch::Tensor& images_a, const torch::Tensor& images_b, const FeatureExtractor& extractor);
double fid(const std::filesystem::path& dir_a, const std::filesystem::path& dir_b, const FeatureExtractor& extractor);

// 10 log10(1 / MSE) on [0, 1] data; +infinity when the images are equal.
double psnr(const RgbImage& a, const RgbImage& b);
constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

// SSIM of the luminance Y = 0.299 R + 0.587 G + 0.114 B with an 11x11
// Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, data range 1, averaged
// over all fully contained windows. Needs images of at least 11x11.
double ssim(const RgbImage& a, const RgbImage& b);

struct MetricReport {
  double fid = 0.0;
  double colorful = 0.0;     // mean colorfulness of the predictions
  double colorful_gt = 0.0;  // mean colorfulness of the ground truth
  double delta_colorful = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  int64_t n_images = 0;
  std::string extractor;

  // key = value lines.
  std::string to_text() const;
  static std::string csv_header();
  std::string csv_row(const std::string& method) const;
  // "method | FID | Colorful | dColorful | PSNR | SSIM", 4 decimals.
  std::string table_row(const std::string& method) const;
  static std::string table_header();
  // Inverse of table_row; fills the five metric fields.
  static MetricReport parse_table_row(const std::string& row, std::string* method = nullptr);
};

// Pairs images by file name. Both directories must hold the same set of PNG
// names; pairs are processed in lexicographic order.
MetricReport evaluate_pairs(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                            const FeatureExtractor& extractor);
// The same on in-memory batches [N, 3, H, W] in [0, 1].
MetricReport evaluate_batches(const torch::Tensor& pred, const torch::Tensor& gt, const FeatureExtractor& extractor);

// Sorted PNG file names of a directory.
std::vector<std::string> list_png(const std::filesystem::path& dir);

}  // namespace gcp
