#include "gcp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "gcp/errors.hpp"
#include "gcp/image_io.hpp"

namespace gcp {

namespace {

torch::Tensor load_dir(const std::filesystem::path& dir, const std::vector<std::string>& names, int64_t resolution) {
  std::vector<torch::Tensor> images;
  for (const auto& name : names) {
    auto img = read_png(dir / name);
    images.push_back(resolution > 0 ? resize_image(img, resolution).tensor() : img.tensor());
  }
  return torch::stack(images);
}

torch::Tensor gaussian_window(int64_t size, double sigma) {
  auto x = torch::arange(size, torch::kFloat64) - static_cast<double>(size - 1) / 2.0;
  auto g = torch::exp(-x.pow(2) / (2.0 * sigma * sigma));
  g = g / g.sum();
  return torch::outer(g, g);
}

torch::Tensor luminance(const RgbImage& img) {
  auto t = img.tensor().to(torch::kFloat64);
  return 0.299 * t[0] + 0.587 * t[1] + 0.114 * t[2];
}

std::vector<std::string> split_row(const std::string& row) {
  std::vector<std::string> cells;
  std::stringstream ss(row);
  std::string cell;
  while (std::getline(ss, cell, '|')) {
    auto b = cell.find_first_not_of(" \t");
    auto e = cell.find_last_not_of(" \t");
    cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  return cells;
}

}  // namespace

double colorfulness(const RgbImage& img) {
  auto t = img.tensor().to(torch::kFloat64) * 255.0;
  auto rg = t[0] - t[1];
  auto yb = 0.5 * (t[0] + t[1]) - t[2];
  const double std_rg = rg.std(/*unbiased=*/false).item<double>();
  const double std_yb = yb.std(/*unbiased=*/false).item<double>();
  const double mean_rg = rg.mean().item<double>();
  const double mean_yb = yb.mean().item<double>();
  return std::sqrt(std_rg * std_rg + std_yb * std_yb) + 0.3 * std::sqrt(mean_rg * mean_rg + mean_yb * mean_yb);
}

double mean_colorfulness(const torch::Tensor& images) {
  if (images.size(0) == 0) return 0.0;
  double total = 0.0;
  for (int64_t i = 0; i < images.size(0); ++i) total += colorfulness(RgbImage(images[i]));
  return total / static_cast<double>(images.size(0));
}

FeatureStats FeatureStats::from_features(const torch::Tensor& features) {
  if (features.dim() != 2) throw ShapeError("feature statistics need an [n, d] matrix");
  if (features.size(0) < 2) throw ValidationError("feature statistics need at least 2 samples");
  auto f = features.to(torch::kFloat64);
  FeatureStats s;
  s.n = f.size(0);
  s.mu = f.mean(0);
  auto centered = f - s.mu;
  s.sigma = centered.t().matmul(centered) / static_cast<double>(s.n - 1);
  return s;
}

void FeatureStats::validate() const {
  if (n < 2) throw ValidationError("feature statistics need n >= 2");
  if (mu.dim() != 1 || sigma.dim() != 2 || sigma.size(0) != mu.size(0) || sigma.size(1) != mu.size(0)) {
    throw ShapeError("feature statistics have inconsistent shapes");
  }
  const double scale = std::max(1.0, sigma.abs().max().item<double>());
  if ((sigma - sigma.t()).abs().max().item<double>() > 1e-6 * scale) {
    throw ValidationError("covariance is not symmetric");
  }
}

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
  a.validate();
  b.validate();
  if (a.mu.size(0) != b.mu.size(0)) {
    throw ShapeError("feature dimensions differ: " + std::to_string(a.mu.size(0)) + " vs " +
                     std::to_string(b.mu.size(0)));
  }
  auto sa = a.sigma.to(torch::kFloat64);
  auto sb = b.sigma.to(torch::kFloat64);
  auto clipped_eigenvalues = [](const torch::Tensor& m, const char* what) {
    auto sym = 0.5 * (m + m.t());
    auto [values, vectors] = torch::linalg_eigh(sym);
    const double tol = 1e-6 * std::max(1.0, values.abs().max().item<double>());
    if (values.min().item<double>() < -tol) {
      throw ValidationError(std::string(what) + " is not positive semi-definite");
    }
    return std::make_pair(values.clamp_min(0.0), vectors);
  };
  auto [va, qa] = clipped_eigenvalues(sa, "covariance");
  auto root_a = qa.matmul(torch::diag(va.sqrt())).matmul(qa.t());
  auto [vm, qm] = clipped_eigenvalues(root_a.matmul(sb).matmul(root_a), "covariance product");
  (void)qm;
  const double mean_term = (a.mu.to(torch::kFloat64) - b.mu.to(torch::kFloat64)).pow(2).sum().item<double>();
  const double trace_term = (sa.trace() + sb.trace()).item<double>() - 2.0 * vm.sqrt().sum().item<double>();
  return std::max(0.0, mean_term + trace_term);
}

double fid(const torch::Tensor& images_a, const torch::Tensor& images_b, const FeatureExtractor& extractor) {
  torch::NoGradGuard no_grad;
  auto embed = [&](const torch::Tensor& x) {
    std::vector<torch::Tensor> chunks;
    for (int64_t i = 0; i < x.size(0); i += 64) {
      chunks.push_back(extractor.embed(x.slice(0, i, std::min(x.size(0), i + 64)).to(torch::kFloat32)));
    }
    return torch::cat(chunks);
  };
  return frechet_distance(FeatureStats::from_features(embed(images_a)), FeatureStats::from_features(embed(images_b)));
}

double fid(const std::filesystem::path& dir_a, const std::filesystem::path& dir_b, const FeatureExtractor& extractor) {
  auto names_a = list_png(dir_a);
  auto names_b = list_png(dir_b);
  if (names_a.size() < 2 || names_b.size() < 2) throw ValidationError("FID needs at least 2 images per set");
  return fid(load_dir(dir_a, names_a, extractor.resolution), load_dir(dir_b, names_b, extractor.resolution),
             extractor);
}

double psnr(const RgbImage& a, const RgbImage& b) {
  if (a.tensor().sizes() != b.tensor().sizes()) throw ShapeError("psnr needs equally sized images");
  const double mse = (a.tensor().to(torch::kFloat64) - b.tensor().to(torch::kFloat64)).pow(2).mean().item<double>();
  if (mse == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const RgbImage& a, const RgbImage& b) {
  if (a.tensor().sizes() != b.tensor().sizes()) throw ShapeError("ssim needs equally sized images");
  if (a.height() < 11 || a.width() < 11) throw ValidationError("ssim needs images of at least 11x11");
  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  auto w = gaussian_window(11, 1.5).view({1, 1, 11, 11});
  auto x = luminance(a).view({1, 1, a.height(), a.width()});
  auto y = luminance(b).view({1, 1, b.height(), b.width()});
  auto filt = [&](const torch::Tensor& t) { return torch::conv2d(t, w); };
  auto mx = filt(x);
  auto my = filt(y);
  auto sxx = filt(x * x) - mx * mx;
  auto syy = filt(y * y) - my * my;
  auto sxy = filt(x * y) - mx * my;
  auto map = ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
  return map.mean().item<double>();
}

std::string MetricReport::to_text() const {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "fid = " << fid << "\n";
  os << "colorful = " << colorful << "\n";
  os << "colorful_gt = " << colorful_gt << "\n";
  os << "delta_colorful = " << delta_colorful << "\n";
  os << "psnr = " << psnr << "\n";
  os << "ssim = " << ssim << "\n";
  os << "n_images = " << n_images << "\n";
  os << "extractor = " << extractor << "\n";
  return os.str();
}

std::string MetricReport::csv_header() { return "method,fid,colorful,delta_colorful,psnr,ssim,n_images,extractor"; }

std::string MetricReport::csv_row(const std::string& method) const {
  std::ostringstream os;
  os << std::setprecision(10) << method << "," << fid << "," << colorful << "," << delta_colorful << "," << psnr
     << "," << ssim << "," << n_images << ",\"" << extractor << "\"";
  return os.str();
}

std::string MetricReport::table_header() { return "Method | FID | Colorful | dColorful | PSNR | SSIM"; }

std::string MetricReport::table_row(const std::string& method) const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << method << " | " << fid << " | " << colorful << " | " << delta_colorful
     << " | " << psnr << " | " << ssim;
  return os.str();
}

MetricReport MetricReport::parse_table_row(const std::string& row, std::string* method) {
  auto cells = split_row(row);
  if (cells.size() != 6) throw ValidationError("metric row needs 6 '|'-separated cells: " + row);
  MetricReport r;
  try {
    r.fid = std::stod(cells[1]);
    r.colorful = std::stod(cells[2]);
    r.delta_colorful = std::stod(cells[3]);
    r.psnr = std::stod(cells[4]);
    r.ssim = std::stod(cells[5]);
  } catch (const std::exception&) {
    throw ValidationError("metric row has a non-numeric cell: " + row);
  }
  if (method != nullptr) *method = cells[0];
  return r;
}

std::vector<std::string> list_png(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DatasetError("not a directory: " + dir.string());
  std::vector<std::string> names;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

MetricReport evaluate_batches(const torch::Tensor& pred, const torch::Tensor& gt, const FeatureExtractor& extractor) {
  if (pred.sizes() != gt.sizes()) throw ShapeError("prediction and ground-truth batches differ in shape");
  MetricReport r;
  r.n_images = pred.size(0);
  r.extractor = extractor.identity;
  r.fid = fid(pred, gt, extractor);
  r.colorful = mean_colorfulness(pred);
  r.colorful_gt = mean_colorfulness(gt);
  r.delta_colorful = std::fabs(r.colorful - r.colorful_gt);
  double p = 0.0;
  double s = 0.0;
  for (int64_t i = 0; i < r.n_images; ++i) {
    RgbImage a(pred[i]);
    RgbImage b(gt[i]);
    p += psnr(a, b);
    s += ssim(a, b);
  }
  r.psnr = p / static_cast<double>(r.n_images);
  r.ssim = s / static_cast<double>(r.n_images);
  return r;
}

MetricReport evaluate_pairs(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                            const FeatureExtractor& extractor) {
  auto pred_names = list_png(pred_dir);
  auto gt_names = list_png(gt_dir);
  if (pred_names != gt_names) {
    throw ValidationError("prediction and ground-truth directories hold different file names");
  }
  if (pred_names.size() < 2) throw ValidationError("evaluation needs at least 2 image pairs");
  return evaluate_batches(load_dir(pred_dir, pred_names, 0), load_dir(gt_dir, gt_names, 0), extractor);
}

}  // namespace gcp
