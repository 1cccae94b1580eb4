#include "gcp/colorspace.hpp"

#include <array>
#include <sstream>

#include "gcp/errors.hpp"

namespace gcp {

namespace {

using Matrix3 = std::array<std::array<double, 3>, 3>;

// Linear sRGB -> XYZ (D65).
constexpr Matrix3 kRgbToXyz = {{{0.4124564, 0.3575761, 0.1804375},
                                {0.2126729, 0.7151522, 0.0721750},
                                {0.0193339, 0.1191920, 0.9503041}}};

Matrix3 invert(const Matrix3& m) {
  const double c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
  const double c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
  const double c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
  const double det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
  Matrix3 inv{};
  inv[0][0] = c00 / det;
  inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  inv[1][0] = c01 / det;
  inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  inv[2][0] = c02 / det;
  inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return inv;
}

const Matrix3& xyz_to_rgb_matrix() {
  static const Matrix3 inv = invert(kRgbToXyz);
  return inv;
}

// Reference white is the image of RGB (1,1,1) so white maps to a = b = 0 exactly.
std::array<double, 3> white_point() {
  std::array<double, 3> w{};
  for (int r = 0; r < 3; ++r) w[r] = kRgbToXyz[r][0] + kRgbToXyz[r][1] + kRgbToXyz[r][2];
  return w;
}

constexpr double kDelta = 6.0 / 29.0;

torch::Tensor apply_matrix(const Matrix3& m, const torch::Tensor& x) {
  auto c0 = x.select(-3, 0);
  auto c1 = x.select(-3, 1);
  auto c2 = x.select(-3, 2);
  return torch::stack({c0 * m[0][0] + c1 * m[0][1] + c2 * m[0][2],
                       c0 * m[1][0] + c1 * m[1][1] + c2 * m[1][2],
                       c0 * m[2][0] + c1 * m[2][1] + c2 * m[2][2]},
                      -3);
}

torch::Tensor srgb_to_linear(const torch::Tensor& c) {
  auto curve = torch::pow((c.clamp_min(0.04045) + 0.055) / 1.055, 2.4);
  return torch::where(c <= 0.04045, c / 12.92, curve);
}

torch::Tensor linear_to_srgb(const torch::Tensor& c) {
  auto curve = 1.055 * torch::pow(c.clamp_min(0.0031308), 1.0 / 2.4) - 0.055;
  return torch::where(c <= 0.0031308, c * 12.92, curve);
}

torch::Tensor lab_f(const torch::Tensor& t) {
  const double d3 = kDelta * kDelta * kDelta;
  auto root = torch::pow(t.clamp_min(d3), 1.0 / 3.0);
  return torch::where(t > d3, root, t / (3.0 * kDelta * kDelta) + 4.0 / 29.0);
}

torch::Tensor lab_f_inv(const torch::Tensor& u) {
  return torch::where(u > kDelta, u * u * u, 3.0 * kDelta * kDelta * (u - 4.0 / 29.0));
}

std::string shape_of(const torch::Tensor& t) {
  std::ostringstream os;
  os << t.sizes();
  return os.str();
}

void check_planes(const torch::Tensor& t, int64_t channels, int64_t min_side, const char* what) {
  if (!t.defined() || t.dim() != 3 || t.size(0) != channels) {
    throw ValidationError(std::string(what) + ": expected [" + std::to_string(channels) +
                          ", H, W], got " + (t.defined() ? shape_of(t) : "undefined"));
  }
  if (!t.is_floating_point()) throw ValidationError(std::string(what) + ": expected floating-point data");
  if (t.size(1) < min_side || t.size(2) < min_side) {
    throw ValidationError(std::string(what) + ": spatial size " + shape_of(t) + " below minimum " +
                          std::to_string(min_side));
  }
  if (!torch::isfinite(t).all().item<bool>()) throw ValidationError(std::string(what) + ": non-finite values");
}

void check_range(const torch::Tensor& t, double lo, double hi, const char* what) {
  const double mn = t.min().item<double>();
  const double mx = t.max().item<double>();
  if (mn < lo || mx > hi) {
    std::ostringstream os;
    os << what << ": values [" << mn << ", " << mx << "] outside [" << lo << ", " << hi << "]";
    throw ValidationError(os.str());
  }
}

}  // namespace

RgbImage::RgbImage(torch::Tensor data) : data_(std::move(data)) {
  check_planes(data_, 3, 8, "RgbImage");
  check_range(data_, 0.0, 1.0, "RgbImage");
}

LabImage::LabImage(torch::Tensor data) : data_(std::move(data)) {
  check_planes(data_, 3, 1, "LabImage");
  check_range(data_.select(0, 0), 0.0, 100.0, "LabImage L");
  check_range(data_.slice(0, 1, 3), -128.0, 128.0, "LabImage ab");
}

GrayPlane::GrayPlane(torch::Tensor data) : data_(std::move(data)) {
  check_planes(data_, 1, 1, "GrayPlane");
  check_range(data_, 0.0, 100.0, "GrayPlane");
}

ChromaPlanes::ChromaPlanes(torch::Tensor data) : data_(std::move(data)) {
  check_planes(data_, 2, 1, "ChromaPlanes");
  check_range(data_, -128.0, 128.0, "ChromaPlanes");
}

torch::Tensor rgb_to_lab_tensor(const torch::Tensor& rgb) {
  const auto white = white_point();
  auto xyz = apply_matrix(kRgbToXyz, srgb_to_linear(rgb));
  auto fx = lab_f(xyz.select(-3, 0) / white[0]);
  auto fy = lab_f(xyz.select(-3, 1) / white[1]);
  auto fz = lab_f(xyz.select(-3, 2) / white[2]);
  return torch::stack({116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)}, -3);
}

torch::Tensor lab_to_rgb_tensor(const torch::Tensor& lab, bool clamp) {
  const auto white = white_point();
  auto fy = (lab.select(-3, 0) + 16.0) / 116.0;
  auto fx = fy + lab.select(-3, 1) / 500.0;
  auto fz = fy - lab.select(-3, 2) / 200.0;
  auto xyz = torch::stack({lab_f_inv(fx) * white[0], lab_f_inv(fy) * white[1], lab_f_inv(fz) * white[2]}, -3);
  auto rgb = linear_to_srgb(apply_matrix(xyz_to_rgb_matrix(), xyz));
  return clamp ? rgb.clamp(0.0, 1.0) : rgb;
}

torch::Tensor fit_chroma_to_gamut(const torch::Tensor& lab, int iterations) {
  torch::NoGradGuard no_grad;
  const double tol = 1e-9;
  auto l = lab.slice(-3, 0, 1);
  auto ab = lab.slice(-3, 1, 3);
  auto inside = [&](const torch::Tensor& scale) {
    auto rgb = lab_to_rgb_tensor(torch::cat({l, ab * scale}, -3), false);
    return ((rgb >= -tol) & (rgb <= 1.0 + tol)).all(-3, true);
  };
  auto ones = torch::ones_like(l);
  auto lo = torch::zeros_like(l);
  auto hi = ones.clone();
  auto full = inside(ones);
  for (int i = 0; i < iterations; ++i) {
    auto mid = 0.5 * (lo + hi);
    auto ok = inside(mid);
    lo = torch::where(ok, mid, lo);
    hi = torch::where(ok, hi, mid);
  }
  auto scale = torch::where(full, ones, lo);
  return torch::cat({l, ab * scale}, -3);
}

LabImage rgb_to_lab(const RgbImage& img) {
  const auto dtype = img.tensor().scalar_type();
  auto lab = rgb_to_lab_tensor(img.tensor().to(torch::kFloat64));
  // Rounding can push L a hair past 100 for white.
  auto l = lab.slice(0, 0, 1).clamp(0.0, 100.0);
  auto ab = lab.slice(0, 1, 3).clamp(-128.0, 128.0);
  return LabImage(torch::cat({l, ab}, 0).to(dtype));
}

RgbImage lab_to_rgb(const LabImage& img) {
  const auto dtype = img.tensor().scalar_type();
  return RgbImage(lab_to_rgb_tensor(img.tensor().to(torch::kFloat64)).to(dtype));
}

std::pair<GrayPlane, ChromaPlanes> split(const LabImage& img) {
  return {GrayPlane(img.l().clone()), ChromaPlanes(img.ab().clone())};
}

LabImage merge(const GrayPlane& l, const ChromaPlanes& ab) {
  if (l.height() != ab.height() || l.width() != ab.width()) {
    throw ShapeError("merge: luminance " + shape_of(l.tensor()) + " and chroma " + shape_of(ab.tensor()) +
                     " differ in spatial size");
  }
  if (l.tensor().scalar_type() != ab.tensor().scalar_type()) {
    return LabImage(torch::cat({l.tensor(), ab.tensor().to(l.tensor().scalar_type())}, 0));
  }
  return LabImage(torch::cat({l.tensor(), ab.tensor()}, 0));
}

GrayPlane to_gray(const RgbImage& img) { return split(rgb_to_lab(img)).first; }

torch::Tensor normalize_l(const torch::Tensor& l) { return l / 50.0 - 1.0; }
torch::Tensor denormalize_l(const torch::Tensor& l) { return (l + 1.0) * 50.0; }
torch::Tensor normalize_ab(const torch::Tensor& ab) { return ab / 128.0; }
torch::Tensor denormalize_ab(const torch::Tensor& ab) { return ab * 128.0; }

torch::Tensor rgb_to_signed(const torch::Tensor& rgb) { return rgb * 2.0 - 1.0; }
torch::Tensor signed_to_rgb(const torch::Tensor& x) { return ((x + 1.0) * 0.5).clamp(0.0, 1.0); }

}  // namespace gcp
