#pragma once

#include <torch/torch.h>

#include <utility>

namespace gcp {

// sRGB image, [3, H, W] with every value in [0, 1]; H, W >= 8.
class RgbImage {
 public:
  explicit RgbImage(torch::Tensor data);

  const torch::Tensor& tensor() const { return data_; }
  int64_t height() const { return data_.size(1); }
  int64_t width() const { return data_.size(2); }

 private:
  torch::Tensor data_;
};

// CIELAB image stored as [3, H, W]: channel 0 is L in [0, 100], channels 1-2
// are a, b in [-128, 128].
class LabImage {
 public:
  explicit LabImage(torch::Tensor data);

  const torch::Tensor& tensor() const { return data_; }
  torch::Tensor l() const { return data_.slice(0, 0, 1); }
  torch::Tensor ab() const { return data_.slice(0, 1, 3); }
  int64_t height() const { return data_.size(1); }
  int64_t width() const { return data_.size(2); }

 private:
  torch::Tensor data_;
};

// Luminance plane, [1, H, W] in [0, 100].
class GrayPlane {
 public:
  explicit GrayPlane(torch::Tensor data);

  const torch::Tensor& tensor() const { return data_; }
  int64_t height() const { return data_.size(1); }
  int64_t width() const { return data_.size(2); }

 private:
  torch::Tensor data_;
};

// Chrominance planes, [2, H, W] in [-128, 128].
class ChromaPlanes {
 public:
  explicit ChromaPlanes(torch::Tensor data);

  const torch::Tensor& tensor() const { return data_; }
  int64_t height() const { return data_.size(1); }
  int64_t width() const { return data_.size(2); }

 private:
  torch::Tensor data_;
};

// D65 white point, sRGB primaries and transfer curve. Computation runs in
// float64; the result keeps the input dtype.
LabImage rgb_to_lab(const RgbImage& img);

// Inverse of rgb_to_lab. Out-of-gamut colors are clamped to [0, 1].
RgbImage lab_to_rgb(const LabImage& img);

std::pair<GrayPlane, ChromaPlanes> split(const LabImage& img);
LabImage merge(const GrayPlane& l, const ChromaPlanes& ab);

// Luminance of an sRGB image: rgb -> lab, keep L.
GrayPlane to_gray(const RgbImage& img);

// Batched, differentiable conversions on [..., 3, H, W] tensors. No range
// validation; lab_to_rgb_tensor clamps its output to [0, 1].
torch::Tensor rgb_to_lab_tensor(const torch::Tensor& rgb);
torch::Tensor lab_to_rgb_tensor(const torch::Tensor& lab, bool clamp = true);

// Scales each pixel's (a, b) by the largest factor in [0, 1] (bisection,
// `iterations` halvings) that keeps its RGB image inside [0, 1]; L and hue
// angle are untouched.
torch::Tensor fit_chroma_to_gamut(const torch::Tensor& lab, int iterations = 16);

// Network range: L [0,100] -> [-1,1], ab [-128,128] -> [-1,1].
torch::Tensor normalize_l(const torch::Tensor& l);
torch::Tensor denormalize_l(const torch::Tensor& l);
torch::Tensor normalize_ab(const torch::Tensor& ab);
torch::Tensor denormalize_ab(const torch::Tensor& ab);

// RGB [0,1] <-> [-1,1], the range generators and discriminators work in.
torch::Tensor rgb_to_signed(const torch::Tensor& rgb);
torch::Tensor signed_to_rgb(const torch::Tensor& x);

}  // namespace gcp
