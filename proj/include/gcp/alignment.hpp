#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "gcp/colorspace.hpp"
#include "gcp/prior_gan.hpp"
#include "gcp/tensor_io.hpp"

namespace gcp {

// Projectors into the shared space S. Modality-specific stems feed one shared
// trunk of three conv blocks (strides 2, 2, 1) ending on the base grid R / 4.
struct ProjectorSpec {
  int64_t resolution = 64;
  int64_t channels = 128;                 // C_S
  std::vector<int64_t> widths = {32, 64};  // stem width, first trunk block width
  std::uint64_t seed = 4;

  int64_t grid() const { return resolution / 4; }
  void validate() const;
  void write(Metadata& md, const std::string& prefix) const;
  static ProjectorSpec read(const Metadata& md, const std::string& prefix);
};

class SharedProjectorImpl : public torch::nn::Module {
 public:
  explicit SharedProjectorImpl(const ProjectorSpec& spec);

  // Network-range L, [N, 1, R, R] -> [N, C_S, R/4, R/4].
  torch::Tensor project_gray(const torch::Tensor& l);
  // Signed RGB, [N, 3, R, R] -> [N, C_S, R/4, R/4].
  torch::Tensor project_rgb(const torch::Tensor& rgb);

  const ProjectorSpec& spec() const { return spec_; }

 private:
  torch::Tensor trunk(torch::Tensor h);
  void check_input(const torch::Tensor& x, int64_t channels, const char* what) const;

  ProjectorSpec spec_;
  torch::nn::Conv2d gray_stem_{nullptr}, rgb_stem_{nullptr};
  torch::nn::Sequential trunk_{nullptr};
};
TORCH_MODULE(SharedProjector);

SharedProjector make_projector(const ProjectorSpec& spec);

// Single-image projections, [C_S, R/4, R/4].
torch::Tensor project_gray(SharedProjector& projector, const GrayPlane& gray);
torch::Tensor project_rgb(SharedProjector& projector, const RgbImage& img);

// Row-stochastic correspondence on an H x W grid: weights[n, u, v] is the
// weight of exemplar position v for input position u (row-major positions).
struct CorrelationMatrix {
  torch::Tensor weights;  // [N, H*W, H*W]
  int64_t height = 0;
  int64_t width = 0;
};

// softmax_v(<f_gray(u), f_rgb(v)> / tau) after centering each channel over
// positions and L2-normalizing every position vector. Inputs are [N, C, H, W]
// or [C, H, W].
CorrelationMatrix correlation(const torch::Tensor& f_gray, const torch::Tensor& f_rgb, double tau);

CorrelationMatrix identity_correlation(int64_t batch, int64_t height, int64_t width);

// Every level is resized (bilinear) to the grid, mixed as
// out(u) = sum_v M(u, v) F(v), and resized back to its own size.
FeaturePyramid warp(const CorrelationMatrix& m, const FeaturePyramid& pyramid);

// Bilinear resize of [N, C, H, W] to size x size; antialiased when shrinking
// and a no-op when the size already matches.
torch::Tensor resize_features(const torch::Tensor& x, int64_t size);

}  // namespace gcp
