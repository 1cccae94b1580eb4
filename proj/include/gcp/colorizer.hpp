#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <vector>

#include "gcp/prior_gan.hpp"
#include "gcp/tensor_io.hpp"

namespace gcp {

// out = gamma(g) * norm(x) + beta(g). norm is parameter-free batch
// normalization (batch statistics in training, running statistics in
// evaluation); gamma and beta come from two conv heads on a shared conv stem
// over the guidance resized to x's spatial size.
class SpadeImpl : public torch::nn::Module {
 public:
  SpadeImpl(int64_t channels, int64_t guidance_channels, int64_t hidden, bool zero_init = false);

  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& guidance);
  // gamma and beta at `height` x `width`.
  std::pair<torch::Tensor, torch::Tensor> modulation(const torch::Tensor& guidance, int64_t height, int64_t width);
  torch::Tensor normalize(const torch::Tensor& x);
  // Zeroes both heads' weights and sets their biases so gamma == g, beta == b.
  void set_constant(double gamma, double beta);

 private:
  torch::nn::BatchNorm2d norm_{nullptr};
  torch::nn::Conv2d shared_{nullptr}, gamma_{nullptr}, beta_{nullptr};
};
TORCH_MODULE(Spade);

// Encoder / six SPADE residual blocks / decoder. The residual blocks at R/4
// are guided by the R/4 pyramid level, the two up-blocks by R/2 and R.
struct ColorizerSpec {
  int64_t resolution = 64;
  std::vector<int64_t> widths = {32, 64, 128};  // stem, after down1, after down2
  int64_t res_blocks = 6;
  int64_t spade_hidden = 32;
  // Channels of the guidance levels at R/4, R/2 and R.
  std::vector<int64_t> guidance_channels = {32, 16, 16};
  std::uint64_t seed = 5;

  void validate() const;
  std::vector<int64_t> guidance_scales() const;
  void write(Metadata& md, const std::string& prefix) const;
  static ColorizerSpec read(const Metadata& md, const std::string& prefix);
};

class SpadeResBlockImpl : public torch::nn::Module {
 public:
  SpadeResBlockImpl(int64_t channels, int64_t guidance_channels, int64_t hidden);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& guidance);

 private:
  Spade spade1_{nullptr}, spade2_{nullptr};
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
};
TORCH_MODULE(SpadeResBlock);

class SpadeUpBlockImpl : public torch::nn::Module {
 public:
  SpadeUpBlockImpl(int64_t in, int64_t out, int64_t guidance_channels, int64_t hidden);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& guidance);

 private:
  torch::nn::Conv2d conv_{nullptr};
  Spade spade_{nullptr};
};
TORCH_MODULE(SpadeUpBlock);

class ColorizerImpl : public torch::nn::Module {
 public:
  explicit ColorizerImpl(const ColorizerSpec& spec);

  // Network-range L [N, 1, R, R] and a guidance pyramid holding levels R/4,
  // R/2 and R -> network-range ab [N, 2, R, R] (tanh).
  torch::Tensor forward(const torch::Tensor& l, const FeaturePyramid& guidance);

  const ColorizerSpec& spec() const { return spec_; }

 private:
  const torch::Tensor& level(const FeaturePyramid& guidance, size_t i) const;

  ColorizerSpec spec_;
  torch::nn::Sequential stem_{nullptr}, down1_{nullptr}, down2_{nullptr};
  torch::nn::ModuleList res_;
  SpadeUpBlock up1_{nullptr}, up2_{nullptr};
  torch::nn::Conv2d out_{nullptr};
};
TORCH_MODULE(Colorizer);

Colorizer make_colorizer(const ColorizerSpec& spec);

// The guidance pyramid's levels at R/4, R/2, R with every value set to 0.
FeaturePyramid zero_guidance(const ColorizerSpec& spec, int64_t batch);

}  // namespace gcp
