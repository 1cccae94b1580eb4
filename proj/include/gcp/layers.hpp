#pragma once

#include <torch/torch.h>

namespace gcp {

// Conv2d whose weight is divided by its largest singular value, estimated by
// power iteration on the [out, in*k*k] matrix. One iteration runs per forward
// in training mode; evaluation mode reuses the stored vectors, so it is
// deterministic.
class SpectralConv2dImpl : public torch::nn::Module {
 public:
  SpectralConv2dImpl(int64_t in_channels, int64_t out_channels, int64_t kernel_size, int64_t stride = 1,
                     int64_t padding = 0, bool bias = true);

  torch::Tensor forward(const torch::Tensor& x);

  // weight_orig / sigma(u, v) with the current vectors; no power iteration.
  torch::Tensor normalized_weight() const;
  void power_iteration();

  const torch::Tensor& weight_orig() const { return weight_orig_; }

 private:
  torch::Tensor weight_orig_, bias_, u_, v_;
  int64_t stride_, padding_;
};
TORCH_MODULE(SpectralConv2d);

class SpectralLinearImpl : public torch::nn::Module {
 public:
  SpectralLinearImpl(int64_t in_features, int64_t out_features, bool bias = true);

  torch::Tensor forward(const torch::Tensor& x);
  void power_iteration();
  torch::Tensor normalized_weight() const;

 private:
  torch::Tensor weight_orig_, bias_, u_, v_;
};
TORCH_MODULE(SpectralLinear);

// Group norm (no affine) followed by a gain and bias predicted from a
// conditioning vector: out = norm(x) * (1 + gain(c)) + bias(c).
class ConditionalNormImpl : public torch::nn::Module {
 public:
  ConditionalNormImpl(int64_t channels, int64_t cond_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& cond);

 private:
  int64_t groups_;
  torch::nn::Linear gain_{nullptr}, bias_{nullptr};
};
TORCH_MODULE(ConditionalNorm);

// Non-local self-attention with a zero-initialized residual gate.
class SelfAttentionImpl : public torch::nn::Module {
 public:
  explicit SelfAttentionImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  SpectralConv2d theta_{nullptr}, phi_{nullptr}, g_{nullptr}, out_{nullptr};
  torch::Tensor gamma_;
};
TORCH_MODULE(SelfAttention);

int64_t norm_groups(int64_t channels);

}  // namespace gcp
