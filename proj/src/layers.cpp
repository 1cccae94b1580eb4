#include "gcp/layers.hpp"

namespace gcp {

namespace F = torch::nn::functional;

namespace {

torch::Tensor unit(const torch::Tensor& x) { return x / (x.norm() + 1e-12); }

constexpr int kWarmupIterations = 10;

}  // namespace

int64_t norm_groups(int64_t channels) {
  for (int64_t g : {8, 4, 2}) {
    if (channels % g == 0 && channels / g >= 2) return g;
  }
  return 1;
}

SpectralConv2dImpl::SpectralConv2dImpl(int64_t in_channels, int64_t out_channels, int64_t kernel_size,
                                       int64_t stride, int64_t padding, bool bias)
    : stride_(stride), padding_(padding) {
  weight_orig_ = register_parameter("weight_orig", torch::empty({out_channels, in_channels, kernel_size, kernel_size}));
  torch::nn::init::xavier_uniform_(weight_orig_);
  if (bias) bias_ = register_parameter("bias", torch::zeros({out_channels}));
  u_ = register_buffer("u", unit(torch::randn({out_channels})));
  v_ = register_buffer("v", unit(torch::randn({in_channels * kernel_size * kernel_size})));
  for (int i = 0; i < kWarmupIterations; ++i) power_iteration();
}

void SpectralConv2dImpl::power_iteration() {
  torch::NoGradGuard no_grad;
  auto w = weight_orig_.reshape({weight_orig_.size(0), -1});
  v_.copy_(unit(torch::mv(w.t(), u_)));
  u_.copy_(unit(torch::mv(w, v_)));
}

torch::Tensor SpectralConv2dImpl::normalized_weight() const {
  auto w = weight_orig_.reshape({weight_orig_.size(0), -1});
  auto sigma = torch::dot(u_.clone(), torch::mv(w, v_.clone()));
  return weight_orig_ / sigma;
}

torch::Tensor SpectralConv2dImpl::forward(const torch::Tensor& x) {
  if (is_training()) power_iteration();
  return F::conv2d(x, normalized_weight(), F::Conv2dFuncOptions().bias(bias_).stride(stride_).padding(padding_));
}

SpectralLinearImpl::SpectralLinearImpl(int64_t in_features, int64_t out_features, bool bias) {
  weight_orig_ = register_parameter("weight_orig", torch::empty({out_features, in_features}));
  torch::nn::init::xavier_uniform_(weight_orig_);
  if (bias) bias_ = register_parameter("bias", torch::zeros({out_features}));
  u_ = register_buffer("u", unit(torch::randn({out_features})));
  v_ = register_buffer("v", unit(torch::randn({in_features})));
  for (int i = 0; i < kWarmupIterations; ++i) power_iteration();
}

torch::Tensor SpectralLinearImpl::normalized_weight() const {
  return weight_orig_ / torch::dot(u_.clone(), torch::mv(weight_orig_, v_.clone()));
}

void SpectralLinearImpl::power_iteration() {
  torch::NoGradGuard no_grad;
  v_.copy_(unit(torch::mv(weight_orig_.t(), u_)));
  u_.copy_(unit(torch::mv(weight_orig_, v_)));
}

torch::Tensor SpectralLinearImpl::forward(const torch::Tensor& x) {
  if (is_training()) power_iteration();
  return F::linear(x, normalized_weight(), bias_);
}

ConditionalNormImpl::ConditionalNormImpl(int64_t channels, int64_t cond_dim) : groups_(norm_groups(channels)) {
  gain_ = register_module("gain", torch::nn::Linear(cond_dim, channels));
  bias_ = register_module("bias", torch::nn::Linear(cond_dim, channels));
  torch::NoGradGuard no_grad;
  for (auto* l : {&gain_, &bias_}) {
    (*l)->weight.normal_(0.0, 0.02);
    (*l)->bias.zero_();
  }
}

torch::Tensor ConditionalNormImpl::forward(const torch::Tensor& x, const torch::Tensor& cond) {
  auto h = F::group_norm(x, F::GroupNormFuncOptions(groups_).eps(1e-5));
  auto gain = 1.0 + gain_(cond).unsqueeze(-1).unsqueeze(-1);
  auto bias = bias_(cond).unsqueeze(-1).unsqueeze(-1);
  return h * gain + bias;
}

SelfAttentionImpl::SelfAttentionImpl(int64_t channels) {
  const auto inner = std::max<int64_t>(channels / 8, 1);
  const auto value = std::max<int64_t>(channels / 2, 1);
  theta_ = register_module("theta", SpectralConv2d(channels, inner, 1, 1, 0, false));
  phi_ = register_module("phi", SpectralConv2d(channels, inner, 1, 1, 0, false));
  g_ = register_module("g", SpectralConv2d(channels, value, 1, 1, 0, false));
  out_ = register_module("out", SpectralConv2d(value, channels, 1, 1, 0, false));
  gamma_ = register_parameter("gamma", torch::zeros({1}));
}

torch::Tensor SelfAttentionImpl::forward(const torch::Tensor& x) {
  const auto n = x.size(0), h = x.size(2), w = x.size(3);
  auto pool = [](const torch::Tensor& t) { return F::max_pool2d(t, F::MaxPool2dFuncOptions(2)); };
  auto theta = theta_(x).flatten(2);          // [N, c', HW]
  auto phi = pool(phi_(x)).flatten(2);        // [N, c', HW/4]
  auto attn = torch::softmax(torch::bmm(theta.transpose(1, 2), phi), -1);  // [N, HW, HW/4]
  auto g = pool(g_(x)).flatten(2);            // [N, c'', HW/4]
  auto o = torch::bmm(g, attn.transpose(1, 2)).view({n, -1, h, w});
  return x + gamma_ * out_(o);
}

}  // namespace gcp
