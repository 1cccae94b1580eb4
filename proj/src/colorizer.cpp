#include "gcp/colorizer.hpp"

#include <sstream>

#include "gcp/alignment.hpp"
#include "gcp/errors.hpp"

namespace gcp {

namespace F = torch::nn::functional;

namespace {

torch::nn::Conv2d conv(int64_t in, int64_t out, int64_t k, int64_t stride = 1) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2));
}

torch::nn::Sequential conv_bn_relu(int64_t in, int64_t out, int64_t k, int64_t stride) {
  return torch::nn::Sequential(conv(in, out, k, stride), torch::nn::BatchNorm2d(out), torch::nn::ReLU());
}

}  // namespace

SpadeImpl::SpadeImpl(int64_t channels, int64_t guidance_channels, int64_t hidden, bool zero_init) {
  norm_ = register_module("norm", torch::nn::BatchNorm2d(torch::nn::BatchNorm2dOptions(channels).affine(false)));
  shared_ = register_module("shared", conv(guidance_channels, hidden, 3));
  gamma_ = register_module("gamma", conv(hidden, channels, 3));
  beta_ = register_module("beta", conv(hidden, channels, 3));
  torch::NoGradGuard no_grad;
  if (zero_init) {
    set_constant(0.0, 0.0);
  } else {
    gamma_->bias.fill_(1.0);
    beta_->bias.zero_();
  }
}

void SpadeImpl::set_constant(double gamma, double beta) {
  torch::NoGradGuard no_grad;
  gamma_->weight.zero_();
  gamma_->bias.fill_(gamma);
  beta_->weight.zero_();
  beta_->bias.fill_(beta);
}

torch::Tensor SpadeImpl::normalize(const torch::Tensor& x) { return norm_(x); }

std::pair<torch::Tensor, torch::Tensor> SpadeImpl::modulation(const torch::Tensor& guidance, int64_t height,
                                                              int64_t width) {
  auto g = guidance;
  if (g.size(-2) != height || g.size(-1) != width) {
    g = F::interpolate(g, F::InterpolateFuncOptions()
                              .size(std::vector<int64_t>{height, width})
                              .mode(torch::kBilinear)
                              .align_corners(false)
                              .antialias(g.size(-1) > width));
  }
  auto h = torch::relu(shared_(g));
  return {gamma_(h), beta_(h)};
}

torch::Tensor SpadeImpl::forward(const torch::Tensor& x, const torch::Tensor& guidance) {
  if (guidance.dim() != 4 || guidance.size(0) != x.size(0)) {
    std::ostringstream os;
    os << "SPADE guidance " << guidance.sizes() << " does not match features " << x.sizes();
    throw ShapeError(os.str());
  }
  auto [gamma, beta] = modulation(guidance, x.size(2), x.size(3));
  return gamma * normalize(x) + beta;
}

void ColorizerSpec::validate() const {
  if (resolution < 16 || resolution % 4 != 0) throw ConfigError("colorizer resolution must be a multiple of 4, >= 16");
  if (widths.size() != 3) throw ConfigError("colorizer widths must list stem, down1 and down2 channels");
  if (guidance_channels.size() != 3) throw ConfigError("colorizer needs guidance channels for R/4, R/2 and R");
  if (res_blocks < 0 || spade_hidden <= 0) throw ConfigError("colorizer block counts must be valid");
}

std::vector<int64_t> ColorizerSpec::guidance_scales() const { return {resolution / 4, resolution / 2, resolution}; }

void ColorizerSpec::write(Metadata& md, const std::string& prefix) const {
  md.set(prefix + "resolution", resolution);
  md.set(prefix + "widths", widths);
  md.set(prefix + "res_blocks", res_blocks);
  md.set(prefix + "spade_hidden", spade_hidden);
  md.set(prefix + "guidance_channels", guidance_channels);
  md.set(prefix + "seed", static_cast<int64_t>(seed));
}

ColorizerSpec ColorizerSpec::read(const Metadata& md, const std::string& prefix) {
  ColorizerSpec s;
  s.resolution = md.get_int(prefix + "resolution");
  s.widths = md.get_ints(prefix + "widths");
  s.res_blocks = md.get_int(prefix + "res_blocks");
  s.spade_hidden = md.get_int(prefix + "spade_hidden");
  s.guidance_channels = md.get_ints(prefix + "guidance_channels");
  s.seed = static_cast<std::uint64_t>(md.get_int(prefix + "seed"));
  return s;
}

SpadeResBlockImpl::SpadeResBlockImpl(int64_t channels, int64_t guidance_channels, int64_t hidden) {
  spade1_ = register_module("spade1", Spade(channels, guidance_channels, hidden));
  conv1_ = register_module("conv1", conv(channels, channels, 3));
  spade2_ = register_module("spade2", Spade(channels, guidance_channels, hidden));
  conv2_ = register_module("conv2", conv(channels, channels, 3));
}

torch::Tensor SpadeResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& guidance) {
  auto h = conv1_(torch::relu(spade1_(x, guidance)));
  h = conv2_(torch::relu(spade2_(h, guidance)));
  return x + h;
}

SpadeUpBlockImpl::SpadeUpBlockImpl(int64_t in, int64_t out, int64_t guidance_channels, int64_t hidden) {
  conv_ = register_module("conv", conv(in, out, 3));
  spade_ = register_module("spade", Spade(out, guidance_channels, hidden));
}

torch::Tensor SpadeUpBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& guidance) {
  auto up = F::interpolate(x, F::InterpolateFuncOptions()
                                  .scale_factor(std::vector<double>{2.0, 2.0})
                                  .mode(torch::kNearest));
  return torch::relu(spade_(conv_(up), guidance));
}

ColorizerImpl::ColorizerImpl(const ColorizerSpec& spec) : spec_(spec) {
  spec_.validate();
  const auto& w = spec_.widths;
  const auto& g = spec_.guidance_channels;
  stem_ = register_module("stem", conv_bn_relu(1, w[0], 7, 1));
  down1_ = register_module("down1", conv_bn_relu(w[0], w[1], 3, 2));
  down2_ = register_module("down2", conv_bn_relu(w[1], w[2], 3, 2));
  res_ = register_module("res", torch::nn::ModuleList());
  for (int64_t i = 0; i < spec_.res_blocks; ++i) res_->push_back(SpadeResBlock(w[2], g[0], spec_.spade_hidden));
  up1_ = register_module("up1", SpadeUpBlock(w[2], w[1], g[1], spec_.spade_hidden));
  up2_ = register_module("up2", SpadeUpBlock(w[1], w[0], g[2], spec_.spade_hidden));
  out_ = register_module("out", conv(w[0], 2, 7));
}

const torch::Tensor& ColorizerImpl::level(const FeaturePyramid& guidance, size_t i) const {
  const auto scale = spec_.guidance_scales()[i];
  const auto* t = guidance.find(scale);
  if (t == nullptr) {
    throw ConfigError("guidance pyramid lacks scale " + std::to_string(scale) + " needed by the colorizer");
  }
  if (t->size(1) != spec_.guidance_channels[i]) {
    throw ConfigError("guidance scale " + std::to_string(scale) + " has " + std::to_string(t->size(1)) +
                      " channels, colorizer expects " + std::to_string(spec_.guidance_channels[i]));
  }
  return *t;
}

torch::Tensor ColorizerImpl::forward(const torch::Tensor& l, const FeaturePyramid& guidance) {
  if (l.dim() != 4 || l.size(1) != 1 || l.size(2) != spec_.resolution || l.size(3) != spec_.resolution) {
    throw ValidationError("colorizer expects gray input at " + std::to_string(spec_.resolution) + "x" +
                          std::to_string(spec_.resolution));
  }
  const auto& g4 = level(guidance, 0);
  const auto& g2 = level(guidance, 1);
  const auto& g1 = level(guidance, 2);
  auto h = down2_->forward(down1_->forward(stem_->forward(l)));
  for (auto& block : *res_) h = block->as<SpadeResBlock>()->forward(h, g4);
  h = up2_(up1_(h, g2), g1);
  return torch::tanh(out_(h));
}

Colorizer make_colorizer(const ColorizerSpec& spec) {
  spec.validate();
  torch::manual_seed(spec.seed);
  return Colorizer(spec);
}

FeaturePyramid zero_guidance(const ColorizerSpec& spec, int64_t batch) {
  FeaturePyramid out;
  const auto scales = spec.guidance_scales();
  for (size_t i = 0; i < scales.size(); ++i) {
    out.levels.push_back(torch::zeros({batch, spec.guidance_channels[i], scales[i], scales[i]}));
  }
  return out;
}

}  // namespace gcp
