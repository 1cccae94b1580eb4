#include "gcp/alignment.hpp"

#include <sstream>

#include "gcp/errors.hpp"

namespace gcp {

namespace F = torch::nn::functional;

namespace {

std::string shape_of(const torch::Tensor& t) {
  std::ostringstream os;
  os << t.sizes();
  return os.str();
}

torch::Tensor batched(const torch::Tensor& x) { return x.dim() == 3 ? x.unsqueeze(0) : x; }

torch::nn::Conv2d conv3(int64_t in, int64_t out, int64_t stride) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

}  // namespace

void ProjectorSpec::validate() const {
  if (resolution < 8 || resolution % 4 != 0) throw ConfigError("projector resolution must be a multiple of 4, >= 8");
  if (widths.size() != 2) throw ConfigError("projector widths must list the stem and first trunk width");
  if (channels <= 0) throw ConfigError("projector channels must be positive");
}

void ProjectorSpec::write(Metadata& md, const std::string& prefix) const {
  md.set(prefix + "resolution", resolution);
  md.set(prefix + "channels", channels);
  md.set(prefix + "widths", widths);
  md.set(prefix + "seed", static_cast<int64_t>(seed));
}

ProjectorSpec ProjectorSpec::read(const Metadata& md, const std::string& prefix) {
  ProjectorSpec s;
  s.resolution = md.get_int(prefix + "resolution");
  s.channels = md.get_int(prefix + "channels");
  s.widths = md.get_ints(prefix + "widths");
  s.seed = static_cast<std::uint64_t>(md.get_int(prefix + "seed"));
  return s;
}

SharedProjectorImpl::SharedProjectorImpl(const ProjectorSpec& spec) : spec_(spec) {
  spec_.validate();
  const auto w0 = spec_.widths[0];
  const auto w1 = spec_.widths[1];
  gray_stem_ = register_module("gray_stem", conv3(1, w0, 1));
  rgb_stem_ = register_module("rgb_stem", conv3(3, w0, 1));
  trunk_ = register_module("trunk", torch::nn::Sequential(conv3(w0, w1, 2), torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)),
                                                          conv3(w1, spec_.channels, 2), torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)),
                                                          conv3(spec_.channels, spec_.channels, 1)));
}

void SharedProjectorImpl::check_input(const torch::Tensor& x, int64_t channels, const char* what) const {
  if (x.dim() != 4 || x.size(1) != channels || x.size(2) != spec_.resolution || x.size(3) != spec_.resolution) {
    throw ShapeError(std::string(what) + " expects [N, " + std::to_string(channels) + ", " +
                     std::to_string(spec_.resolution) + ", " + std::to_string(spec_.resolution) + "], got " +
                     shape_of(x));
  }
}

torch::Tensor SharedProjectorImpl::trunk(torch::Tensor h) { return trunk_->forward(F::leaky_relu(h, F::LeakyReLUFuncOptions().negative_slope(0.2))); }

torch::Tensor SharedProjectorImpl::project_gray(const torch::Tensor& l) {
  check_input(l, 1, "project_gray");
  return trunk(gray_stem_(l));
}

torch::Tensor SharedProjectorImpl::project_rgb(const torch::Tensor& rgb) {
  check_input(rgb, 3, "project_rgb");
  return trunk(rgb_stem_(rgb));
}

SharedProjector make_projector(const ProjectorSpec& spec) {
  spec.validate();
  torch::manual_seed(spec.seed);
  return SharedProjector(spec);
}

torch::Tensor project_gray(SharedProjector& projector, const GrayPlane& gray) {
  return projector->project_gray(normalize_l(gray.tensor()).unsqueeze(0).to(torch::kFloat32)).squeeze(0);
}

torch::Tensor project_rgb(SharedProjector& projector, const RgbImage& img) {
  return projector->project_rgb(rgb_to_signed(img.tensor()).unsqueeze(0).to(torch::kFloat32)).squeeze(0);
}

CorrelationMatrix correlation(const torch::Tensor& f_gray, const torch::Tensor& f_rgb, double tau) {
  if (!(tau > 0.0)) throw ValidationError("correlation temperature must be positive");
  auto a = batched(f_gray);
  auto b = batched(f_rgb);
  if (a.dim() != 4 || a.sizes() != b.sizes()) {
    throw ShapeError("correlation needs matching [N, C, H, W] features, got " + shape_of(f_gray) + " and " +
                     shape_of(f_rgb));
  }
  const auto n = a.size(0);
  const auto c = a.size(1);
  auto flat = [&](const torch::Tensor& f) {
    auto x = f.reshape({n, c, -1});
    x = x - x.mean(2, true);
    return x / x.norm(2, 1, true).clamp_min(1e-8);
  };
  auto sim = torch::bmm(flat(a).transpose(1, 2), flat(b)) / tau;
  return {torch::softmax(sim, 2), a.size(2), a.size(3)};
}

CorrelationMatrix identity_correlation(int64_t batch, int64_t height, int64_t width) {
  return {torch::eye(height * width).unsqueeze(0).expand({batch, -1, -1}).contiguous(), height, width};
}

torch::Tensor resize_features(const torch::Tensor& x, int64_t size) {
  if (x.size(-2) == size && x.size(-1) == size) return x;
  const bool shrink = x.size(-1) > size;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{size, size})
                               .mode(torch::kBilinear)
                               .align_corners(false)
                               .antialias(shrink));
}

FeaturePyramid warp(const CorrelationMatrix& m, const FeaturePyramid& pyramid) {
  const auto hw = m.height * m.width;
  if (m.height != m.width || m.weights.dim() != 3 || m.weights.size(1) != hw || m.weights.size(2) != hw) {
    throw ShapeError("correlation matrix " + shape_of(m.weights) + " does not match its " +
                     std::to_string(m.height) + "x" + std::to_string(m.width) + " grid");
  }
  FeaturePyramid out;
  for (const auto& level : pyramid.levels) {
    if (level.dim() != 4 || level.size(0) != m.weights.size(0)) {
      throw ShapeError("pyramid level " + shape_of(level) + " does not match correlation batch " +
                       std::to_string(m.weights.size(0)));
    }
    const auto n = level.size(0);
    const auto c = level.size(1);
    auto base = resize_features(level, m.height).reshape({n, c, hw});
    auto mixed = torch::bmm(base, m.weights.transpose(1, 2)).reshape({n, c, m.height, m.width});
    out.levels.push_back(resize_features(mixed, level.size(-1)));
  }
  return out;
}

}  // namespace gcp
