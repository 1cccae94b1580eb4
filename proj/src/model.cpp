#include "gcp/model.hpp"

#include "gcp/errors.hpp"
#include "gcp/image_io.hpp"

namespace gcp {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoPrior: return "no_prior";
    case Variant::kImageGuidance: return "image_guidance";
    case Variant::kNoAlignment: return "no_alignment";
  }
  return "full";
}

Variant parse_variant(const std::string& name) {
  for (auto v : {Variant::kFull, Variant::kNoPrior, Variant::kImageGuidance, Variant::kNoAlignment}) {
    if (variant_name(v) == name) return v;
  }
  throw ConfigError("unknown variant '" + name + "' (expected full, no_prior, image_guidance or no_alignment)");
}

std::vector<int64_t> guidance_channels(const GeneratorSpec& g, Variant v) {
  if (v == Variant::kImageGuidance) return {3, 3, 3};
  const auto scales = g.scales();
  std::vector<int64_t> out;
  for (auto s : {g.resolution / 4, g.resolution / 2, g.resolution}) {
    auto it = std::find(scales.begin(), scales.end(), s);
    if (it == scales.end()) throw ConfigError("generator pyramid lacks scale " + std::to_string(s));
    out.push_back(g.widths[static_cast<size_t>(it - scales.begin())]);
  }
  return out;
}

void ColorizationModel::eval() {
  prior.generator->eval();
  prior.discriminator->eval();
  encoder->eval();
  projector->eval();
  colorizer->eval();
}

ForwardPass forward_pass(ColorizationModel& model, const torch::Tensor& l, const torch::Tensor& labels,
                         const torch::Tensor& z) {
  ForwardPass out;
  const auto n = l.size(0);
  if (model.variant == Variant::kNoPrior) {
    out.guidance = zero_guidance(model.colorizer->spec(), n);
    out.ab = model.colorizer->forward(l, out.guidance);
    return out;
  }
  {
    torch::NoGradGuard no_grad;
    if (z.defined()) {
      if (z.dim() != 2 || z.size(0) != n || z.size(1) != model.latent_dim()) {
        throw ValidationError("latent override must be [N, " + std::to_string(model.latent_dim()) + "]");
      }
      if (!torch::isfinite(z).all().item<bool>()) throw ValidationError("latent override has non-finite entries");
      out.z = z.to(torch::kFloat32);
    } else {
      out.z = model.encoder->forward(l, labels);
    }
    auto gen = model.prior.generator->forward(out.z, labels);
    out.inversion = signed_to_rgb(gen.image);
    out.pyramid = gen.pyramid.detach();
  }
  FeaturePyramid source;
  if (model.variant == Variant::kImageGuidance) {
    auto signed_inv = rgb_to_signed(out.inversion);
    for (auto s : model.colorizer->spec().guidance_scales()) source.levels.push_back(resize_features(signed_inv, s));
  } else {
    const auto& cs = model.colorizer->spec();
    for (auto s : cs.guidance_scales()) {
      const auto* level = out.pyramid.find(s);
      if (level == nullptr) throw ConfigError("generator pyramid lacks scale " + std::to_string(s));
      source.levels.push_back(*level);
    }
  }
  const auto grid = model.projector->spec().grid();
  if (model.variant == Variant::kNoAlignment) {
    out.correlation = identity_correlation(n, grid, grid);
  } else {
    out.f_gray = model.projector->project_gray(l);
    out.f_rgb = model.projector->project_rgb(rgb_to_signed(out.inversion));
    out.correlation = correlation(out.f_gray, out.f_rgb, model.tau);
  }
  out.guidance = warp(out.correlation, source);
  out.ab = model.colorizer->forward(l, out.guidance);
  return out;
}

torch::Tensor compose_rgb(const torch::Tensor& l, const torch::Tensor& ab) {
  return lab_to_rgb_tensor(torch::cat({denormalize_l(l), denormalize_ab(ab)}, 1));
}

torch::Tensor compose_rgb_in_gamut(const torch::Tensor& l, const torch::Tensor& ab) {
  auto lab = torch::cat({denormalize_l(l), denormalize_ab(ab)}, 1).to(torch::kFloat64);
  return lab_to_rgb_tensor(fit_chroma_to_gamut(lab)).to(torch::kFloat32);
}

namespace {

void check_inputs(ColorizationModel& model, const GrayPlane& gray, int64_t class_label) {
  if (gray.height() != model.resolution() || gray.width() != model.resolution()) {
    throw ValidationError("gray input is " + std::to_string(gray.height()) + "x" + std::to_string(gray.width()) +
                          ", model expects " + std::to_string(model.resolution()) + "x" +
                          std::to_string(model.resolution()));
  }
  if (class_label < 0 || class_label >= model.num_classes()) {
    throw ValidationError("class label " + std::to_string(class_label) + " outside [0, " +
                          std::to_string(model.num_classes()) + ")");
  }
}

torch::Tensor network_l(const GrayPlane& gray) { return normalize_l(gray.tensor().to(torch::kFloat32)).unsqueeze(0); }

Colorization finish(const ForwardPass& fp, const torch::Tensor& l, int64_t class_label) {
  auto rgb = compose_rgb_in_gamut(l, fp.ab).squeeze(0);
  LatentCode code{fp.z.defined() ? fp.z.squeeze(0).clone() : torch::Tensor(), class_label};
  return {RgbImage(rgb), code};
}

}  // namespace

Colorization colorize(ColorizationModel& model, const GrayPlane& gray, int64_t class_label,
                      const std::optional<torch::Tensor>& z) {
  check_inputs(model, gray, class_label);
  torch::NoGradGuard no_grad;
  auto l = network_l(gray);
  auto labels = torch::tensor({class_label});
  torch::Tensor zb;
  if (z) {
    if (z->dim() != 1) throw ValidationError("latent override must be a vector");
    zb = z->unsqueeze(0);
  }
  return finish(forward_pass(model, l, labels, zb), l, class_label);
}

torch::Tensor colorize_batch(ColorizationModel& model, const torch::Tensor& l, const torch::Tensor& labels) {
  torch::NoGradGuard no_grad;
  return compose_rgb_in_gamut(l, forward_pass(model, l, labels).ab);
}

std::vector<Colorization> diversify(ColorizationModel& model, const GrayPlane& gray, int64_t class_label, double sigma,
                                    int64_t n, std::uint64_t seed) {
  check_inputs(model, gray, class_label);
  if (model.variant == Variant::kNoPrior) throw ValidationError("the no_prior variant has no latent code to perturb");
  auto code = encode(model.encoder, gray, class_label);
  std::vector<Colorization> out;
  for (const auto& z : perturb(code.z, sigma, n, seed)) out.push_back(colorize(model, gray, class_label, z));
  return out;
}

std::vector<Colorization> walk_colorize(ColorizationModel& model, const GrayPlane& gray, int64_t class_label,
                                        const torch::Tensor& direction, const std::vector<double>& alphas,
                                        const std::optional<torch::Tensor>& z) {
  check_inputs(model, gray, class_label);
  if (model.variant == Variant::kNoPrior) throw ValidationError("the no_prior variant has no latent code to walk");
  auto base = z ? z->to(torch::kFloat32) : encode(model.encoder, gray, class_label).z;
  if (base.dim() != 1 || base.size(0) != model.latent_dim()) {
    throw ValidationError("latent code must have " + std::to_string(model.latent_dim()) + " entries");
  }
  std::vector<Colorization> out;
  for (const auto& zi : walk(base, direction, alphas)) out.push_back(colorize(model, gray, class_label, zi));
  return out;
}

GrayPlane gray_from_image(const RgbImage& img, int64_t resolution) {
  if (img.height() == resolution && img.width() == resolution) return to_gray(img);
  return to_gray(resize_image(img, resolution));
}

}  // namespace gcp
