#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gcp/alignment.hpp"
#include "gcp/colorizer.hpp"
#include "gcp/encoder.hpp"
#include "gcp/latent_control.hpp"
#include "gcp/prior_gan.hpp"

namespace gcp {

// full: warped generator features guide the colorizer.
// no_prior: zero guidance, no inversion.
// image_guidance: the inversion image, resized to every scale, replaces the features.
// no_alignment: features are used with an identity correspondence.
enum class Variant { kFull, kNoPrior, kImageGuidance, kNoAlignment };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

// Guidance channels the colorizer needs for a generator and variant.
std::vector<int64_t> guidance_channels(const GeneratorSpec& g, Variant v);

// Everything colorize() runs. The prior and encoder are frozen.
struct ColorizationModel {
  PriorGan prior;
  Encoder encoder{nullptr};
  SharedProjector projector{nullptr};
  Colorizer colorizer{nullptr};
  Variant variant = Variant::kFull;
  double tau = 0.01;

  int64_t resolution() const { return prior.generator_spec.resolution; }
  int64_t num_classes() const { return prior.generator_spec.num_classes; }
  int64_t latent_dim() const { return prior.generator_spec.latent_dim; }
  void eval();
};

struct ForwardPass {
  torch::Tensor z;              // [N, d]
  torch::Tensor inversion;      // [N, 3, R, R] in [0, 1]; undefined for no_prior
  FeaturePyramid pyramid;       // raw generator features
  torch::Tensor f_gray, f_rgb;  // shared-space projections of the input and inversion
  CorrelationMatrix correlation;
  FeaturePyramid guidance;      // what the colorizer sees
  torch::Tensor ab;             // network-range ab [N, 2, R, R]
};

// Batched pipeline on network-range L [N, 1, R, R]. The encoder and generator
// run without gradients; projector and colorizer follow the autograd mode of
// the caller. `z` overrides the encoder when defined.
ForwardPass forward_pass(ColorizationModel& model, const torch::Tensor& l, const torch::Tensor& labels,
                         const torch::Tensor& z = {});

// Network-range L and ab -> RGB [N, 3, R, R] in [0, 1] (differentiable, clamped).
torch::Tensor compose_rgb(const torch::Tensor& l, const torch::Tensor& ab);
// Inference variant: chroma is pulled into the sRGB gamut first, so the
// output keeps the input luminance.
torch::Tensor compose_rgb_in_gamut(const torch::Tensor& l, const torch::Tensor& ab);

struct Colorization {
  RgbImage image;
  LatentCode code;
};

// Needs a gray plane at the model resolution and a valid class.
Colorization colorize(ColorizationModel& model, const GrayPlane& gray, int64_t class_label,
                      const std::optional<torch::Tensor>& z = std::nullopt);
// Batched inference, RGB [N, 3, R, R] in [0, 1].
torch::Tensor colorize_batch(ColorizationModel& model, const torch::Tensor& l, const torch::Tensor& labels);

// Encodes once, perturbs z, colorizes every perturbed code.
std::vector<Colorization> diversify(ColorizationModel& model, const GrayPlane& gray, int64_t class_label, double sigma,
                                    int64_t n, std::uint64_t seed);
// Colorizes z + alpha * direction for each alpha; z defaults to the encoding.
std::vector<Colorization> walk_colorize(ColorizationModel& model, const GrayPlane& gray, int64_t class_label,
                                        const torch::Tensor& direction, const std::vector<double>& alphas,
                                        const std::optional<torch::Tensor>& z = std::nullopt);

// Loads an RGB/gray PNG as the gray plane at `resolution` (bilinear resize when needed).
GrayPlane gray_from_image(const RgbImage& img, int64_t resolution);

}  // namespace gcp
