#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "gcp/alignment.hpp"
#include "gcp/colorspace.hpp"
#include "gcp/feature_net.hpp"
#include "gcp/prior_gan.hpp"
#include "gcp/tensor_io.hpp"

namespace gcp {

struct LossWeights {
  double inv_ftr = 1.0;
  double inv_reg = 0.0125;
  double perc = 1e-3;
  double adv = 1.0;
  double dom = 10.0;
  double ctx = 0.1;

  void validate() const;
  void write(Metadata& md, const std::string& prefix) const;
  static LossWeights read(const Metadata& md, const std::string& prefix);
};

struct LossTerm {
  std::string name;
  double raw = 0.0;       // unweighted component
  double weighted = 0.0;  // lambda * raw, as it enters the total
};

struct LossBreakdown {
  torch::Tensor total;  // differentiable scalar
  std::vector<LossTerm> terms;

  double value() const { return total.item<double>(); }
  const LossTerm& term(const std::string& name) const;
};

// Sum over layers of the mean absolute feature difference.
torch::Tensor inversion_feature_loss(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b);
// Discriminator-feature distance between two images over the last k layers.
double inversion_feature_loss(PriorDiscriminator& discriminator, const RgbImage& x_inv, const RgbImage& x,
                              int64_t k = 3);

// 0.5 * ||z||_2 per code (0.5 * ||z||_2^2 when `squared`), averaged over a
// [N, d] batch; a [d] vector is a batch of one. Gradient is 0 at z = 0.
torch::Tensor inversion_reg_loss(const torch::Tensor& z, bool squared = false);

// Least-squares adversarial objectives; expectations run over every score
// element of every scale.
torch::Tensor lsgan_d(const std::vector<torch::Tensor>& real_scores, const std::vector<torch::Tensor>& fake_scores);
torch::Tensor lsgan_g(const std::vector<torch::Tensor>& fake_scores);

// sqrt(mean((a - b)^2)) per sample, averaged over the batch; exactly 0 with a
// zero gradient for identical features.
torch::Tensor feature_l2_distance(const torch::Tensor& a, const torch::Tensor& b);
// feature_l2_distance at relu5_2 of phi; images [N, 3, H, W] in [0, 1].
torch::Tensor perceptual_loss(FeatureNet& phi, const torch::Tensor& a, const torch::Tensor& b);
double perceptual_loss(FeatureNet& phi, const RgbImage& a, const RgbImage& b);

// Mean absolute difference of two shared-space projections.
torch::Tensor domain_loss(const torch::Tensor& f_gray, const torch::Tensor& f_rgb);
// Projects network-range L [N, 1, R, R] and signed RGB [N, 3, R, R] first.
torch::Tensor domain_loss(SharedProjector& projector, const torch::Tensor& l, const torch::Tensor& rgb);
double domain_loss(SharedProjector& projector, const GrayPlane& gray, const RgbImage& rgb);

// Which index the affinities are normalized over. kReference normalizes, for
// every output position i, over the reference positions j (the original
// contextual-loss formulation); kOutput normalizes over i for every j.
enum class CxNormalization { kReference, kOutput };

struct ContextualOptions {
  double bandwidth = 0.5;  // h
  double epsilon = 1e-5;
  std::vector<int> layers = {3, 4, 5};
  std::vector<double> layer_weights = {2.0, 4.0, 8.0};
  CxNormalization normalization = CxNormalization::kReference;

  void validate() const;
};

// CX similarity per sample for feature maps [N, C, H, W] (or [N, C, P]); x is
// the output, y the reference. Result [N] in (0, 1].
torch::Tensor contextual_similarity(const torch::Tensor& x, const torch::Tensor& y, const ContextualOptions& opt);
// sum_l w_l * -log CX over already-extracted layers, averaged over the batch.
torch::Tensor contextual_loss(const std::vector<torch::Tensor>& pred_features,
                              const std::vector<torch::Tensor>& ref_features, const ContextualOptions& opt);
// Extracts phi taps for `opt.layers` from images [N, 3, H, W] in [0, 1].
torch::Tensor contextual_loss(FeatureNet& phi, const torch::Tensor& pred, const torch::Tensor& ref,
                              const ContextualOptions& opt = {});

// Weighted objectives. Undefined component tensors are treated as absent and
// contribute nothing (the no-prior ablation has no domain or contextual term).
LossBreakdown total_encoder_loss(const torch::Tensor& inv_ftr, const torch::Tensor& inv_reg, const LossWeights& w);
LossBreakdown total_colorizer_loss(const torch::Tensor& dom, const torch::Tensor& perc, const torch::Tensor& ctx,
                                   const torch::Tensor& adv, const LossWeights& w);
LossBreakdown total_disc_loss(const torch::Tensor& adv, const LossWeights& w);

}  // namespace gcp
