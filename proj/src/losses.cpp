#include "gcp/losses.hpp"

#include "gcp/errors.hpp"

namespace gcp {

namespace {

torch::Tensor safe_sqrt(const torch::Tensor& sq) {
  auto positive = sq > 0;
  return torch::where(positive, torch::sqrt(torch::where(positive, sq, torch::ones_like(sq))),
                      torch::zeros_like(sq));
}

LossBreakdown compose(const std::vector<std::pair<std::string, std::pair<torch::Tensor, double>>>& parts) {
  LossBreakdown out;
  for (const auto& [name, part] : parts) {
    const auto& [value, weight] = part;
    LossTerm term{name, 0.0, 0.0};
    if (value.defined()) {
      auto weighted = value * weight;
      out.total = out.total.defined() ? out.total + weighted : weighted;
      term.raw = value.item<double>();
      term.weighted = weighted.item<double>();
    }
    out.terms.push_back(term);
  }
  if (!out.total.defined()) out.total = torch::zeros({});
  return out;
}

}  // namespace

void LossWeights::validate() const {
  for (double v : {inv_ftr, inv_reg, perc, adv, dom, ctx}) {
    if (!(v >= 0.0)) throw ConfigError("loss weights must be non-negative");
  }
}

void LossWeights::write(Metadata& md, const std::string& prefix) const {
  md.set(prefix + "inv_ftr", inv_ftr);
  md.set(prefix + "inv_reg", inv_reg);
  md.set(prefix + "perc", perc);
  md.set(prefix + "adv", adv);
  md.set(prefix + "dom", dom);
  md.set(prefix + "ctx", ctx);
}

LossWeights LossWeights::read(const Metadata& md, const std::string& prefix) {
  LossWeights w;
  w.inv_ftr = md.get_double(prefix + "inv_ftr");
  w.inv_reg = md.get_double(prefix + "inv_reg");
  w.perc = md.get_double(prefix + "perc");
  w.adv = md.get_double(prefix + "adv");
  w.dom = md.get_double(prefix + "dom");
  w.ctx = md.get_double(prefix + "ctx");
  return w;
}

const LossTerm& LossBreakdown::term(const std::string& name) const {
  for (const auto& t : terms) {
    if (t.name == name) return t;
  }
  throw ValidationError("loss breakdown has no term '" + name + "'");
}

torch::Tensor inversion_feature_loss(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("feature loss needs equally many, non-empty layers");
  torch::Tensor total;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].sizes() != b[i].sizes()) throw ShapeError("feature loss layer " + std::to_string(i) + " shapes differ");
    auto l = (a[i] - b[i]).abs().mean();
    total = total.defined() ? total + l : l;
  }
  return total;
}

double inversion_feature_loss(PriorDiscriminator& discriminator, const RgbImage& x_inv, const RgbImage& x, int64_t k) {
  torch::NoGradGuard no_grad;
  return inversion_feature_loss(discriminator_features(discriminator, x_inv, k),
                                discriminator_features(discriminator, x, k))
      .item<double>();
}

torch::Tensor inversion_reg_loss(const torch::Tensor& z, bool squared) {
  auto zb = z.dim() == 1 ? z.unsqueeze(0) : z;
  if (zb.dim() != 2) throw ShapeError("latent codes must be [d] or [N, d]");
  auto sq = zb.pow(2).sum(1);
  return 0.5 * (squared ? sq : safe_sqrt(sq)).mean();
}

torch::Tensor lsgan_d(const std::vector<torch::Tensor>& real_scores, const std::vector<torch::Tensor>& fake_scores) {
  if (real_scores.empty() || fake_scores.empty()) throw ShapeError("lsgan_d needs score maps");
  std::vector<torch::Tensor> r, f;
  for (const auto& s : real_scores) r.push_back(s.reshape({-1}));
  for (const auto& s : fake_scores) f.push_back(s.reshape({-1}));
  return (torch::cat(r) - 1.0).pow(2).mean() + torch::cat(f).pow(2).mean();
}

torch::Tensor lsgan_g(const std::vector<torch::Tensor>& fake_scores) {
  if (fake_scores.empty()) throw ShapeError("lsgan_g needs score maps");
  std::vector<torch::Tensor> f;
  for (const auto& s : fake_scores) f.push_back(s.reshape({-1}));
  return (torch::cat(f) - 1.0).pow(2).mean();
}

torch::Tensor feature_l2_distance(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) throw ShapeError("feature distance needs equal shapes");
  auto sq = (a - b).pow(2).reshape({a.size(0), -1}).mean(1);
  return safe_sqrt(sq).mean();
}

torch::Tensor perceptual_loss(FeatureNet& phi, const torch::Tensor& a, const torch::Tensor& b) {
  auto fa = phi->taps(a, {5}).front();
  auto fb = phi->taps(b, {5}).front();
  return feature_l2_distance(fa, fb);
}

double perceptual_loss(FeatureNet& phi, const RgbImage& a, const RgbImage& b) {
  torch::NoGradGuard no_grad;
  return perceptual_loss(phi, a.tensor().unsqueeze(0).to(torch::kFloat32), b.tensor().unsqueeze(0).to(torch::kFloat32))
      .item<double>();
}

torch::Tensor domain_loss(const torch::Tensor& f_gray, const torch::Tensor& f_rgb) {
  if (f_gray.sizes() != f_rgb.sizes()) throw ShapeError("domain loss needs equally shaped projections");
  return (f_gray - f_rgb).abs().mean();
}

torch::Tensor domain_loss(SharedProjector& projector, const torch::Tensor& l, const torch::Tensor& rgb) {
  return domain_loss(projector->project_gray(l), projector->project_rgb(rgb));
}

double domain_loss(SharedProjector& projector, const GrayPlane& gray, const RgbImage& rgb) {
  torch::NoGradGuard no_grad;
  return domain_loss(project_gray(projector, gray), project_rgb(projector, rgb)).item<double>();
}

void ContextualOptions::validate() const {
  if (!(bandwidth > 0.0) || !(epsilon > 0.0)) throw ConfigError("contextual bandwidth and epsilon must be positive");
  if (layers.size() != layer_weights.size() || layers.empty()) {
    throw ConfigError("contextual layers and weights must pair up");
  }
}

torch::Tensor contextual_similarity(const torch::Tensor& x, const torch::Tensor& y, const ContextualOptions& opt) {
  if (x.dim() < 3 || x.sizes() != y.sizes()) throw ShapeError("contextual similarity needs equal [N, C, ...] maps");
  const auto n = x.size(0);
  const auto c = x.size(1);
  auto xs = x.reshape({n, c, -1});
  auto ys = y.reshape({n, c, -1});
  auto mu = ys.mean(2, true);
  auto unit = [](const torch::Tensor& t) { return t / t.norm(2, 1, true).clamp_min(1e-8); };
  auto xn = unit(xs - mu);
  auto yn = unit(ys - mu);
  // d[n, i, j]: cosine distance between output position i and reference position j.
  auto d = 1.0 - torch::bmm(xn.transpose(1, 2), yn);
  auto d_rel = d / (std::get<0>(d.min(2, true)) + opt.epsilon);
  auto logits = (1.0 - d_rel) / opt.bandwidth;
  auto a = opt.normalization == CxNormalization::kReference ? torch::softmax(logits, 2) : torch::softmax(logits, 1);
  return std::get<0>(a.max(1)).mean(1);
}

torch::Tensor contextual_loss(const std::vector<torch::Tensor>& pred_features,
                              const std::vector<torch::Tensor>& ref_features, const ContextualOptions& opt) {
  opt.validate();
  if (pred_features.size() != opt.layers.size() || ref_features.size() != opt.layers.size()) {
    throw ShapeError("contextual loss needs one feature map per configured layer");
  }
  torch::Tensor total;
  for (size_t l = 0; l < pred_features.size(); ++l) {
    auto cx = contextual_similarity(pred_features[l], ref_features[l], opt);
    auto term = -torch::log(cx.clamp_min(1e-12)) * opt.layer_weights[l];
    total = total.defined() ? total + term : term;
  }
  return total.mean();
}

torch::Tensor contextual_loss(FeatureNet& phi, const torch::Tensor& pred, const torch::Tensor& ref,
                              const ContextualOptions& opt) {
  return contextual_loss(phi->taps(pred, opt.layers), phi->taps(ref, opt.layers), opt);
}

LossBreakdown total_encoder_loss(const torch::Tensor& inv_ftr, const torch::Tensor& inv_reg, const LossWeights& w) {
  return compose({{"inv_ftr", {inv_ftr, w.inv_ftr}}, {"inv_reg", {inv_reg, w.inv_reg}}});
}

LossBreakdown total_colorizer_loss(const torch::Tensor& dom, const torch::Tensor& perc, const torch::Tensor& ctx,
                                   const torch::Tensor& adv, const LossWeights& w) {
  return compose({{"dom", {dom, w.dom}}, {"perc", {perc, w.perc}}, {"ctx", {ctx, w.ctx}}, {"adv", {adv, w.adv}}});
}

LossBreakdown total_disc_loss(const torch::Tensor& adv, const LossWeights& w) {
  return compose({{"adv_d", {adv, w.adv}}});
}

}  // namespace gcp
