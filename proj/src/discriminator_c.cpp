#include "gcp/discriminator_c.hpp"

#include "gcp/errors.hpp"

namespace gcp {

namespace F = torch::nn::functional;

void PatchDiscriminatorSpec::validate() const {
  if (widths.size() != 4) throw ConfigError("patch discriminator needs 4 widths");
  if (num_scales < 1) throw ConfigError("patch discriminator needs at least one scale");
}

void PatchDiscriminatorSpec::write(Metadata& md, const std::string& prefix) const {
  md.set(prefix + "widths", widths);
  md.set(prefix + "num_scales", num_scales);
  md.set(prefix + "seed", static_cast<int64_t>(seed));
}

PatchDiscriminatorSpec PatchDiscriminatorSpec::read(const Metadata& md, const std::string& prefix) {
  PatchDiscriminatorSpec s;
  s.widths = md.get_ints(prefix + "widths");
  s.num_scales = md.get_int(prefix + "num_scales");
  s.seed = static_cast<std::uint64_t>(md.get_int(prefix + "seed"));
  return s;
}

PatchBodyImpl::PatchBodyImpl(const std::vector<int64_t>& widths) {
  const std::vector<int64_t> strides = {2, 2, 2, 1, 1};
  int64_t in = 3;
  for (size_t i = 0; i < 5; ++i) {
    const int64_t out = i < 4 ? widths[i] : 1;
    convs_.push_back(register_module("conv" + std::to_string(i), SpectralConv2d(in, out, 4, strides[i], 2)));
    in = out;
  }
}

torch::Tensor PatchBodyImpl::forward(const torch::Tensor& x) {
  auto h = x;
  for (size_t i = 0; i < convs_.size(); ++i) {
    h = convs_[i](h);
    if (i + 1 < convs_.size()) h = F::leaky_relu(h, F::LeakyReLUFuncOptions().negative_slope(0.2));
  }
  return h;
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(const PatchDiscriminatorSpec& spec) : spec_(spec) {
  spec_.validate();
  bodies_ = register_module("bodies", torch::nn::ModuleList());
  for (int64_t s = 0; s < spec_.num_scales; ++s) bodies_->push_back(PatchBody(spec_.widths));
}

std::vector<torch::Tensor> PatchDiscriminatorImpl::forward(const torch::Tensor& lab) {
  if (lab.dim() != 4 || lab.size(1) != 3) throw ShapeError("patch discriminator expects [N, 3, H, W] LAB input");
  std::vector<torch::Tensor> out;
  auto x = lab;
  for (size_t s = 0; s < bodies_->size(); ++s) {
    if (s > 0) x = F::avg_pool2d(x, F::AvgPool2dFuncOptions(2));
    out.push_back(bodies_[s]->as<PatchBody>()->forward(x));
  }
  return out;
}

std::vector<SpectralConv2d> PatchDiscriminatorImpl::convs() const {
  std::vector<SpectralConv2d> out;
  for (const auto& body : *bodies_) {
    for (auto& c : body->as<PatchBody>()->convs()) out.push_back(c);
  }
  return out;
}

PatchDiscriminator make_patch_discriminator(const PatchDiscriminatorSpec& spec) {
  spec.validate();
  torch::manual_seed(spec.seed);
  return PatchDiscriminator(spec);
}

torch::Tensor lab_network_input(const torch::Tensor& lab) {
  return torch::cat({normalize_l(lab.slice(-3, 0, 1)), normalize_ab(lab.slice(-3, 1, 3))}, -3);
}

torch::Tensor lab_network_input(const LabImage& img) { return lab_network_input(img.tensor()); }

std::vector<torch::Tensor> score(PatchDiscriminator& discriminator, const LabImage& img) {
  auto out = discriminator->forward(lab_network_input(img).unsqueeze(0).to(torch::kFloat32));
  for (auto& s : out) s = s.squeeze(0);
  return out;
}

}  // namespace gcp
