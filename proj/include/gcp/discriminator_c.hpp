#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "gcp/colorspace.hpp"
#include "gcp/layers.hpp"
#include "gcp/tensor_io.hpp"

namespace gcp {

// Multi-scale patch discriminator over network-range LAB images. Each scale
// has its own spectrally normalized body: 4x4 convs with strides 2, 2, 2, 1
// and a stride-1 score conv, LeakyReLU(0.2) in between.
struct PatchDiscriminatorSpec {
  std::vector<int64_t> widths = {32, 64, 128, 256};
  int64_t num_scales = 3;
  std::uint64_t seed = 6;

  void validate() const;
  void write(Metadata& md, const std::string& prefix) const;
  static PatchDiscriminatorSpec read(const Metadata& md, const std::string& prefix);
};

class PatchBodyImpl : public torch::nn::Module {
 public:
  explicit PatchBodyImpl(const std::vector<int64_t>& widths);
  torch::Tensor forward(const torch::Tensor& x);
  std::vector<SpectralConv2d> convs() const { return convs_; }

 private:
  std::vector<SpectralConv2d> convs_;
};
TORCH_MODULE(PatchBody);

class PatchDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit PatchDiscriminatorImpl(const PatchDiscriminatorSpec& spec);

  // [N, 3, H, W] network-range LAB -> one score map per scale (full, 1/2, 1/4, ...).
  std::vector<torch::Tensor> forward(const torch::Tensor& lab);
  std::vector<SpectralConv2d> convs() const;

  const PatchDiscriminatorSpec& spec() const { return spec_; }

 private:
  PatchDiscriminatorSpec spec_;
  torch::nn::ModuleList bodies_;
};
TORCH_MODULE(PatchDiscriminator);

PatchDiscriminator make_patch_discriminator(const PatchDiscriminatorSpec& spec);

// Network-range [3, H, W] tensor of a LabImage: L/50 - 1, ab/128.
torch::Tensor lab_network_input(const LabImage& img);
// The same for batched LAB tensors [N, 3, H, W].
torch::Tensor lab_network_input(const torch::Tensor& lab);

std::vector<torch::Tensor> score(PatchDiscriminator& discriminator, const LabImage& img);

}  // namespace gcp
