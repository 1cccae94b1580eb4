#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <vector>

#include "gcp/colorspace.hpp"
#include "gcp/dataset.hpp"
#include "gcp/losses.hpp"
#include "gcp/prior_gan.hpp"
#include "gcp/tensor_io.hpp"
#include "gcp/training_log.hpp"

namespace gcp {

// Down-stack shaped like the prior discriminator (plain convs), global average
// pool, class embedding concatenated once, MLP to z.
struct EncoderSpec {
  int64_t resolution = 64;
  int64_t latent_dim = 64;
  int64_t num_classes = 4;
  std::vector<int64_t> widths = {32, 64, 128, 128};
  int64_t embedding_dim = 32;
  int64_t hidden = 256;
  std::uint64_t seed = 2;

  void validate() const;
  // Throws ConfigError unless resolution, latent_dim and num_classes match.
  void check_compatible(const GeneratorSpec& g) const;
  void write(Metadata& md, const std::string& prefix) const;
  static EncoderSpec read(const Metadata& md, const std::string& prefix);
};

class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const EncoderSpec& spec);

  // Network-range L [N, 1, R, R] and labels [N] -> z [N, latent_dim].
  torch::Tensor forward(const torch::Tensor& l, const torch::Tensor& labels);

  const EncoderSpec& spec() const { return spec_; }

 private:
  EncoderSpec spec_;
  torch::nn::ModuleList blocks_;
  torch::nn::Embedding embed_{nullptr};
  torch::nn::Sequential mlp_{nullptr};
};
TORCH_MODULE(Encoder);

Encoder make_encoder(const EncoderSpec& spec);
void save_encoder(const std::filesystem::path& dir, Encoder& encoder, const Metadata& extra = {});
Encoder load_encoder(const std::filesystem::path& dir);

// Deterministic, gradient-free. Throws ValidationError on a resolution
// mismatch or an out-of-range class.
LatentCode encode(Encoder& encoder, const GrayPlane& gray, int64_t class_label);

struct Inversion {
  RgbImage image;  // x_inv
  FeaturePyramid pyramid;
  LatentCode code;
};
Inversion invert(Encoder& encoder, Generator& generator, const GrayPlane& gray, int64_t class_label);

// Network-range L of RGB images in [0, 1], [N, 1, H, W].
torch::Tensor gray_input(const torch::Tensor& rgb);

struct Stage1Schedule {
  int64_t steps = 2000;
  int64_t batch_size = 8;
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  bool linear_decay = true;
  int64_t feature_layers = 3;
  bool squared_reg = false;
  std::uint64_t seed = 0;
  int64_t log_every = 50;
};

// Trains the encoder against a frozen prior with
// inv_ftr * L_inv_ftr + inv_reg * L_inv_reg.
class Stage1Trainer {
 public:
  Stage1Trainer(Encoder& encoder, PriorGan& prior, Stage1Schedule schedule, LossWeights weights);

  // Loss for a batch of RGB images [N, 3, R, R] in [0, 1] without updating.
  LossBreakdown loss(const torch::Tensor& rgb, const torch::Tensor& labels);
  LossBreakdown step(const LabeledImages& data);

  int64_t step_count() const { return step_; }
  TensorMap state();
  void load_state(const TensorMap& state);

 private:
  // TrainingError when any prior parameter requires grad.
  void check_frozen() const;

  Encoder& encoder_;
  PriorGan& prior_;
  Stage1Schedule schedule_;
  LossWeights weights_;
  torch::optim::Adam opt_;
  int64_t step_ = 0;
};

}  // namespace gcp
