#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <vector>

#include "gcp/colorspace.hpp"
#include "gcp/dataset.hpp"
#include "gcp/layers.hpp"
#include "gcp/tensor_io.hpp"
#include "gcp/training_log.hpp"

namespace gcp {

// Desk-scale class-conditional generator configuration. `widths` lists the
// channel count at every pyramid scale, coarse to fine; the coarsest scale is
// R / 2^(widths.size() - 1) and each following scale doubles up to R.
struct GeneratorSpec {
  int64_t latent_dim = 64;
  int64_t num_classes = 4;
  int64_t resolution = 64;
  std::vector<int64_t> widths = {256, 128, 64, 32};
  int64_t embedding_dim = 32;
  int64_t attention_resolution = 32;  // 0 disables self-attention
  std::uint64_t seed = 0;

  void validate() const;
  std::vector<int64_t> scales() const;
  void write(Metadata& md, const std::string& prefix) const;
  static GeneratorSpec read(const Metadata& md, const std::string& prefix);
};

// Prior discriminator: one down-sampling residual block per entry of `widths`.
struct DiscriminatorSpec {
  int64_t num_classes = 4;
  int64_t resolution = 64;
  std::vector<int64_t> widths = {64, 128, 256, 256};
  std::uint64_t seed = 1;

  void validate() const;
  void write(Metadata& md, const std::string& prefix) const;
  static DiscriminatorSpec read(const Metadata& md, const std::string& prefix);
};

struct LatentCode {
  torch::Tensor z;  // [latent_dim]
  int64_t class_label = 0;
};

// Generator activations, coarse to fine, each [N, C_s, H_s, W_s].
struct FeaturePyramid {
  std::vector<torch::Tensor> levels;

  size_t size() const { return levels.size(); }
  int64_t resolution(size_t i) const { return levels.at(i).size(-1); }
  // Level whose spatial size is `resolution`; nullptr when absent.
  const torch::Tensor* find(int64_t resolution) const;
  // >= 3 levels, resolutions doubling, all values finite.
  void validate() const;
  FeaturePyramid detach() const;
  FeaturePyramid select(int64_t batch_index) const;
};

struct GeneratorOutput {
  torch::Tensor image;  // [N, 3, R, R] in [-1, 1]
  FeaturePyramid pyramid;
};

class GeneratorBlockImpl : public torch::nn::Module {
 public:
  GeneratorBlockImpl(int64_t in_channels, int64_t out_channels, int64_t cond_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& cond);

 private:
  ConditionalNorm norm1_{nullptr}, norm2_{nullptr};
  SpectralConv2d conv1_{nullptr}, conv2_{nullptr}, shortcut_{nullptr};
};
TORCH_MODULE(GeneratorBlock);

// Latent projection to the coarsest grid, residual up-blocks with
// class-conditional normalization, optional self-attention, tanh RGB head.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorSpec& spec);

  GeneratorOutput forward(const torch::Tensor& z, const torch::Tensor& labels);

  // [widths[0] * s0 * s0, latent_dim]: the first map applied to z.
  torch::Tensor latent_projection_weight() const { return project_->weight; }
  const GeneratorSpec& spec() const { return spec_; }

 private:
  GeneratorSpec spec_;
  torch::nn::Embedding embed_{nullptr};
  torch::nn::Linear project_{nullptr};
  torch::nn::ModuleList blocks_;
  std::vector<SelfAttention> attention_;  // parallel to blocks_, null where absent
  torch::nn::GroupNorm out_norm_{nullptr};
  SpectralConv2d out_conv_{nullptr};
};
TORCH_MODULE(Generator);

class DiscriminatorBlockImpl : public torch::nn::Module {
 public:
  DiscriminatorBlockImpl(int64_t in_channels, int64_t out_channels, bool preactivation);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  bool preactivation_;
  SpectralConv2d conv1_{nullptr}, conv2_{nullptr}, shortcut_{nullptr};
};
TORCH_MODULE(DiscriminatorBlock);

// Residual down-stack with a projection head for the class label.
class PriorDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit PriorDiscriminatorImpl(const DiscriminatorSpec& spec);

  // Real/fake logits, [N]. `x` is RGB in [-1, 1].
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& labels);
  // Output of every block, shallow to deep.
  std::vector<torch::Tensor> features(const torch::Tensor& x);
  // The final `k` pre-logit feature maps, shallow to deep.
  std::vector<torch::Tensor> last_features(const torch::Tensor& x, int64_t k);

  int64_t depth() const { return static_cast<int64_t>(blocks_->size()); }
  const DiscriminatorSpec& spec() const { return spec_; }

 private:
  torch::Tensor head(const torch::Tensor& h, const torch::Tensor& labels);

  DiscriminatorSpec spec_;
  torch::nn::ModuleList blocks_;
  SpectralLinear linear_{nullptr};
  torch::nn::Embedding embed_{nullptr};
};
TORCH_MODULE(PriorDiscriminator);

// Standard-normal latent vector, deterministic in `seed`.
torch::Tensor sample_latent(std::uint64_t seed, int64_t latent_dim);

// Single-code generation without gradients. Throws ValidationError for an
// out-of-range class or a wrongly sized z.
std::pair<RgbImage, FeaturePyramid> generate(Generator& generator, const LatentCode& code);

std::vector<torch::Tensor> discriminator_features(PriorDiscriminator& discriminator, const RgbImage& img, int64_t k);

void check_labels(const torch::Tensor& labels, int64_t num_classes);

struct PriorGan {
  GeneratorSpec generator_spec;
  DiscriminatorSpec discriminator_spec;
  Generator generator{nullptr};
  PriorDiscriminator discriminator{nullptr};

  // Seeded construction: equal specs give bitwise-equal initial weights.
  static PriorGan create(const GeneratorSpec& gspec, const DiscriminatorSpec& dspec);
};

// Directory with metadata.txt, generator.tensors and discriminator.tensors.
void save_prior(const std::filesystem::path& dir, const PriorGan& gan, const Metadata& extra = {});
PriorGan load_prior(const std::filesystem::path& dir);

struct PriorSchedule {
  int64_t steps = 2000;
  int64_t batch_size = 16;
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  double beta1 = 0.0;
  double beta2 = 0.999;
  bool linear_decay = true;
  std::uint64_t seed = 0;
  int64_t log_every = 50;

  void write(Metadata& md, const std::string& prefix) const;
};

// Hinge-loss trainer, one discriminator and one generator update per step.
class PriorGanTrainer {
 public:
  PriorGanTrainer(PriorGan& gan, PriorSchedule schedule);

  struct StepLosses {
    double d_loss = 0.0;
    double g_loss = 0.0;
    double d_real = 0.0;
    double d_fake = 0.0;
  };
  StepLosses step(const LabeledImages& data);

  int64_t step_count() const { return step_; }
  TensorMap state();
  void load_state(const TensorMap& state);

 private:
  PriorGan& gan_;
  PriorSchedule schedule_;
  torch::optim::Adam opt_g_, opt_d_;
  int64_t step_ = 0;
};

struct PriorTrainResult {
  PriorGan gan;
  TrainingLog log;
};

using ProgressFn = std::function<void(const std::string&)>;

// Requires >= 500 labeled images. Aborts with TrainingError on a non-finite loss.
PriorTrainResult train_prior_gan(const LabeledImages& data, const GeneratorSpec& gspec,
                                 const DiscriminatorSpec& dspec, const PriorSchedule& schedule,
                                 const ProgressFn& progress = {});

}  // namespace gcp
