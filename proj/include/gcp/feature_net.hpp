#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "gcp/dataset.hpp"
#include "gcp/tensor_io.hpp"
#include "gcp/training_log.hpp"

namespace gcp {

// Fixed feature network phi used by the perceptual and contextual losses and
// as the FID extractor. Five conv blocks (conv-relu-conv-relu, 2x2 max pool
// between blocks); tap b is the second relu of block b, named "relu{b}_2".
struct FeatureNetSpec {
  int64_t num_classes = 4;
  int64_t hue_bins = 12;
  std::vector<int64_t> widths = {16, 32, 64, 64, 64};
  std::uint64_t seed = 3;

  void validate() const;
  void write(Metadata& md, const std::string& prefix) const;
  static FeatureNetSpec read(const Metadata& md, const std::string& prefix);
};

class FeatureNetImpl : public torch::nn::Module {
 public:
  explicit FeatureNetImpl(const FeatureNetSpec& spec);

  // All five taps for RGB input in [0, 1], shallow to deep.
  std::vector<torch::Tensor> features(const torch::Tensor& rgb);
  // Taps for 1-based block indices, e.g. {3, 4, 5}.
  std::vector<torch::Tensor> taps(const torch::Tensor& rgb, const std::vector<int>& blocks);
  // Spatially averaged relu5_2, [N, widths.back()]: the FID embedding.
  torch::Tensor embedding(const torch::Tensor& rgb);
  // Class logits and hue-bin logits.
  std::pair<torch::Tensor, torch::Tensor> heads(const torch::Tensor& rgb);

  const FeatureNetSpec& spec() const { return spec_; }
  std::string identity() const;

 private:
  FeatureNetSpec spec_;
  torch::nn::ModuleList blocks_;
  torch::nn::Linear class_head_{nullptr}, hue_head_{nullptr};
};
TORCH_MODULE(FeatureNet);

// Hue bin of the chroma-weighted mean ab vector of each image, [N] int64.
torch::Tensor hue_bin_targets(const torch::Tensor& rgb, int64_t bins);

FeatureNet make_feature_net(const FeatureNetSpec& spec);
void save_feature_net(const std::filesystem::path& dir, FeatureNet& net, const Metadata& extra = {});
FeatureNet load_feature_net(const std::filesystem::path& dir);

struct FeatureNetSchedule {
  int64_t steps = 600;
  int64_t batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  int64_t log_every = 100;
};

struct FeatureNetTrainResult {
  FeatureNet net{nullptr};
  TrainingLog log;
};

// Supervised training on class and hue-bin labels. The returned network is in
// evaluation mode with every parameter frozen.
FeatureNetTrainResult train_feature_net(const LabeledImages& data, const FeatureNetSpec& spec,
                                        const FeatureNetSchedule& schedule,
                                        const std::function<void(const std::string&)>& progress = {});

}  // namespace gcp
