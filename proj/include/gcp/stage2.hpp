#pragma once

#include <torch/torch.h>

#include "gcp/dataset.hpp"
#include "gcp/discriminator_c.hpp"
#include "gcp/feature_net.hpp"
#include "gcp/losses.hpp"
#include "gcp/model.hpp"
#include "gcp/tensor_io.hpp"

namespace gcp {

struct Stage2Schedule {
  int64_t steps = 2000;
  int64_t batch_size = 8;
  double lr = 1e-4;
  double lr_d = 1e-4;
  double beta1 = 0.9;    // colorizer and projectors
  double beta1_d = 0.0;  // patch discriminator
  double beta2 = 0.999;
  bool linear_decay = true;
  std::uint64_t seed = 0;
  int64_t log_every = 50;
  ContextualOptions contextual;
};

// Alternates one colorizer update (dom, perc, ctx, adv) and one patch
// discriminator update per batch. Colorizer, SPADE heads, projectors and the
// patch discriminator learn; encoder, prior and phi stay frozen.
class Stage2Trainer {
 public:
  Stage2Trainer(ColorizationModel& model, PatchDiscriminator& discriminator, FeatureNet& phi, Stage2Schedule schedule,
                LossWeights weights);

  struct StepResult {
    LossBreakdown colorizer;
    LossBreakdown discriminator;
  };

  // Colorizer objective for RGB images [N, 3, R, R] in [0, 1], no update.
  LossBreakdown colorizer_loss(const torch::Tensor& rgb, const torch::Tensor& labels);
  StepResult step(const LabeledImages& data);

  int64_t step_count() const { return step_; }
  TensorMap state();
  void load_state(const TensorMap& state);

 private:
  void check_frozen() const;
  LossBreakdown colorizer_objective(const torch::Tensor& rgb, const torch::Tensor& labels, torch::Tensor* lab_pred);

  ColorizationModel& model_;
  PatchDiscriminator& discriminator_;
  FeatureNet& phi_;
  Stage2Schedule schedule_;
  LossWeights weights_;
  torch::optim::Adam opt_c_, opt_d_;
  int64_t step_ = 0;
};

}  // namespace gcp
