#include "gcp/stage2.hpp"

#include <cmath>

#include "gcp/errors.hpp"
#include "gcp/optim_state.hpp"

namespace gcp {

namespace {

std::vector<torch::Tensor> trainable(ColorizationModel& model) {
  auto params = model.colorizer->parameters();
  if (model.variant == Variant::kFull || model.variant == Variant::kImageGuidance) {
    for (auto& p : model.projector->parameters()) params.push_back(p);
  }
  return params;
}

void prefix_into(TensorMap& out, const std::string& prefix, const TensorMap& in) {
  for (const auto& [k, v] : in) out[prefix + k] = v;
}

TensorMap strip(const TensorMap& in, const std::string& prefix) {
  TensorMap out;
  for (const auto& [k, v] : in) {
    if (k.rfind(prefix, 0) == 0) out[k.substr(prefix.size())] = v;
  }
  return out;
}

}  // namespace

Stage2Trainer::Stage2Trainer(ColorizationModel& model, PatchDiscriminator& discriminator, FeatureNet& phi,
                             Stage2Schedule schedule, LossWeights weights)
    : model_(model),
      discriminator_(discriminator),
      phi_(phi),
      schedule_(schedule),
      weights_(weights),
      opt_c_(trainable(model), torch::optim::AdamOptions(schedule.lr).betas({schedule.beta1, schedule.beta2})),
      opt_d_(discriminator->parameters(),
             torch::optim::AdamOptions(schedule.lr_d).betas({schedule.beta1_d, schedule.beta2})) {
  weights_.validate();
  schedule_.contextual.validate();
  set_requires_grad(*model_.prior.generator, false);
  set_requires_grad(*model_.prior.discriminator, false);
  set_requires_grad(*model_.encoder, false);
  set_requires_grad(*phi_, false);
  model_.prior.generator->eval();
  model_.prior.discriminator->eval();
  model_.encoder->eval();
  phi_->eval();
}

void Stage2Trainer::check_frozen() const {
  if (any_requires_grad(*model_.prior.generator) || any_requires_grad(*model_.prior.discriminator) ||
      any_requires_grad(*model_.encoder) || any_requires_grad(*phi_)) {
    throw TrainingError("stage 2 found an unfrozen encoder, prior or feature network");
  }
}

LossBreakdown Stage2Trainer::colorizer_objective(const torch::Tensor& rgb, const torch::Tensor& labels,
                                                 torch::Tensor* lab_pred) {
  check_frozen();
  auto l = gray_input(rgb);
  auto fp = forward_pass(model_, l, labels);
  auto pred_rgb = compose_rgb(l, fp.ab);
  auto pred_lab = torch::cat({l, fp.ab}, 1);
  if (lab_pred != nullptr) *lab_pred = pred_lab;

  torch::Tensor dom, ctx;
  const bool uses_projectors = model_.variant == Variant::kFull || model_.variant == Variant::kImageGuidance;
  if (uses_projectors) dom = domain_loss(model_.projector, l, rgb_to_signed(rgb));
  if (model_.variant != Variant::kNoPrior) ctx = contextual_loss(phi_, pred_rgb, fp.inversion, schedule_.contextual);
  auto perc = perceptual_loss(phi_, pred_rgb, rgb);

  set_requires_grad(*discriminator_, false);
  auto adv = lsgan_g(discriminator_->forward(pred_lab));
  set_requires_grad(*discriminator_, true);
  return total_colorizer_loss(dom, perc, ctx, adv, weights_);
}

LossBreakdown Stage2Trainer::colorizer_loss(const torch::Tensor& rgb, const torch::Tensor& labels) {
  return colorizer_objective(rgb, labels, nullptr);
}

Stage2Trainer::StepResult Stage2Trainer::step(const LabeledImages& data) {
  model_.projector->train();
  model_.colorizer->train();
  discriminator_->train();
  set_learning_rate(opt_c_, linear_decay_lr(schedule_.lr, step_, schedule_.steps, schedule_.linear_decay));
  set_learning_rate(opt_d_, linear_decay_lr(schedule_.lr_d, step_, schedule_.steps, schedule_.linear_decay));
  auto index = torch::tensor(batch_indices(data.size(), schedule_.batch_size, schedule_.seed, step_), torch::kInt64);
  auto rgb = data.images.index_select(0, index);
  auto labels = data.labels.index_select(0, index);

  StepResult result;
  opt_c_.zero_grad();
  torch::Tensor pred_lab;
  result.colorizer = colorizer_objective(rgb, labels, &pred_lab);
  result.colorizer.total.backward();
  opt_c_.step();

  opt_d_.zero_grad();
  auto real_lab = lab_network_input(rgb_to_lab_tensor(rgb.to(torch::kFloat64))).to(torch::kFloat32);
  auto adv_d = lsgan_d(discriminator_->forward(real_lab), discriminator_->forward(pred_lab.detach()));
  result.discriminator = total_disc_loss(adv_d, weights_);
  result.discriminator.total.backward();
  opt_d_.step();

  ++step_;
  if (!std::isfinite(result.colorizer.value()) || !std::isfinite(result.discriminator.value())) {
    throw TrainingError("stage 2 diverged at step " + std::to_string(step_));
  }
  return result;
}

TensorMap Stage2Trainer::state() {
  TensorMap out;
  prefix_into(out, "projector.", module_state(*model_.projector));
  prefix_into(out, "colorizer.", module_state(*model_.colorizer));
  prefix_into(out, "discriminator_c.", module_state(*discriminator_));
  prefix_into(out, "", adam_state(opt_c_, "opt_c"));
  prefix_into(out, "", adam_state(opt_d_, "opt_d"));
  out["trainer.step"] = torch::tensor({step_}, torch::kInt64);
  return out;
}

void Stage2Trainer::load_state(const TensorMap& state) {
  load_module_state(*model_.projector, strip(state, "projector."), "stage 2 projector");
  load_module_state(*model_.colorizer, strip(state, "colorizer."), "stage 2 colorizer");
  load_module_state(*discriminator_, strip(state, "discriminator_c."), "stage 2 patch discriminator");
  load_adam_state(opt_c_, state, "opt_c");
  load_adam_state(opt_d_, state, "opt_d");
  auto it = state.find("trainer.step");
  if (it == state.end()) throw CheckpointError("stage 2 state lacks trainer.step");
  step_ = it->second.item<int64_t>();
}

}  // namespace gcp
