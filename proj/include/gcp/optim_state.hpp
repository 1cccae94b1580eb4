#pragma once

#include <torch/torch.h>

#include "gcp/tensor_io.hpp"

namespace gcp {

// Adam moments and step counters, keyed "<prefix>.g<group>.p<index>.<field>".
TensorMap adam_state(torch::optim::Adam& optimizer, const std::string& prefix);
void load_adam_state(torch::optim::Adam& optimizer, const TensorMap& state, const std::string& prefix);

void set_learning_rate(torch::optim::Adam& optimizer, double lr);

// lr0 * (1 - step / total_steps): reaches lr0 / total_steps on the last step.
double linear_decay_lr(double lr0, int64_t step, int64_t total_steps, bool enabled);

void set_requires_grad(torch::nn::Module& module, bool requires_grad);
bool any_requires_grad(const torch::nn::Module& module);

}  // namespace gcp
