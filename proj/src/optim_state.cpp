#include "gcp/optim_state.hpp"

#include "gcp/errors.hpp"

namespace gcp {

namespace {

std::string key(const std::string& prefix, size_t g, size_t p, const char* field) {
  return prefix + ".g" + std::to_string(g) + ".p" + std::to_string(p) + "." + field;
}

}  // namespace

TensorMap adam_state(torch::optim::Adam& optimizer, const std::string& prefix) {
  TensorMap out;
  auto& groups = optimizer.param_groups();
  for (size_t g = 0; g < groups.size(); ++g) {
    auto& params = groups[g].params();
    for (size_t p = 0; p < params.size(); ++p) {
      auto it = optimizer.state().find(params[p].unsafeGetTensorImpl());
      if (it == optimizer.state().end()) continue;
      auto& st = static_cast<torch::optim::AdamParamState&>(*it->second);
      out[key(prefix, g, p, "step")] = torch::tensor({st.step()}, torch::kInt64);
      out[key(prefix, g, p, "exp_avg")] = st.exp_avg().clone();
      out[key(prefix, g, p, "exp_avg_sq")] = st.exp_avg_sq().clone();
    }
  }
  return out;
}

void load_adam_state(torch::optim::Adam& optimizer, const TensorMap& state, const std::string& prefix) {
  auto& groups = optimizer.param_groups();
  for (size_t g = 0; g < groups.size(); ++g) {
    auto& params = groups[g].params();
    for (size_t p = 0; p < params.size(); ++p) {
      auto step_it = state.find(key(prefix, g, p, "step"));
      if (step_it == state.end()) continue;
      auto avg = state.find(key(prefix, g, p, "exp_avg"));
      auto avg_sq = state.find(key(prefix, g, p, "exp_avg_sq"));
      if (avg == state.end() || avg_sq == state.end()) {
        throw CheckpointError("optimizer state for " + key(prefix, g, p, "*") + " is incomplete");
      }
      if (avg->second.sizes() != params[p].sizes()) {
        throw CheckpointError("optimizer state shape mismatch for " + key(prefix, g, p, "exp_avg"));
      }
      auto st = std::make_unique<torch::optim::AdamParamState>();
      st->step(step_it->second.item<int64_t>());
      st->exp_avg(avg->second.clone().to(params[p].scalar_type()));
      st->exp_avg_sq(avg_sq->second.clone().to(params[p].scalar_type()));
      optimizer.state()[params[p].unsafeGetTensorImpl()] = std::move(st);
    }
  }
}

void set_learning_rate(torch::optim::Adam& optimizer, double lr) {
  for (auto& group : optimizer.param_groups()) {
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  }
}

double linear_decay_lr(double lr0, int64_t step, int64_t total_steps, bool enabled) {
  if (!enabled || total_steps <= 0) return lr0;
  return lr0 * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
}

void set_requires_grad(torch::nn::Module& module, bool requires_grad) {
  for (auto& p : module.parameters(true)) p.set_requires_grad(requires_grad);
}

bool any_requires_grad(const torch::nn::Module& module) {
  for (const auto& p : module.parameters(true)) {
    if (p.requires_grad()) return true;
  }
  return false;
}

}  // namespace gcp
