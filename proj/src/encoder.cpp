#include "gcp/encoder.hpp"

#include <cmath>

#include "gcp/errors.hpp"
#include "gcp/optim_state.hpp"

namespace gcp {

namespace F = torch::nn::functional;

namespace {

class EncoderBlockImpl : public torch::nn::Module {
 public:
  EncoderBlockImpl(int64_t in, int64_t out, bool preactivation) : preactivation_(preactivation) {
    conv1_ = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1)));
    conv2_ = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(out, out, 3).padding(1)));
    shortcut_ = register_module("shortcut", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1)));
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto h = preactivation_ ? torch::relu(x) : x;
    h = F::avg_pool2d(conv2_(torch::relu(conv1_(h))), F::AvgPool2dFuncOptions(2));
    return h + F::avg_pool2d(shortcut_(x), F::AvgPool2dFuncOptions(2));
  }

 private:
  bool preactivation_;
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, shortcut_{nullptr};
};
TORCH_MODULE(EncoderBlock);

}  // namespace

void EncoderSpec::validate() const {
  if (widths.empty()) throw ConfigError("encoder needs at least one block");
  if ((resolution >> widths.size()) < 1) throw ConfigError("too many encoder blocks for the resolution");
  if (latent_dim <= 0 || num_classes <= 0 || embedding_dim <= 0 || hidden <= 0) {
    throw ConfigError("encoder sizes must be positive");
  }
}

void EncoderSpec::check_compatible(const GeneratorSpec& g) const {
  if (resolution != g.resolution || latent_dim != g.latent_dim || num_classes != g.num_classes) {
    throw ConfigError("encoder (R=" + std::to_string(resolution) + ", d_z=" + std::to_string(latent_dim) +
                      ", K=" + std::to_string(num_classes) + ") does not match generator (R=" +
                      std::to_string(g.resolution) + ", d_z=" + std::to_string(g.latent_dim) +
                      ", K=" + std::to_string(g.num_classes) + ")");
  }
}

void EncoderSpec::write(Metadata& md, const std::string& prefix) const {
  md.set(prefix + "resolution", resolution);
  md.set(prefix + "latent_dim", latent_dim);
  md.set(prefix + "num_classes", num_classes);
  md.set(prefix + "widths", widths);
  md.set(prefix + "embedding_dim", embedding_dim);
  md.set(prefix + "hidden", hidden);
  md.set(prefix + "seed", static_cast<int64_t>(seed));
}

EncoderSpec EncoderSpec::read(const Metadata& md, const std::string& prefix) {
  EncoderSpec s;
  s.resolution = md.get_int(prefix + "resolution");
  s.latent_dim = md.get_int(prefix + "latent_dim");
  s.num_classes = md.get_int(prefix + "num_classes");
  s.widths = md.get_ints(prefix + "widths");
  s.embedding_dim = md.get_int(prefix + "embedding_dim");
  s.hidden = md.get_int(prefix + "hidden");
  s.seed = static_cast<std::uint64_t>(md.get_int(prefix + "seed"));
  return s;
}

EncoderImpl::EncoderImpl(const EncoderSpec& spec) : spec_(spec) {
  spec_.validate();
  blocks_ = register_module("blocks", torch::nn::ModuleList());
  int64_t in = 1;
  for (size_t i = 0; i < spec_.widths.size(); ++i) {
    blocks_->push_back(EncoderBlock(in, spec_.widths[i], i > 0));
    in = spec_.widths[i];
  }
  embed_ = register_module("embed", torch::nn::Embedding(spec_.num_classes, spec_.embedding_dim));
  mlp_ = register_module("mlp", torch::nn::Sequential(torch::nn::Linear(in + spec_.embedding_dim, spec_.hidden),
                                                      torch::nn::ReLU(),
                                                      torch::nn::Linear(spec_.hidden, spec_.latent_dim)));
}

torch::Tensor EncoderImpl::forward(const torch::Tensor& l, const torch::Tensor& labels) {
  if (l.dim() != 4 || l.size(1) != 1 || l.size(2) != spec_.resolution || l.size(3) != spec_.resolution) {
    throw ValidationError("encoder expects gray input at " + std::to_string(spec_.resolution) + "x" +
                          std::to_string(spec_.resolution));
  }
  check_labels(labels, spec_.num_classes);
  auto h = l;
  for (auto& block : *blocks_) h = block->as<EncoderBlock>()->forward(h);
  auto pooled = torch::relu(h).mean({2, 3});
  return mlp_->forward(torch::cat({pooled, embed_(labels)}, 1));
}

Encoder make_encoder(const EncoderSpec& spec) {
  spec.validate();
  torch::manual_seed(spec.seed);
  return Encoder(spec);
}

void save_encoder(const std::filesystem::path& dir, Encoder& encoder, const Metadata& extra) {
  std::filesystem::create_directories(dir);
  Metadata md = extra;
  md.set("kind", "encoder");
  encoder->spec().write(md, "encoder.");
  md.write(dir / "metadata.txt");
  save_module(dir / "encoder.tensors", *encoder);
}

Encoder load_encoder(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw CheckpointError("missing encoder checkpoint " + dir.string());
  auto md = Metadata::read(dir / "metadata.txt");
  if (md.find("kind") != "encoder") throw CheckpointError(dir.string() + " is not an encoder checkpoint");
  auto encoder = make_encoder(EncoderSpec::read(md, "encoder."));
  load_module(dir / "encoder.tensors", *encoder);
  encoder->eval();
  return encoder;
}

LatentCode encode(Encoder& encoder, const GrayPlane& gray, int64_t class_label) {
  torch::NoGradGuard no_grad;
  auto l = normalize_l(gray.tensor()).unsqueeze(0).to(torch::kFloat32);
  auto z = encoder->forward(l, torch::tensor({class_label}));
  return {z.squeeze(0), class_label};
}

Inversion invert(Encoder& encoder, Generator& generator, const GrayPlane& gray, int64_t class_label) {
  auto code = encode(encoder, gray, class_label);
  auto [image, pyramid] = generate(generator, code);
  return {std::move(image), std::move(pyramid), std::move(code)};
}

torch::Tensor gray_input(const torch::Tensor& rgb) {
  torch::NoGradGuard no_grad;
  return normalize_l(rgb_to_lab_tensor(rgb.to(torch::kFloat64)).slice(1, 0, 1)).to(torch::kFloat32);
}

Stage1Trainer::Stage1Trainer(Encoder& encoder, PriorGan& prior, Stage1Schedule schedule, LossWeights weights)
    : encoder_(encoder),
      prior_(prior),
      schedule_(schedule),
      weights_(weights),
      opt_(encoder->parameters(), torch::optim::AdamOptions(schedule.lr).betas({schedule.beta1, schedule.beta2})) {
  encoder_->spec().check_compatible(prior_.generator_spec);
  weights_.validate();
  set_requires_grad(*prior_.generator, false);
  set_requires_grad(*prior_.discriminator, false);
  prior_.generator->eval();
  prior_.discriminator->eval();
}

void Stage1Trainer::check_frozen() const {
  if (any_requires_grad(*prior_.generator) || any_requires_grad(*prior_.discriminator)) {
    throw TrainingError("stage 1 found an unfrozen prior generator or discriminator");
  }
  if (prior_.generator->is_training() || prior_.discriminator->is_training()) {
    throw TrainingError("stage 1 needs the prior in evaluation mode");
  }
}

LossBreakdown Stage1Trainer::loss(const torch::Tensor& rgb, const torch::Tensor& labels) {
  check_frozen();
  auto z = encoder_->forward(gray_input(rgb), labels);
  auto x_inv = prior_.generator->forward(z, labels).image;
  auto& d = prior_.discriminator;
  auto ftr = inversion_feature_loss(d->last_features(x_inv, schedule_.feature_layers),
                                    d->last_features(rgb_to_signed(rgb), schedule_.feature_layers));
  return total_encoder_loss(ftr, inversion_reg_loss(z, schedule_.squared_reg), weights_);
}

LossBreakdown Stage1Trainer::step(const LabeledImages& data) {
  encoder_->train();
  set_learning_rate(opt_, linear_decay_lr(schedule_.lr, step_, schedule_.steps, schedule_.linear_decay));
  auto index = torch::tensor(batch_indices(data.size(), schedule_.batch_size, schedule_.seed, step_), torch::kInt64);
  opt_.zero_grad();
  auto out = loss(data.images.index_select(0, index), data.labels.index_select(0, index));
  out.total.backward();
  opt_.step();
  ++step_;
  if (!std::isfinite(out.value())) throw TrainingError("stage 1 diverged at step " + std::to_string(step_));
  return out;
}

TensorMap Stage1Trainer::state() {
  TensorMap out;
  for (auto& [k, v] : module_state(*encoder_)) out["encoder." + k] = v;
  for (auto& [k, v] : adam_state(opt_, "opt")) out[k] = v;
  out["trainer.step"] = torch::tensor({step_}, torch::kInt64);
  return out;
}

void Stage1Trainer::load_state(const TensorMap& state) {
  TensorMap es;
  for (const auto& [k, v] : state) {
    if (k.rfind("encoder.", 0) == 0) es[k.substr(8)] = v;
  }
  load_module_state(*encoder_, es, "stage 1 encoder");
  load_adam_state(opt_, state, "opt");
  auto it = state.find("trainer.step");
  if (it == state.end()) throw CheckpointError("stage 1 state lacks trainer.step");
  step_ = it->second.item<int64_t>();
}

}  // namespace gcp
