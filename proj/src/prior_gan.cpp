#include "gcp/prior_gan.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <sstream>

#include "gcp/errors.hpp"
#include "gcp/optim_state.hpp"

namespace gcp {

namespace F = torch::nn::functional;

namespace {

bool is_power_of_two(int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

torch::Tensor upsample2(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kNearest));
}

torch::Tensor avg_pool2(const torch::Tensor& x) { return F::avg_pool2d(x, F::AvgPool2dFuncOptions(2)); }

}  // namespace

void check_labels(const torch::Tensor& labels, int64_t num_classes) {
  if (labels.numel() == 0) return;
  const auto lo = labels.min().item<int64_t>();
  const auto hi = labels.max().item<int64_t>();
  if (lo < 0 || hi >= num_classes) {
    throw ValidationError("class label out of range [0, " + std::to_string(num_classes) + "): got " +
                          std::to_string(lo < 0 ? lo : hi));
  }
}

void GeneratorSpec::validate() const {
  if (resolution < 32 || !is_power_of_two(resolution)) {
    throw ConfigError("generator resolution must be a power of two >= 32, got " + std::to_string(resolution));
  }
  if (widths.size() < 3) throw ConfigError("generator needs at least 3 pyramid scales");
  if ((resolution >> (widths.size() - 1)) < 2) throw ConfigError("too many generator scales for the resolution");
  if (latent_dim <= 0 || num_classes <= 0 || embedding_dim <= 0) {
    throw ConfigError("generator latent_dim, num_classes and embedding_dim must be positive");
  }
  for (auto w : widths) {
    if (w <= 0) throw ConfigError("generator widths must be positive");
  }
}

std::vector<int64_t> GeneratorSpec::scales() const {
  std::vector<int64_t> out;
  for (size_t i = 0; i < widths.size(); ++i) out.push_back(resolution >> (widths.size() - 1 - i));
  return out;
}

void GeneratorSpec::write(Metadata& md, const std::string& prefix) const {
  md.set(prefix + "latent_dim", latent_dim);
  md.set(prefix + "num_classes", num_classes);
  md.set(prefix + "resolution", resolution);
  md.set(prefix + "widths", widths);
  md.set(prefix + "embedding_dim", embedding_dim);
  md.set(prefix + "attention_resolution", attention_resolution);
  md.set(prefix + "seed", static_cast<int64_t>(seed));
}

GeneratorSpec GeneratorSpec::read(const Metadata& md, const std::string& prefix) {
  GeneratorSpec s;
  s.latent_dim = md.get_int(prefix + "latent_dim");
  s.num_classes = md.get_int(prefix + "num_classes");
  s.resolution = md.get_int(prefix + "resolution");
  s.widths = md.get_ints(prefix + "widths");
  s.embedding_dim = md.get_int(prefix + "embedding_dim");
  s.attention_resolution = md.get_int(prefix + "attention_resolution");
  s.seed = static_cast<std::uint64_t>(md.get_int(prefix + "seed"));
  return s;
}

void DiscriminatorSpec::validate() const {
  if (resolution < 8 || !is_power_of_two(resolution)) {
    throw ConfigError("discriminator resolution must be a power of two >= 8");
  }
  if (widths.empty()) throw ConfigError("discriminator needs at least one block");
  if ((resolution >> widths.size()) < 1) throw ConfigError("too many discriminator blocks for the resolution");
  if (num_classes <= 0) throw ConfigError("discriminator num_classes must be positive");
}

void DiscriminatorSpec::write(Metadata& md, const std::string& prefix) const {
  md.set(prefix + "num_classes", num_classes);
  md.set(prefix + "resolution", resolution);
  md.set(prefix + "widths", widths);
  md.set(prefix + "seed", static_cast<int64_t>(seed));
}

DiscriminatorSpec DiscriminatorSpec::read(const Metadata& md, const std::string& prefix) {
  DiscriminatorSpec s;
  s.num_classes = md.get_int(prefix + "num_classes");
  s.resolution = md.get_int(prefix + "resolution");
  s.widths = md.get_ints(prefix + "widths");
  s.seed = static_cast<std::uint64_t>(md.get_int(prefix + "seed"));
  return s;
}

const torch::Tensor* FeaturePyramid::find(int64_t res) const {
  for (const auto& l : levels) {
    if (l.size(-1) == res) return &l;
  }
  return nullptr;
}

void FeaturePyramid::validate() const {
  if (levels.size() < 3) throw ValidationError("feature pyramid needs at least 3 scales");
  for (size_t i = 0; i < levels.size(); ++i) {
    if (levels[i].dim() != 4) throw ValidationError("pyramid levels must be [N, C, H, W]");
    if (i > 0 && levels[i].size(-1) != 2 * levels[i - 1].size(-1)) {
      throw ValidationError("pyramid resolutions must double between consecutive scales");
    }
    if (!torch::isfinite(levels[i]).all().item<bool>()) throw ValidationError("non-finite pyramid features");
  }
}

FeaturePyramid FeaturePyramid::detach() const {
  FeaturePyramid out;
  for (const auto& l : levels) out.levels.push_back(l.detach());
  return out;
}

FeaturePyramid FeaturePyramid::select(int64_t batch_index) const {
  FeaturePyramid out;
  for (const auto& l : levels) out.levels.push_back(l.slice(0, batch_index, batch_index + 1));
  return out;
}

GeneratorBlockImpl::GeneratorBlockImpl(int64_t in_channels, int64_t out_channels, int64_t cond_dim) {
  norm1_ = register_module("norm1", ConditionalNorm(in_channels, cond_dim));
  norm2_ = register_module("norm2", ConditionalNorm(out_channels, cond_dim));
  conv1_ = register_module("conv1", SpectralConv2d(in_channels, out_channels, 3, 1, 1));
  conv2_ = register_module("conv2", SpectralConv2d(out_channels, out_channels, 3, 1, 1));
  shortcut_ = register_module("shortcut", SpectralConv2d(in_channels, out_channels, 1, 1, 0));
}

torch::Tensor GeneratorBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& cond) {
  auto h = conv1_(upsample2(torch::relu(norm1_(x, cond))));
  h = conv2_(torch::relu(norm2_(h, cond)));
  return h + shortcut_(upsample2(x));
}

GeneratorImpl::GeneratorImpl(const GeneratorSpec& spec) : spec_(spec) {
  spec_.validate();
  const auto cond_dim = spec_.latent_dim + spec_.embedding_dim;
  const auto s0 = spec_.scales().front();
  embed_ = register_module("embed", torch::nn::Embedding(spec_.num_classes, spec_.embedding_dim));
  project_ = register_module("project", torch::nn::Linear(spec_.latent_dim, spec_.widths[0] * s0 * s0));
  blocks_ = register_module("blocks", torch::nn::ModuleList());
  const auto scales = spec_.scales();
  for (size_t i = 0; i + 1 < spec_.widths.size(); ++i) {
    blocks_->push_back(GeneratorBlock(spec_.widths[i], spec_.widths[i + 1], cond_dim));
    if (scales[i + 1] == spec_.attention_resolution) {
      attention_.push_back(register_module("attention" + std::to_string(i), SelfAttention(spec_.widths[i + 1])));
    } else {
      attention_.push_back(nullptr);
    }
  }
  out_norm_ = register_module("out_norm", torch::nn::GroupNorm(norm_groups(spec_.widths.back()), spec_.widths.back()));
  out_conv_ = register_module("out_conv", SpectralConv2d(spec_.widths.back(), 3, 3, 1, 1));
}

GeneratorOutput GeneratorImpl::forward(const torch::Tensor& z, const torch::Tensor& labels) {
  if (z.dim() != 2 || z.size(1) != spec_.latent_dim) {
    std::ostringstream os;
    os << "generator expects z of shape [N, " << spec_.latent_dim << "], got " << z.sizes();
    throw ShapeError(os.str());
  }
  check_labels(labels, spec_.num_classes);
  const auto s0 = spec_.scales().front();
  auto cond = torch::cat({z, embed_(labels)}, 1);
  auto x = project_(z).view({z.size(0), spec_.widths[0], s0, s0});
  GeneratorOutput out;
  out.pyramid.levels.push_back(x);
  for (size_t i = 0; i < blocks_->size(); ++i) {
    x = blocks_[i]->as<GeneratorBlock>()->forward(x, cond);
    if (attention_[i]) x = attention_[i](x);
    out.pyramid.levels.push_back(x);
  }
  out.image = torch::tanh(out_conv_(torch::relu(out_norm_(x))));
  return out;
}

DiscriminatorBlockImpl::DiscriminatorBlockImpl(int64_t in_channels, int64_t out_channels, bool preactivation)
    : preactivation_(preactivation) {
  conv1_ = register_module("conv1", SpectralConv2d(in_channels, out_channels, 3, 1, 1));
  conv2_ = register_module("conv2", SpectralConv2d(out_channels, out_channels, 3, 1, 1));
  shortcut_ = register_module("shortcut", SpectralConv2d(in_channels, out_channels, 1, 1, 0));
}

torch::Tensor DiscriminatorBlockImpl::forward(const torch::Tensor& x) {
  auto h = preactivation_ ? torch::relu(x) : x;
  h = avg_pool2(conv2_(torch::relu(conv1_(h))));
  auto skip = preactivation_ ? avg_pool2(shortcut_(x)) : shortcut_(avg_pool2(x));
  return h + skip;
}

PriorDiscriminatorImpl::PriorDiscriminatorImpl(const DiscriminatorSpec& spec) : spec_(spec) {
  spec_.validate();
  blocks_ = register_module("blocks", torch::nn::ModuleList());
  int64_t in = 3;
  for (size_t i = 0; i < spec_.widths.size(); ++i) {
    blocks_->push_back(DiscriminatorBlock(in, spec_.widths[i], i > 0));
    in = spec_.widths[i];
  }
  linear_ = register_module("linear", SpectralLinear(in, 1));
  embed_ = register_module("embed", torch::nn::Embedding(spec_.num_classes, in));
  torch::NoGradGuard no_grad;
  embed_->weight.normal_(0.0, 0.02);
}

std::vector<torch::Tensor> PriorDiscriminatorImpl::features(const torch::Tensor& x) {
  std::vector<torch::Tensor> out;
  auto h = x;
  for (auto& block : *blocks_) {
    h = block->as<DiscriminatorBlock>()->forward(h);
    out.push_back(h);
  }
  return out;
}

std::vector<torch::Tensor> PriorDiscriminatorImpl::last_features(const torch::Tensor& x, int64_t k) {
  if (k <= 0 || k > depth()) {
    throw ValidationError("requested " + std::to_string(k) + " discriminator layers, depth is " +
                          std::to_string(depth()));
  }
  auto all = features(x);
  return {all.end() - k, all.end()};
}

torch::Tensor PriorDiscriminatorImpl::head(const torch::Tensor& h, const torch::Tensor& labels) {
  auto pooled = torch::relu(h).sum({2, 3});
  return linear_(pooled).squeeze(1) + (embed_(labels) * pooled).sum(1);
}

torch::Tensor PriorDiscriminatorImpl::forward(const torch::Tensor& x, const torch::Tensor& labels) {
  check_labels(labels, spec_.num_classes);
  return head(features(x).back(), labels);
}

torch::Tensor sample_latent(std::uint64_t seed, int64_t latent_dim) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::randn({latent_dim}, gen, torch::kFloat32);
}

std::pair<RgbImage, FeaturePyramid> generate(Generator& generator, const LatentCode& code) {
  const auto& spec = generator->spec();
  if (!code.z.defined() || code.z.dim() != 1 || code.z.size(0) != spec.latent_dim) {
    throw ValidationError("latent code must have " + std::to_string(spec.latent_dim) + " entries");
  }
  if (!torch::isfinite(code.z).all().item<bool>()) throw ValidationError("latent code has non-finite entries");
  torch::NoGradGuard no_grad;
  auto out = generator->forward(code.z.unsqueeze(0).to(torch::kFloat32), torch::tensor({code.class_label}));
  return {RgbImage(signed_to_rgb(out.image.squeeze(0))), out.pyramid};
}

std::vector<torch::Tensor> discriminator_features(PriorDiscriminator& discriminator, const RgbImage& img,
                                                  int64_t k) {
  auto feats = discriminator->last_features(rgb_to_signed(img.tensor()).unsqueeze(0), k);
  for (auto& f : feats) f = f.squeeze(0);
  return feats;
}

PriorGan PriorGan::create(const GeneratorSpec& gspec, const DiscriminatorSpec& dspec) {
  gspec.validate();
  dspec.validate();
  if (gspec.resolution != dspec.resolution || gspec.num_classes != dspec.num_classes) {
    throw ConfigError("generator and discriminator disagree on resolution or class count");
  }
  PriorGan gan;
  gan.generator_spec = gspec;
  gan.discriminator_spec = dspec;
  torch::manual_seed(gspec.seed);
  gan.generator = Generator(gspec);
  torch::manual_seed(dspec.seed);
  gan.discriminator = PriorDiscriminator(dspec);
  return gan;
}

void save_prior(const std::filesystem::path& dir, const PriorGan& gan, const Metadata& extra) {
  std::filesystem::create_directories(dir);
  Metadata md = extra;
  md.set("kind", "prior_gan");
  gan.generator_spec.write(md, "generator.");
  gan.discriminator_spec.write(md, "discriminator.");
  md.write(dir / "metadata.txt");
  save_module(dir / "generator.tensors", *gan.generator);
  save_module(dir / "discriminator.tensors", *gan.discriminator);
}

PriorGan load_prior(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw CheckpointError("missing prior checkpoint " + dir.string());
  auto md = Metadata::read(dir / "metadata.txt");
  if (md.find("kind") != "prior_gan") throw CheckpointError(dir.string() + " is not a prior_gan checkpoint");
  GeneratorSpec gspec;
  DiscriminatorSpec dspec;
  try {
    gspec = GeneratorSpec::read(md, "generator.");
    dspec = DiscriminatorSpec::read(md, "discriminator.");
    gspec.validate();
    dspec.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(dir.string() + ": " + e.what());
  }
  auto gan = PriorGan::create(gspec, dspec);
  load_module(dir / "generator.tensors", *gan.generator);
  load_module(dir / "discriminator.tensors", *gan.discriminator);
  gan.generator->eval();
  gan.discriminator->eval();
  return gan;
}

void PriorSchedule::write(Metadata& md, const std::string& prefix) const {
  md.set(prefix + "steps", steps);
  md.set(prefix + "batch_size", batch_size);
  md.set(prefix + "lr_g", lr_g);
  md.set(prefix + "lr_d", lr_d);
  md.set(prefix + "beta1", beta1);
  md.set(prefix + "beta2", beta2);
  md.set(prefix + "linear_decay", static_cast<int64_t>(linear_decay));
  md.set(prefix + "seed", static_cast<int64_t>(seed));
}

PriorGanTrainer::PriorGanTrainer(PriorGan& gan, PriorSchedule schedule)
    : gan_(gan),
      schedule_(schedule),
      opt_g_(gan.generator->parameters(),
             torch::optim::AdamOptions(schedule.lr_g).betas({schedule.beta1, schedule.beta2})),
      opt_d_(gan.discriminator->parameters(),
             torch::optim::AdamOptions(schedule.lr_d).betas({schedule.beta1, schedule.beta2})) {}

PriorGanTrainer::StepLosses PriorGanTrainer::step(const LabeledImages& data) {
  auto& g = gan_.generator;
  auto& d = gan_.discriminator;
  g->train();
  d->train();
  set_learning_rate(opt_g_, linear_decay_lr(schedule_.lr_g, step_, schedule_.steps, schedule_.linear_decay));
  set_learning_rate(opt_d_, linear_decay_lr(schedule_.lr_d, step_, schedule_.steps, schedule_.linear_decay));

  auto idx = batch_indices(data.size(), schedule_.batch_size, schedule_.seed, step_);
  auto index = torch::tensor(idx, torch::kInt64);
  auto real = rgb_to_signed(data.images.index_select(0, index));
  auto labels = data.labels.index_select(0, index);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(schedule_.seed * 1000003ULL + static_cast<std::uint64_t>(step_));
  auto z = torch::randn({real.size(0), gan_.generator_spec.latent_dim}, gen, torch::kFloat32);

  StepLosses losses;
  // Discriminator update.
  set_requires_grad(*d, true);
  opt_d_.zero_grad();
  torch::Tensor fake;
  {
    torch::NoGradGuard no_grad;
    fake = g->forward(z, labels).image;
  }
  auto real_logits = d->forward(real, labels);
  auto fake_logits = d->forward(fake, labels);
  auto d_loss = torch::relu(1.0 - real_logits).mean() + torch::relu(1.0 + fake_logits).mean();
  d_loss.backward();
  opt_d_.step();

  // Generator update through a frozen discriminator.
  set_requires_grad(*d, false);
  opt_g_.zero_grad();
  auto g_loss = -d->forward(g->forward(z, labels).image, labels).mean();
  g_loss.backward();
  opt_g_.step();
  set_requires_grad(*d, true);

  losses.d_loss = d_loss.item<double>();
  losses.g_loss = g_loss.item<double>();
  losses.d_real = real_logits.mean().item<double>();
  losses.d_fake = fake_logits.mean().item<double>();
  ++step_;
  if (!std::isfinite(losses.d_loss) || !std::isfinite(losses.g_loss)) {
    throw TrainingError("prior GAN diverged at step " + std::to_string(step_) + " (d_loss " +
                        std::to_string(losses.d_loss) + ", g_loss " + std::to_string(losses.g_loss) + ")");
  }
  return losses;
}

TensorMap PriorGanTrainer::state() {
  TensorMap out;
  for (auto& [k, v] : module_state(*gan_.generator)) out["generator." + k] = v;
  for (auto& [k, v] : module_state(*gan_.discriminator)) out["discriminator." + k] = v;
  for (auto& [k, v] : adam_state(opt_g_, "opt_g")) out[k] = v;
  for (auto& [k, v] : adam_state(opt_d_, "opt_d")) out[k] = v;
  out["trainer.step"] = torch::tensor({step_}, torch::kInt64);
  return out;
}

void PriorGanTrainer::load_state(const TensorMap& state) {
  TensorMap gs, ds;
  for (const auto& [k, v] : state) {
    if (k.rfind("generator.", 0) == 0) gs[k.substr(10)] = v;
    if (k.rfind("discriminator.", 0) == 0) ds[k.substr(14)] = v;
  }
  load_module_state(*gan_.generator, gs, "prior trainer generator");
  load_module_state(*gan_.discriminator, ds, "prior trainer discriminator");
  load_adam_state(opt_g_, state, "opt_g");
  load_adam_state(opt_d_, state, "opt_d");
  auto it = state.find("trainer.step");
  if (it == state.end()) throw CheckpointError("prior trainer state lacks trainer.step");
  step_ = it->second.item<int64_t>();
}

PriorTrainResult train_prior_gan(const LabeledImages& data, const GeneratorSpec& gspec,
                                 const DiscriminatorSpec& dspec, const PriorSchedule& schedule,
                                 const ProgressFn& progress) {
  if (data.size() < 500) {
    throw DatasetError("prior GAN training needs at least 500 labeled images, got " + std::to_string(data.size()));
  }
  if (data.resolution() != gspec.resolution) {
    throw DatasetError("dataset resolution " + std::to_string(data.resolution()) + " differs from generator " +
                       std::to_string(gspec.resolution));
  }
  check_labels(data.labels, gspec.num_classes);
  PriorTrainResult result{PriorGan::create(gspec, dspec), TrainingLog({"step", "d_loss", "g_loss", "d_real", "d_fake"})};
  PriorGanTrainer trainer(result.gan, schedule);
  for (int64_t s = 0; s < schedule.steps; ++s) {
    auto l = trainer.step(data);
    result.log.append({static_cast<double>(s), l.d_loss, l.g_loss, l.d_real, l.d_fake});
    if (progress && schedule.log_every > 0 && (s % schedule.log_every == 0 || s + 1 == schedule.steps)) {
      std::ostringstream os;
      os << "prior step " << s << "/" << schedule.steps << " d_loss " << l.d_loss << " g_loss " << l.g_loss;
      progress(os.str());
    }
  }
  result.gan.generator->eval();
  result.gan.discriminator->eval();
  return result;
}

}  // namespace gcp
