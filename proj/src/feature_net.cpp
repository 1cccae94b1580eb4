#include "gcp/feature_net.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "gcp/colorspace.hpp"
#include "gcp/errors.hpp"
#include "gcp/optim_state.hpp"

namespace gcp {

namespace F = torch::nn::functional;

namespace {

torch::nn::Sequential conv_block(int64_t in, int64_t out) {
  return torch::nn::Sequential(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1)),
                               torch::nn::ReLU(),
                               torch::nn::Conv2d(torch::nn::Conv2dOptions(out, out, 3).padding(1)),
                               torch::nn::ReLU());
}

torch::Tensor pool(const torch::Tensor& x) {
  return F::max_pool2d(x, F::MaxPool2dFuncOptions(2).ceil_mode(true));
}

}  // namespace

void FeatureNetSpec::validate() const {
  if (widths.size() != 5) throw ConfigError("feature network needs exactly 5 block widths");
  if (num_classes <= 0 || hue_bins <= 0) throw ConfigError("feature network heads need positive sizes");
}

void FeatureNetSpec::write(Metadata& md, const std::string& prefix) const {
  md.set(prefix + "num_classes", num_classes);
  md.set(prefix + "hue_bins", hue_bins);
  md.set(prefix + "widths", widths);
  md.set(prefix + "seed", static_cast<int64_t>(seed));
}

FeatureNetSpec FeatureNetSpec::read(const Metadata& md, const std::string& prefix) {
  FeatureNetSpec s;
  s.num_classes = md.get_int(prefix + "num_classes");
  s.hue_bins = md.get_int(prefix + "hue_bins");
  s.widths = md.get_ints(prefix + "widths");
  s.seed = static_cast<std::uint64_t>(md.get_int(prefix + "seed"));
  return s;
}

FeatureNetImpl::FeatureNetImpl(const FeatureNetSpec& spec) : spec_(spec) {
  spec_.validate();
  blocks_ = register_module("blocks", torch::nn::ModuleList());
  int64_t in = 3;
  for (auto w : spec_.widths) {
    blocks_->push_back(conv_block(in, w));
    in = w;
  }
  class_head_ = register_module("class_head", torch::nn::Linear(in, spec_.num_classes));
  hue_head_ = register_module("hue_head", torch::nn::Linear(in, spec_.hue_bins));
}

std::vector<torch::Tensor> FeatureNetImpl::features(const torch::Tensor& rgb) {
  std::vector<torch::Tensor> out;
  auto h = rgb_to_signed(rgb);
  for (size_t i = 0; i < blocks_->size(); ++i) {
    if (i > 0) h = pool(h);
    h = blocks_[i]->as<torch::nn::Sequential>()->forward(h);
    out.push_back(h);
  }
  return out;
}

std::vector<torch::Tensor> FeatureNetImpl::taps(const torch::Tensor& rgb, const std::vector<int>& blocks) {
  int deepest = 0;
  for (int b : blocks) {
    if (b < 1 || b > 5) throw ValidationError("feature tap relu" + std::to_string(b) + "_2 does not exist");
    deepest = std::max(deepest, b);
  }
  std::vector<torch::Tensor> all;
  auto h = rgb_to_signed(rgb);
  for (int i = 0; i < deepest; ++i) {
    if (i > 0) h = pool(h);
    h = blocks_[static_cast<size_t>(i)]->as<torch::nn::Sequential>()->forward(h);
    all.push_back(h);
  }
  std::vector<torch::Tensor> out;
  for (int b : blocks) out.push_back(all[static_cast<size_t>(b - 1)]);
  return out;
}

torch::Tensor FeatureNetImpl::embedding(const torch::Tensor& rgb) { return features(rgb).back().mean({2, 3}); }

std::pair<torch::Tensor, torch::Tensor> FeatureNetImpl::heads(const torch::Tensor& rgb) {
  auto e = embedding(rgb);
  return {class_head_(e), hue_head_(e)};
}

std::string FeatureNetImpl::identity() const {
  std::ostringstream os;
  os << "feature_net(widths=" << format_int_list(spec_.widths) << ",tap=relu5_2,pool=mean)";
  return os.str();
}

torch::Tensor hue_bin_targets(const torch::Tensor& rgb, int64_t bins) {
  torch::NoGradGuard no_grad;
  auto ab = rgb_to_lab_tensor(rgb.to(torch::kFloat64)).slice(1, 1, 3);
  auto chroma = ab.norm(2, 1, true);
  auto mean_ab = (ab * chroma).sum({2, 3}) / (chroma.sum({2, 3}) + 1e-9);
  auto angle = torch::atan2(mean_ab.select(1, 1), mean_ab.select(1, 0));
  auto unit = torch::remainder(angle, 2.0 * std::numbers::pi) / (2.0 * std::numbers::pi);
  return (unit * static_cast<double>(bins)).floor().clamp(0, bins - 1).to(torch::kInt64);
}

FeatureNet make_feature_net(const FeatureNetSpec& spec) {
  spec.validate();
  torch::manual_seed(spec.seed);
  return FeatureNet(spec);
}

void save_feature_net(const std::filesystem::path& dir, FeatureNet& net, const Metadata& extra) {
  std::filesystem::create_directories(dir);
  Metadata md = extra;
  md.set("kind", "feature_net");
  net->spec().write(md, "features.");
  md.write(dir / "metadata.txt");
  save_module(dir / "feature_net.tensors", *net);
}

FeatureNet load_feature_net(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw CheckpointError("missing feature network checkpoint " + dir.string());
  auto md = Metadata::read(dir / "metadata.txt");
  if (md.find("kind") != "feature_net") throw CheckpointError(dir.string() + " is not a feature_net checkpoint");
  auto net = make_feature_net(FeatureNetSpec::read(md, "features."));
  load_module(dir / "feature_net.tensors", *net);
  net->eval();
  set_requires_grad(*net, false);
  return net;
}

FeatureNetTrainResult train_feature_net(const LabeledImages& data, const FeatureNetSpec& spec,
                                        const FeatureNetSchedule& schedule,
                                        const std::function<void(const std::string&)>& progress) {
  if (data.size() == 0) throw DatasetError("feature network training needs images");
  FeatureNetTrainResult result{make_feature_net(spec), TrainingLog({"step", "loss", "class_acc", "hue_acc"})};
  auto& net = result.net;
  net->train();
  auto hue_targets = hue_bin_targets(data.images, spec.hue_bins);
  torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(schedule.lr));
  for (int64_t s = 0; s < schedule.steps; ++s) {
    set_learning_rate(opt, linear_decay_lr(schedule.lr, s, schedule.steps, true));
    auto index = torch::tensor(batch_indices(data.size(), schedule.batch_size, schedule.seed, s), torch::kInt64);
    auto x = data.images.index_select(0, index);
    auto y = data.labels.index_select(0, index);
    auto hy = hue_targets.index_select(0, index);
    opt.zero_grad();
    auto [class_logits, hue_logits] = net->heads(x);
    auto loss = F::cross_entropy(class_logits, y) + F::cross_entropy(hue_logits, hy);
    loss.backward();
    opt.step();
    const double l = loss.item<double>();
    if (!std::isfinite(l)) throw TrainingError("feature network diverged at step " + std::to_string(s));
    const double class_acc = (class_logits.argmax(1) == y).to(torch::kFloat64).mean().item<double>();
    const double hue_acc = (hue_logits.argmax(1) == hy).to(torch::kFloat64).mean().item<double>();
    result.log.append({static_cast<double>(s), l, class_acc, hue_acc});
    if (progress && schedule.log_every > 0 && (s % schedule.log_every == 0 || s + 1 == schedule.steps)) {
      std::ostringstream os;
      os << "features step " << s << "/" << schedule.steps << " loss " << l << " class_acc " << class_acc
         << " hue_acc " << hue_acc;
      progress(os.str());
    }
  }
  net->eval();
  set_requires_grad(*net, false);
  return result;
}

}  // namespace gcp
