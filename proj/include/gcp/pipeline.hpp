#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gcp/dataset.hpp"
#include "gcp/discriminator_c.hpp"
#include "gcp/encoder.hpp"
#include "gcp/feature_net.hpp"
#include "gcp/metrics.hpp"
#include "gcp/model.hpp"
#include "gcp/prior_gan.hpp"
#include "gcp/stage2.hpp"

namespace gcp {

// Every tunable of a run. Persisted as flat `key = value` text; see
// TrainConfig::keys() for the schema.
struct TrainConfig {
  int64_t resolution = 64;
  int64_t latent_dim = 64;
  int64_t num_classes = 4;

  GeneratorSpec generator;
  DiscriminatorSpec prior_discriminator;
  PriorSchedule prior;
  FeatureNetSpec features;
  FeatureNetSchedule feature_schedule;
  EncoderSpec encoder;
  Stage1Schedule stage1;
  double stage1_epochs = 10;
  ProjectorSpec projector;
  ColorizerSpec colorizer;
  PatchDiscriminatorSpec patch;
  Stage2Schedule stage2;
  double stage2_epochs = 10;
  LossWeights weights;
  double tau = 0.01;
  Variant variant = Variant::kFull;
  DatasetSpec data;
  int64_t directions = 8;
  bool resume = false;

  // Desk-scale defaults for a 64x64, 4-class synthetic run.
  TrainConfig();

  // Sets one key; ConfigError on an unknown key or malformed value.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  // Propagates shared sizes into the per-module specs and validates them.
  void finalize();

  void write(const std::filesystem::path& path) const;
  // File values, then `overrides` on top.
  static TrainConfig load(const std::filesystem::path& path, const std::map<std::string, std::string>& overrides = {});
  static TrainConfig from_overrides(const std::map<std::string, std::string>& overrides);

  // Stage step budget: the explicit `stage*.steps` when >= 0, otherwise
  // ceil(epochs * n_train / batch).
  int64_t stage1_steps(int64_t n_train) const;
  int64_t stage2_steps(int64_t n_train) const;
};

// Run directory layout.
struct RunPaths {
  std::filesystem::path root;
  std::filesystem::path prior() const { return root / "prior"; }
  std::filesystem::path features() const { return root / "features"; }
  std::filesystem::path encoder() const { return root / "encoder"; }
  std::filesystem::path colorizer() const { return root / "colorizer"; }
  std::filesystem::path directions() const { return prior() / "directions.tensors"; }
  std::filesystem::path config() const { return root / "config.txt"; }
};

using Progress = std::function<void(const std::string&)>;

// Dataset directory loaded at the config resolution and split train/val.
DatasetSplit load_split(const TrainConfig& config, const std::filesystem::path& data_dir);

// Prior GAN, phi and latent directions into run/prior and run/features.
void train_gan_stage(const TrainConfig& config, const LabeledImages& train, const RunPaths& run,
                     const Progress& progress = {});

struct Stage1Result {
  Encoder encoder{nullptr};
  TrainingLog log;
};
// Encoder training against a frozen prior.
Stage1Result stage1_train(const TrainConfig& config, const LabeledImages& train, PriorGan& prior,
                          const Progress& progress = {}, const std::filesystem::path& state_path = {});
void train_encoder_stage(const TrainConfig& config, const LabeledImages& train, const RunPaths& run,
                         const Progress& progress = {});

struct Stage2Result {
  ColorizationModel model;
  PatchDiscriminator discriminator{nullptr};
  TrainingLog log;
};
// Builds projector, colorizer and patch discriminator from `config` and trains them.
Stage2Result stage2_train(const TrainConfig& config, const LabeledImages& train, PriorGan prior, Encoder encoder,
                          FeatureNet& phi, const Progress& progress = {}, const std::filesystem::path& state_path = {});
void train_colorizer_stage(const TrainConfig& config, const LabeledImages& train, const RunPaths& run,
                           const Progress& progress = {});

// run/colorizer (or another colorizer dir) plus the prior and encoder it was trained with.
void save_colorizer(const std::filesystem::path& dir, const ColorizationModel& model,
                    PatchDiscriminator& discriminator, const Metadata& extra = {});
ColorizationModel load_colorization_model(const RunPaths& run, const std::filesystem::path& colorizer_dir = {});

FeatureExtractor feature_extractor(FeatureNet& phi);

// Colorizes every image of `split`, writes pred/ and gt/ PNGs under out_dir and
// scores them with evaluate_pairs.
MetricReport evaluate(ColorizationModel& model, FeatureNet& phi, const LabeledImages& split,
                      const std::filesystem::path& out_dir);

// Trains the variant's colorizer under the config's seeds into
// run/ablation_<variant>, then evaluates it on the validation split.
MetricReport ablate(Variant variant, const TrainConfig& config, const DatasetSplit& split, const RunPaths& run,
                    const Progress& progress = {});

}  // namespace gcp
