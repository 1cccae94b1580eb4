#pragma once

// Small models and runs shared by the unit tests.

#include <filesystem>

#include "gcp/pipeline.hpp"

namespace tiny {

inline gcp::TrainConfig config(gcp::Variant variant = gcp::Variant::kFull) {
  auto c = gcp::TrainConfig::from_overrides({
      {"model.resolution", "32"},       {"model.latent_dim", "16"},      {"model.num_classes", "3"},
      {"prior.widths", "16,8,8"},       {"prior.embedding_dim", "8"},    {"prior.attention_resolution", "16"},
      {"prior.disc_widths", "8,16,16"}, {"prior.batch", "4"},           {"features.widths", "4,4,8,8,8"},
      {"encoder.widths", "8,8,16"},     {"encoder.embedding_dim", "8"},  {"encoder.hidden", "32"},
      {"projector.channels", "16"},     {"projector.widths", "8,8"},     {"colorizer.widths", "8,8,16"},
      {"colorizer.res_blocks", "2"},    {"colorizer.spade_hidden", "8"}, {"patch.widths", "8,16,16,16"},
      {"patch.num_scales", "2"},        {"stage1.batch", "4"},           {"stage2.batch", "4"},
      {"latent.directions", "4"},       {"stage1.lr", "1e-3"},           {"train.log_every", "0"},
  });
  c.variant = variant;
  c.finalize();
  return c;
}

inline gcp::LabeledImages data(int64_t n = 8, int64_t resolution = 32, int64_t classes = 3, uint64_t seed = 1) {
  torch::manual_seed(seed);
  gcp::LabeledImages d;
  d.images = torch::rand({n, 3, resolution, resolution});
  d.labels = torch::arange(n, torch::kInt64) % classes;
  for (int64_t i = 0; i < n; ++i) d.names.push_back("im" + std::to_string(i) + ".png");
  return d;
}

inline gcp::ColorizationModel model(const gcp::TrainConfig& c) {
  auto prior = gcp::PriorGan::create(c.generator, c.prior_discriminator);
  auto encoder = gcp::make_encoder(c.encoder);
  auto cspec = c.colorizer;
  cspec.guidance_channels = gcp::guidance_channels(c.generator, c.variant);
  gcp::ColorizationModel m{prior, encoder, gcp::make_projector(c.projector), gcp::make_colorizer(cspec), c.variant,
                           c.tau};
  m.eval();
  return m;
}

// Untrained but complete run directory: every checkpoint the CLI and service load.
inline gcp::RunPaths run(const std::filesystem::path& root, gcp::Variant variant = gcp::Variant::kFull) {
  std::filesystem::remove_all(root);
  auto c = config(variant);
  c.stage2.steps = 1;
  gcp::RunPaths paths{root};
  c.write(paths.config());
  auto prior = gcp::PriorGan::create(c.generator, c.prior_discriminator);
  gcp::save_prior(paths.prior(), prior);
  gcp::save_directions(paths.directions(), gcp::discover_directions(prior.generator, c.directions));
  auto phi = gcp::make_feature_net(c.features);
  phi->eval();
  gcp::save_feature_net(paths.features(), phi);
  auto encoder = gcp::make_encoder(c.encoder);
  gcp::save_encoder(paths.encoder(), encoder);
  auto result = gcp::stage2_train(c, data(), prior, encoder, phi);
  gcp::save_colorizer(paths.colorizer(), result.model, result.discriminator);
  return paths;
}

}  // namespace tiny
