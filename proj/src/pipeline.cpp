#include "gcp/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "gcp/errors.hpp"
#include "gcp/image_io.hpp"
#include "gcp/latent_control.hpp"
#include "gcp/optim_state.hpp"

namespace gcp {

namespace {

int64_t to_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    auto out = std::stoll(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected an integer, got '" + v + "'");
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    auto out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::vector<int64_t> to_ints(const std::string& key, const std::string& v) {
  try {
    return parse_int_list(v);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a comma-separated integer list, got '" + v + "'");
  }
}

std::string str(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  std::string key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define GCP_INT(name, member)                                                                         \
  Field{name, [](TrainConfig& c, const std::string& v) { c.member = to_int(name, v); },              \
        [](const TrainConfig& c) { return std::to_string(c.member); }}
#define GCP_U64(name, member)                                                                         \
  Field{name, [](TrainConfig& c, const std::string& v) { c.member = static_cast<std::uint64_t>(to_int(name, v)); }, \
        [](const TrainConfig& c) { return std::to_string(c.member); }}
#define GCP_DOUBLE(name, member)                                                                      \
  Field{name, [](TrainConfig& c, const std::string& v) { c.member = to_double(name, v); },           \
        [](const TrainConfig& c) { return str(c.member); }}
#define GCP_BOOL(name, member)                                                                        \
  Field{name, [](TrainConfig& c, const std::string& v) { c.member = to_bool(name, v); },             \
        [](const TrainConfig& c) { return std::string(c.member ? "1" : "0"); }}
#define GCP_INTS(name, member)                                                                        \
  Field{name, [](TrainConfig& c, const std::string& v) { c.member = to_ints(name, v); },             \
        [](const TrainConfig& c) { return format_int_list(c.member); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      GCP_INT("model.resolution", resolution),
      GCP_INT("model.latent_dim", latent_dim),
      GCP_INT("model.num_classes", num_classes),
      GCP_INTS("prior.widths", generator.widths),
      GCP_INT("prior.embedding_dim", generator.embedding_dim),
      GCP_INT("prior.attention_resolution", generator.attention_resolution),
      GCP_U64("prior.seed", generator.seed),
      GCP_INTS("prior.disc_widths", prior_discriminator.widths),
      GCP_U64("prior.disc_seed", prior_discriminator.seed),
      GCP_INT("prior.steps", prior.steps),
      GCP_INT("prior.batch", prior.batch_size),
      GCP_DOUBLE("prior.lr_g", prior.lr_g),
      GCP_DOUBLE("prior.lr_d", prior.lr_d),
      GCP_DOUBLE("prior.beta1", prior.beta1),
      GCP_DOUBLE("prior.beta2", prior.beta2),
      GCP_BOOL("prior.linear_decay", prior.linear_decay),
      GCP_U64("prior.train_seed", prior.seed),
      GCP_INTS("features.widths", features.widths),
      GCP_INT("features.hue_bins", features.hue_bins),
      GCP_U64("features.seed", features.seed),
      GCP_INT("features.steps", feature_schedule.steps),
      GCP_INT("features.batch", feature_schedule.batch_size),
      GCP_DOUBLE("features.lr", feature_schedule.lr),
      GCP_U64("features.train_seed", feature_schedule.seed),
      GCP_INTS("encoder.widths", encoder.widths),
      GCP_INT("encoder.embedding_dim", encoder.embedding_dim),
      GCP_INT("encoder.hidden", encoder.hidden),
      GCP_U64("encoder.seed", encoder.seed),
      GCP_DOUBLE("stage1.lr", stage1.lr),
      GCP_DOUBLE("stage1.epochs", stage1_epochs),
      GCP_INT("stage1.steps", stage1.steps),
      GCP_INT("stage1.batch", stage1.batch_size),
      GCP_DOUBLE("stage1.beta1", stage1.beta1),
      GCP_DOUBLE("stage1.beta2", stage1.beta2),
      GCP_BOOL("stage1.linear_decay", stage1.linear_decay),
      GCP_INT("stage1.feature_layers", stage1.feature_layers),
      GCP_BOOL("stage1.squared_reg", stage1.squared_reg),
      GCP_U64("stage1.seed", stage1.seed),
      GCP_INT("projector.channels", projector.channels),
      GCP_INTS("projector.widths", projector.widths),
      GCP_U64("projector.seed", projector.seed),
      GCP_INTS("colorizer.widths", colorizer.widths),
      GCP_INT("colorizer.res_blocks", colorizer.res_blocks),
      GCP_INT("colorizer.spade_hidden", colorizer.spade_hidden),
      GCP_U64("colorizer.seed", colorizer.seed),
      GCP_INTS("patch.widths", patch.widths),
      GCP_INT("patch.num_scales", patch.num_scales),
      GCP_U64("patch.seed", patch.seed),
      GCP_DOUBLE("stage2.lr", stage2.lr),
      GCP_DOUBLE("stage2.lr_d", stage2.lr_d),
      GCP_DOUBLE("stage2.epochs", stage2_epochs),
      GCP_INT("stage2.steps", stage2.steps),
      GCP_INT("stage2.batch", stage2.batch_size),
      GCP_DOUBLE("stage2.beta1", stage2.beta1),
      GCP_DOUBLE("stage2.beta1_d", stage2.beta1_d),
      GCP_DOUBLE("stage2.beta2", stage2.beta2),
      GCP_BOOL("stage2.linear_decay", stage2.linear_decay),
      GCP_U64("stage2.seed", stage2.seed),
      GCP_DOUBLE("weights.inv_ftr", weights.inv_ftr),
      GCP_DOUBLE("weights.inv_reg", weights.inv_reg),
      GCP_DOUBLE("weights.perc", weights.perc),
      GCP_DOUBLE("weights.adv", weights.adv),
      GCP_DOUBLE("weights.dom", weights.dom),
      GCP_DOUBLE("weights.ctx", weights.ctx),
      GCP_DOUBLE("loss.cx_bandwidth", stage2.contextual.bandwidth),
      GCP_DOUBLE("loss.cx_epsilon", stage2.contextual.epsilon),
      Field{"loss.cx_normalization",
            [](TrainConfig& c, const std::string& v) {
              if (v == "reference") {
                c.stage2.contextual.normalization = CxNormalization::kReference;
              } else if (v == "output") {
                c.stage2.contextual.normalization = CxNormalization::kOutput;
              } else {
                throw ConfigError("loss.cx_normalization: expected reference or output, got '" + v + "'");
              }
            },
            [](const TrainConfig& c) {
              return std::string(c.stage2.contextual.normalization == CxNormalization::kReference ? "reference"
                                                                                                 : "output");
            }},
      GCP_DOUBLE("alignment.tau", tau),
      Field{"model.variant", [](TrainConfig& c, const std::string& v) { c.variant = parse_variant(v); },
            [](const TrainConfig& c) { return variant_name(c.variant); }},
      GCP_INT("data.n_images", data.n_images),
      GCP_DOUBLE("data.val_fraction", data.val_fraction),
      GCP_U64("data.seed", data.seed),
      GCP_INT("latent.directions", directions),
      GCP_BOOL("train.resume", resume),
      Field{"train.log_every",
            [](TrainConfig& c, const std::string& v) {
              const auto n = to_int("train.log_every", v);
              c.prior.log_every = n;
              c.feature_schedule.log_every = n;
              c.stage1.log_every = n;
              c.stage2.log_every = n;
            },
            [](const TrainConfig& c) { return std::to_string(c.stage1.log_every); }},
  };
  return table;
}

#undef GCP_INT
#undef GCP_U64
#undef GCP_DOUBLE
#undef GCP_BOOL
#undef GCP_INTS

const Field& field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

int64_t epoch_steps(double epochs, int64_t n_train, int64_t batch) {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  return static_cast<int64_t>(std::ceil(epochs * static_cast<double>(n_train) / static_cast<double>(batch) - 1e-9));
}

void write_state(const std::filesystem::path& path, const TensorMap& state) {
  if (path.empty()) return;
  std::filesystem::create_directories(path.parent_path());
  write_tensors(path, state);
}

bool resumable(const TrainConfig& config, const std::filesystem::path& path) {
  return config.resume && !path.empty() && std::filesystem::exists(path);
}

void report(const Progress& progress, int64_t s, int64_t steps, int64_t every, const std::string& what,
            const LossBreakdown& loss) {
  if (!progress || every <= 0 || !(s % every == 0 || s + 1 == steps)) return;
  std::ostringstream os;
  os << what << " step " << s << "/" << steps << " total " << loss.value();
  for (const auto& t : loss.terms) os << " " << t.name << " " << t.raw;
  progress(os.str());
}

}  // namespace

TrainConfig::TrainConfig() {
  generator.widths = {128, 64, 32, 16};
  prior_discriminator.widths = {32, 64, 128, 128};
  prior.batch_size = 8;
  colorizer.widths = {16, 32, 64};
  stage1.lr = 1e-4;
  stage1.steps = -1;
  stage2.steps = -1;
  finalize();
}

void TrainConfig::set(const std::string& key, const std::string& value) { field(key).set(*this, value); }

std::string TrainConfig::get(const std::string& key) const { return field(key).get(*this); }

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> out = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return out;
}

void TrainConfig::finalize() {
  generator.resolution = resolution;
  generator.latent_dim = latent_dim;
  generator.num_classes = num_classes;
  prior_discriminator.resolution = resolution;
  prior_discriminator.num_classes = num_classes;
  features.num_classes = num_classes;
  encoder.resolution = resolution;
  encoder.latent_dim = latent_dim;
  encoder.num_classes = num_classes;
  projector.resolution = resolution;
  colorizer.resolution = resolution;
  data.resolution = resolution;
  data.num_classes = num_classes;
  generator.validate();
  prior_discriminator.validate();
  features.validate();
  encoder.validate();
  projector.validate();
  colorizer.guidance_channels = guidance_channels(generator, variant);
  colorizer.validate();
  patch.validate();
  weights.validate();
  stage2.contextual.validate();
  if (!(tau > 0.0)) throw ConfigError("alignment.tau must be positive");
  if (!(stage1.lr > 0.0) || !(stage2.lr > 0.0) || !(stage2.lr_d > 0.0) || !(prior.lr_g > 0.0) ||
      !(prior.lr_d > 0.0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (stage1_epochs < 0 || stage2_epochs < 0) throw ConfigError("epochs must be >= 0");
  if (stage1.batch_size <= 0 || stage2.batch_size <= 0 || prior.batch_size <= 0 || feature_schedule.batch_size <= 0) {
    throw ConfigError("batch sizes must be positive");
  }
  if (projector.grid() != resolution / 4) throw ConfigError("projector grid must be R / 4");
}

void TrainConfig::write(const std::filesystem::path& path) const {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "# gcp run configuration\n";
  for (const auto& f : fields()) out << f.key << " = " << f.get(*this) << "\n";
}

TrainConfig TrainConfig::load(const std::filesystem::path& path, const std::map<std::string, std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  TrainConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    auto trim = [](std::string s) {
      auto lo = s.find_first_not_of(" \t\r");
      auto hi = s.find_last_not_of(" \t\r");
      return lo == std::string::npos ? std::string() : s.substr(lo, hi - lo + 1);
    };
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  for (const auto& [k, v] : overrides) c.set(k, v);
  c.finalize();
  return c;
}

TrainConfig TrainConfig::from_overrides(const std::map<std::string, std::string>& overrides) {
  TrainConfig c;
  for (const auto& [k, v] : overrides) c.set(k, v);
  c.finalize();
  return c;
}

int64_t TrainConfig::stage1_steps(int64_t n_train) const {
  return stage1.steps >= 0 ? stage1.steps : epoch_steps(stage1_epochs, n_train, stage1.batch_size);
}

int64_t TrainConfig::stage2_steps(int64_t n_train) const {
  return stage2.steps >= 0 ? stage2.steps : epoch_steps(stage2_epochs, n_train, stage2.batch_size);
}

DatasetSplit load_split(const TrainConfig& config, const std::filesystem::path& data_dir) {
  auto all = load_dataset(data_dir, config.resolution, config.num_classes);
  return split_dataset(all, config.data.val_fraction, config.data.seed);
}

void train_gan_stage(const TrainConfig& config, const LabeledImages& train, const RunPaths& run,
                     const Progress& progress) {
  if (train.size() < 500) {
    throw DatasetError("prior GAN training needs at least 500 labeled images, got " + std::to_string(train.size()));
  }
  if (train.resolution() != config.resolution) throw DatasetError("dataset resolution differs from the config");
  check_labels(train.labels, config.num_classes);
  config.write(run.config());

  auto gan = PriorGan::create(config.generator, config.prior_discriminator);
  PriorGanTrainer trainer(gan, config.prior);
  const auto state_path = run.prior() / "trainer_state.tensors";
  if (resumable(config, state_path)) trainer.load_state(read_tensors(state_path));
  TrainingLog log({"step", "d_loss", "g_loss", "d_real", "d_fake"});
  for (int64_t s = trainer.step_count(); s < config.prior.steps; ++s) {
    auto l = trainer.step(train);
    log.append({static_cast<double>(s), l.d_loss, l.g_loss, l.d_real, l.d_fake});
    if (progress && config.prior.log_every > 0 && (s % config.prior.log_every == 0 || s + 1 == config.prior.steps)) {
      std::ostringstream os;
      os << "prior step " << s << "/" << config.prior.steps << " d_loss " << l.d_loss << " g_loss " << l.g_loss;
      progress(os.str());
    }
  }
  gan.generator->eval();
  gan.discriminator->eval();
  Metadata md;
  config.prior.write(md, "schedule.");
  save_prior(run.prior(), gan, md);
  write_state(state_path, trainer.state());
  log.write_csv(run.prior() / "log.csv");
  save_directions(run.directions(), discover_directions(gan.generator, config.directions));

  auto phi = train_feature_net(train, config.features, config.feature_schedule, progress);
  save_feature_net(run.features(), phi.net);
  phi.log.write_csv(run.features() / "log.csv");
}

Stage1Result stage1_train(const TrainConfig& config, const LabeledImages& train, PriorGan& prior,
                          const Progress& progress, const std::filesystem::path& state_path) {
  config.encoder.check_compatible(prior.generator_spec);
  Stage1Result result{make_encoder(config.encoder), TrainingLog({"step", "total", "inv_ftr", "inv_reg"})};
  auto schedule = config.stage1;
  schedule.steps = config.stage1_steps(train.size());
  Stage1Trainer trainer(result.encoder, prior, schedule, config.weights);
  if (resumable(config, state_path)) trainer.load_state(read_tensors(state_path));
  for (int64_t s = trainer.step_count(); s < schedule.steps; ++s) {
    auto loss = trainer.step(train);
    result.log.append({static_cast<double>(s), loss.value(), loss.term("inv_ftr").raw, loss.term("inv_reg").raw});
    report(progress, s, schedule.steps, schedule.log_every, "stage1", loss);
  }
  write_state(state_path, trainer.state());
  result.encoder->eval();
  return result;
}

void train_encoder_stage(const TrainConfig& config, const LabeledImages& train, const RunPaths& run,
                         const Progress& progress) {
  auto prior = load_prior(run.prior());
  auto result = stage1_train(config, train, prior, progress, run.encoder() / "trainer_state.tensors");
  save_encoder(run.encoder(), result.encoder);
  result.log.write_csv(run.encoder() / "log.csv");
}

Stage2Result stage2_train(const TrainConfig& config, const LabeledImages& train, PriorGan prior, Encoder encoder,
                          FeatureNet& phi, const Progress& progress, const std::filesystem::path& state_path) {
  config.encoder.check_compatible(prior.generator_spec);
  auto cspec = config.colorizer;
  cspec.guidance_channels = guidance_channels(prior.generator_spec, config.variant);
  Stage2Result result{ColorizationModel{std::move(prior), std::move(encoder), make_projector(config.projector),
                                        make_colorizer(cspec), config.variant, config.tau},
                      make_patch_discriminator(config.patch),
                      TrainingLog({"step", "total", "dom", "perc", "ctx", "adv", "d_total"})};
  auto schedule = config.stage2;
  schedule.steps = config.stage2_steps(train.size());
  Stage2Trainer trainer(result.model, result.discriminator, phi, schedule, config.weights);
  if (resumable(config, state_path)) trainer.load_state(read_tensors(state_path));
  for (int64_t s = trainer.step_count(); s < schedule.steps; ++s) {
    auto r = trainer.step(train);
    const auto& c = r.colorizer;
    result.log.append({static_cast<double>(s), c.value(), c.term("dom").raw, c.term("perc").raw, c.term("ctx").raw,
                       c.term("adv").raw, r.discriminator.value()});
    report(progress, s, schedule.steps, schedule.log_every, "stage2", c);
  }
  write_state(state_path, trainer.state());
  result.model.eval();
  result.discriminator->eval();
  return result;
}

void save_colorizer(const std::filesystem::path& dir, const ColorizationModel& model,
                    PatchDiscriminator& discriminator, const Metadata& extra) {
  std::filesystem::create_directories(dir);
  Metadata md = extra;
  md.set("kind", "colorizer");
  md.set("variant", variant_name(model.variant));
  md.set("tau", model.tau);
  model.projector->spec().write(md, "projector.");
  model.colorizer->spec().write(md, "colorizer.");
  discriminator->spec().write(md, "patch.");
  md.write(dir / "metadata.txt");
  save_module(dir / "projector.tensors", *model.projector);
  save_module(dir / "colorizer.tensors", *model.colorizer);
  save_module(dir / "discriminator_c.tensors", *discriminator);
}

void train_colorizer_stage(const TrainConfig& config, const LabeledImages& train, const RunPaths& run,
                           const Progress& progress) {
  auto phi = load_feature_net(run.features());
  auto result = stage2_train(config, train, load_prior(run.prior()), load_encoder(run.encoder()), phi, progress,
                             run.colorizer() / "trainer_state.tensors");
  save_colorizer(run.colorizer(), result.model, result.discriminator);
  result.log.write_csv(run.colorizer() / "log.csv");
}

ColorizationModel load_colorization_model(const RunPaths& run, const std::filesystem::path& colorizer_dir) {
  const auto dir = colorizer_dir.empty() ? run.colorizer() : colorizer_dir;
  if (!std::filesystem::is_directory(dir)) throw CheckpointError("missing colorizer checkpoint " + dir.string());
  auto md = Metadata::read(dir / "metadata.txt");
  if (md.find("kind") != "colorizer") throw CheckpointError(dir.string() + " is not a colorizer checkpoint");
  ColorizationModel model;
  model.prior = load_prior(run.prior());
  model.encoder = load_encoder(run.encoder());
  model.encoder->spec().check_compatible(model.prior.generator_spec);
  model.variant = parse_variant(md.get("variant"));
  model.tau = md.get_double("tau");
  model.projector = make_projector(ProjectorSpec::read(md, "projector."));
  model.colorizer = make_colorizer(ColorizerSpec::read(md, "colorizer."));
  load_module(dir / "projector.tensors", *model.projector);
  load_module(dir / "colorizer.tensors", *model.colorizer);
  model.eval();
  set_requires_grad(*model.prior.generator, false);
  set_requires_grad(*model.prior.discriminator, false);
  set_requires_grad(*model.encoder, false);
  set_requires_grad(*model.projector, false);
  set_requires_grad(*model.colorizer, false);
  return model;
}

FeatureExtractor feature_extractor(FeatureNet& phi) {
  FeatureNet net = phi;
  return {phi->identity(), 0, [net](const torch::Tensor& x) mutable { return net->embedding(x); }};
}

MetricReport evaluate(ColorizationModel& model, FeatureNet& phi, const LabeledImages& split,
                      const std::filesystem::path& out_dir) {
  if (split.size() < 2) throw DatasetError("evaluation needs at least 2 images");
  model.eval();
  const auto pred_dir = out_dir / "pred";
  const auto gt_dir = out_dir / "gt";
  std::filesystem::remove_all(pred_dir);
  std::filesystem::remove_all(gt_dir);
  std::filesystem::create_directories(pred_dir);
  std::filesystem::create_directories(gt_dir);
  for (int64_t i = 0; i < split.size(); i += 32) {
    const auto end = std::min(split.size(), i + 32);
    auto rgb = split.images.slice(0, i, end);
    auto pred = colorize_batch(model, gray_input(rgb), split.labels.slice(0, i, end));
    for (int64_t j = i; j < end; ++j) {
      const auto& name = split.names[static_cast<size_t>(j)];
      write_png(pred_dir / name, RgbImage(pred[j - i]));
      write_png(gt_dir / name, RgbImage(rgb[j - i]));
    }
  }
  auto report = evaluate_pairs(pred_dir, gt_dir, feature_extractor(phi));
  std::ofstream(out_dir / "report.txt") << report.to_text();
  return report;
}

MetricReport ablate(Variant variant, const TrainConfig& config, const DatasetSplit& split, const RunPaths& run,
                    const Progress& progress) {
  auto cfg = config;
  cfg.variant = variant;
  cfg.finalize();
  auto phi = load_feature_net(run.features());
  const auto dir = run.root / ("ablation_" + variant_name(variant));
  auto result = stage2_train(cfg, split.train, load_prior(run.prior()), load_encoder(run.encoder()), phi, progress,
                             dir / "trainer_state.tensors");
  save_colorizer(dir, result.model, result.discriminator);
  result.log.write_csv(dir / "log.csv");
  return evaluate(result.model, phi, split.val, dir / "eval");
}

}  // namespace gcp
