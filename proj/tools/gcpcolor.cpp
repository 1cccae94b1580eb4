#include <torch/torch.h>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "gcp/errors.hpp"
#include "gcp/image_io.hpp"
#include "gcp/latent_control.hpp"
#include "gcp/pipeline.hpp"
#include "gcp/service.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c, bool out_required) {
  cmd->add_option("--config", c.config, "config file (key = value lines)");
  cmd->add_option("--seed", c.seed, "seed for this command");
  auto* o = cmd->add_option("--out", c.out, "output path");
  if (out_required) o->required();
  cmd->add_option("--set", c.sets, "config override key=value (repeatable)");
}

std::map<std::string, std::string> overrides(const Common& c) {
  std::map<std::string, std::string> out;
  for (const auto& s : c.sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw gcp::ConfigError("--set expects key=value, got '" + s + "'");
    out[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return out;
}

// --config, then the run's saved config, then defaults; --set on top.
gcp::TrainConfig load_config(const Common& c, const fs::path& run = {}) {
  auto ov = overrides(c);
  if (!c.config.empty()) return gcp::TrainConfig::load(c.config, ov);
  if (!run.empty() && fs::exists(gcp::RunPaths{run}.config())) return gcp::TrainConfig::load(gcp::RunPaths{run}.config(), ov);
  return gcp::TrainConfig::from_overrides(ov);
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw gcp::ValidationError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw gcp::ValidationError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::optional<std::vector<double>> read_z(const std::string& path) {
  if (path.empty()) return std::nullopt;
  std::ifstream in(path);
  if (!in) throw gcp::ValidationError("cannot open " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_object() && j.contains("z")) j = j["z"];
  if (!j.is_array()) throw gcp::ValidationError(path + ": expected a JSON array or {\"z\": [...]}");
  try {
    return j.get<std::vector<double>>();
  } catch (const json::exception&) {
    throw gcp::ValidationError(path + ": z must hold numbers");
  }
}

void write_z(const fs::path& path, const std::vector<double>& z) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream(path) << json{{"z", z}}.dump() << "\n";
}

std::string frame_name(const char* stem, size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03zu.png", stem, i);
  return buf;
}

void write_frames(const fs::path& dir, const char* stem, const std::vector<gcp::ImageResult>& frames) {
  fs::create_directories(dir);
  json index = json::array();
  for (size_t i = 0; i < frames.size(); ++i) {
    write_bytes(dir / frame_name(stem, i), frames[i].png);
    index.push_back({{"file", frame_name(stem, i)}, {"alpha", frames[i].alpha}, {"z", frames[i].z}});
  }
  std::ofstream(dir / "frames.json") << index.dump(1) << "\n";
  std::cout << frames.size() << " images written to " << dir.string() << "\n";
}

gcp::Progress printer() {
  return [](const std::string& line) { std::cerr << line << std::endl; };
}

gcp::LabeledImages pick(const gcp::DatasetSplit& split, const std::string& which) {
  if (which == "train") return split.train;
  if (which == "val") return split.val;
  throw gcp::ConfigError("--split must be train or val, got '" + which + "'");
}

gcp::Service* g_service = nullptr;

void on_signal(int) {
  if (g_service != nullptr) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  CLI::App app{"gcpcolor: GAN-prior guided colorization"};
  app.require_subcommand(1);
  Common c;
  std::string data, run, in, colorizer_dir, z_path, z_out, alpha = "-2:2:0.5", variant = "no_prior", split = "val";
  std::string host = "127.0.0.1", static_dir;
  int64_t class_label = -1, n = gcp::kDefaultSamples, direction = 0, count = -1;
  double sigma = gcp::kDefaultSigma;
  int port = 8080, workers = 2;
  bool resume = false;

  auto* gen = app.add_subcommand("gen-data", "write the synthetic shape dataset");
  add_common(gen, c, true);
  gen->add_option("--n", n, "number of images")->default_val(-1);

  auto* tgan = app.add_subcommand("train-gan", "train the prior GAN, feature network and directions");
  auto* tenc = app.add_subcommand("train-encoder", "stage 1: train the encoder against the frozen prior");
  auto* tcol = app.add_subcommand("train-colorizer", "stage 2: train projectors, colorizer and patch discriminator");
  for (auto* cmd : {tgan, tenc, tcol}) {
    add_common(cmd, c, true);
    cmd->add_option("--data", data, "dataset directory")->required();
    cmd->add_flag("--resume", resume, "continue from the stage's trainer_state.tensors");
  }

  auto* col = app.add_subcommand("colorize", "colorize one grayscale image");
  auto* div = app.add_subcommand("diversify", "colorize perturbed latent codes");
  auto* wlk = app.add_subcommand("walk", "colorize along a latent direction");
  for (auto* cmd : {col, div, wlk}) {
    add_common(cmd, c, true);
    cmd->add_option("--run", run, "run directory")->required();
    cmd->add_option("--in", in, "input PNG")->required();
    cmd->add_option("--class", class_label, "class label")->required();
    cmd->add_option("--colorizer", colorizer_dir, "colorizer checkpoint directory (default run/colorizer)");
  }
  col->add_option("--z", z_path, "JSON latent override");
  col->add_option("--z-out", z_out, "write the latent code used as JSON");
  div->add_option("--sigma", sigma, "perturbation scale");
  div->add_option("--n", n, "number of samples");
  wlk->add_option("--direction", direction, "direction id");
  wlk->add_option("--alpha", alpha, "alpha or start:stop:step");
  wlk->add_option("--z", z_path, "JSON latent override");

  auto* ev = app.add_subcommand("evaluate", "score a trained colorizer on a split");
  add_common(ev, c, true);
  ev->add_option("--run", run, "run directory")->required();
  ev->add_option("--data", data, "dataset directory")->required();
  ev->add_option("--colorizer", colorizer_dir, "colorizer checkpoint directory (default run/colorizer)");
  ev->add_option("--split", split, "train or val");

  auto* abl = app.add_subcommand("ablate", "train and score one ablation variant");
  add_common(abl, c, false);
  abl->add_option("--run", run, "run directory")->required();
  abl->add_option("--data", data, "dataset directory")->required();
  abl->add_option("--variant", variant, "full, no_prior, image_guidance or no_alignment");

  auto* dirs = app.add_subcommand("directions", "list or recompute latent directions");
  add_common(dirs, c, false);
  dirs->add_option("--run", run, "run directory")->required();
  dirs->add_option("--count", count, "recompute this many directions and save them");

  auto* srv = app.add_subcommand("serve", "HTTP service");
  add_common(srv, c, false);
  srv->add_option("--run", run, "run directory")->required();
  srv->add_option("--colorizer", colorizer_dir, "colorizer checkpoint directory (default run/colorizer)");
  srv->add_option("--host", host, "bind address");
  srv->add_option("--port", port, "port (0 picks one)");
  srv->add_option("--workers", workers, "concurrent inferences");
  srv->add_option("--static", static_dir, "static assets served at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) {
      auto config = load_config(c);
      auto spec = config.data;
      if (n > 0) spec.n_images = n;
      if (c.seed) spec.seed = *c.seed;
      spec.validate();
      gcp::make_synthetic_dataset(spec, c.out);
      std::cout << spec.n_images << " images written to " << c.out << "\n";
    } else if (tgan->parsed() || tenc->parsed() || tcol->parsed()) {
      auto config = load_config(c, c.out);
      if (resume) config.resume = true;
      if (c.seed) {
        if (tgan->parsed()) config.prior.seed = *c.seed;
        if (tenc->parsed()) config.stage1.seed = *c.seed;
        if (tcol->parsed()) config.stage2.seed = *c.seed;
      }
      gcp::RunPaths paths{c.out};
      auto parts = gcp::load_split(config, data);
      if (tgan->parsed()) {
        gcp::train_gan_stage(config, parts.train, paths, printer());
      } else {
        config.write(paths.config());
        if (tenc->parsed()) gcp::train_encoder_stage(config, parts.train, paths, printer());
        if (tcol->parsed()) gcp::train_colorizer_stage(config, parts.train, paths, printer());
      }
      std::cout << "checkpoints written to " << c.out << "\n";
    } else if (col->parsed() || div->parsed() || wlk->parsed()) {
      gcp::RunPaths paths{run};
      auto model = gcp::load_colorization_model(paths, colorizer_dir);
      auto png = read_bytes(in);
      if (col->parsed()) {
        auto r = gcp::colorize_request(model, png, class_label, c.seed, read_z(z_path));
        write_bytes(c.out, r.png);
        if (!z_out.empty()) write_z(z_out, r.z);
        std::cout << "wrote " << c.out << "\n";
      } else if (div->parsed()) {
        write_frames(c.out, "sample", gcp::diversify_request(model, png, class_label, sigma, n, c.seed.value_or(0)));
      } else {
        auto set = gcp::load_directions(paths.directions());
        write_frames(c.out, "frame",
                     gcp::walk_request(model, set, png, class_label, direction, gcp::parse_alpha_range(alpha),
                                       read_z(z_path)));
      }
    } else if (ev->parsed()) {
      gcp::RunPaths paths{run};
      auto config = load_config(c, run);
      auto model = gcp::load_colorization_model(paths, colorizer_dir);
      auto phi = gcp::load_feature_net(paths.features());
      auto report = gcp::evaluate(model, phi, pick(gcp::load_split(config, data), split), c.out);
      std::cout << gcp::MetricReport::table_header() << "\n" << report.table_row(gcp::variant_name(model.variant)) << "\n";
    } else if (abl->parsed()) {
      gcp::RunPaths paths{run};
      auto config = load_config(c, run);
      if (c.seed) config.stage2.seed = *c.seed;
      auto v = gcp::parse_variant(variant);
      auto report = gcp::ablate(v, config, gcp::load_split(config, data), paths, printer());
      std::cout << gcp::MetricReport::table_header() << "\n" << report.table_row(variant) << "\n";
    } else if (dirs->parsed()) {
      gcp::RunPaths paths{run};
      if (count > 0) {
        auto prior = gcp::load_prior(paths.prior());
        gcp::save_directions(paths.directions(), gcp::discover_directions(prior.generator, count));
      }
      auto set = gcp::load_directions(paths.directions());
      std::cout << "id | singular_value\n";
      for (const auto& d : set.directions) std::cout << d.id << " | " << d.singular_value << "\n";
    } else if (srv->parsed()) {
      gcp::RunPaths paths{run};
      gcp::ServiceOptions options;
      options.workers = workers;
      options.static_dir = static_dir;
      gcp::Service service(gcp::load_colorization_model(paths, colorizer_dir), gcp::load_directions(paths.directions()),
                           gcp::checkpoint_digests(paths, colorizer_dir), options);
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      const int bound = service.start(host, port);
      std::cout << "listening on " << host << ":" << bound << std::endl;
      service.wait();
      g_service = nullptr;
    }
  } catch (const gcp::Error& e) {
    std::string msg = e.what();
    for (auto& ch : msg) {
      if (ch == '\n') ch = ' ';
    }
    std::cerr << "error: " << e.code() << ": " << msg << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& ch : msg) {
      if (ch == '\n') ch = ' ';
    }
    std::cerr << "error: internal: " << msg << std::endl;
    return 1;
  }
  return 0;
}
