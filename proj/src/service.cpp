#include "gcp/service.hpp"

#include <array>
#include <chrono>
#include <semaphore>
#include <thread>

#include "gcp/errors.hpp"
#include "gcp/image_io.hpp"
#include "httplib.h"

namespace gcp {

using nlohmann::json;

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

void check_class(const ColorizationModel& model, int64_t class_label) {
  if (class_label < 0 || class_label >= model.num_classes()) {
    throw ValidationError("class_label " + std::to_string(class_label) + " outside [0, " +
                          std::to_string(model.num_classes()) + ")");
  }
}

torch::Tensor latent_from(const std::vector<double>& values, int64_t latent_dim) {
  if (static_cast<int64_t>(values.size()) != latent_dim) {
    throw ValidationError("z must have " + std::to_string(latent_dim) + " entries, got " +
                          std::to_string(values.size()));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw ValidationError("z has a non-finite entry");
  }
  return torch::tensor(values, torch::kFloat64).to(torch::kFloat32);
}

std::vector<double> to_vector(const torch::Tensor& z) {
  if (!z.defined()) return {};
  auto d = z.to(torch::kFloat64).contiguous();
  return {d.data_ptr<double>(), d.data_ptr<double>() + d.numel()};
}

ImageResult result_of(const Colorization& c, double alpha = 0.0) {
  return {encode_png(c.image), to_vector(c.code.z), alpha};
}

}  // namespace

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (size_t i = 0; i < bytes.size(); i += 3) {
    const uint32_t b0 = bytes[i];
    const uint32_t b1 = i + 1 < bytes.size() ? bytes[i + 1] : 0;
    const uint32_t b2 = i + 2 < bytes.size() ? bytes[i + 2] : 0;
    const uint32_t v = (b0 << 16) | (b1 << 8) | b2;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(v >> 6) & 63] : '=';
    out += i + 2 < bytes.size() ? kAlphabet[v & 63] : '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  static const std::array<int, 256> table = [] {
    std::array<int, 256> t{};
    t.fill(-1);
    for (int i = 0; i < 64; ++i) t[static_cast<unsigned char>(kAlphabet[i])] = i;
    return t;
  }();
  if (text.size() % 4 != 0) throw ValidationError("base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (size_t i = 0; i < text.size(); i += 4) {
    const bool last = i + 4 == text.size();
    int pad = 0;
    uint32_t v = 0;
    for (size_t j = 0; j < 4; ++j) {
      const unsigned char c = static_cast<unsigned char>(text[i + j]);
      if (c == '=' && last && j >= 2) {
        ++pad;
        v <<= 6;
        continue;
      }
      if (pad > 0 || table[c] < 0) throw ValidationError("invalid base64 at offset " + std::to_string(i + j));
      v = (v << 6) | static_cast<uint32_t>(table[c]);
    }
    out.push_back(static_cast<uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<uint8_t>(v >> 8));
    if (pad < 1) out.push_back(static_cast<uint8_t>(v));
  }
  return out;
}

GrayPlane decode_gray(const std::vector<std::uint8_t>& png, int64_t resolution) {
  return gray_from_image(decode_png(png), resolution);
}

ImageResult colorize_request(ColorizationModel& model, const std::vector<std::uint8_t>& png, int64_t class_label,
                             std::optional<std::uint64_t> seed, const std::optional<std::vector<double>>& z_override) {
  check_class(model, class_label);
  auto gray = decode_gray(png, model.resolution());
  std::optional<torch::Tensor> z;
  if (z_override) {
    if (model.variant == Variant::kNoPrior) throw ValidationError("the no_prior variant takes no latent code");
    z = latent_from(*z_override, model.latent_dim());
  } else if (seed) {
    if (model.variant == Variant::kNoPrior) throw ValidationError("the no_prior variant has no latent code to perturb");
    z = perturb(encode(model.encoder, gray, class_label).z, kDefaultSigma, 1, *seed).front();
  }
  return result_of(colorize(model, gray, class_label, z));
}

std::vector<ImageResult> diversify_request(ColorizationModel& model, const std::vector<std::uint8_t>& png,
                                           int64_t class_label, double sigma, int64_t n, std::uint64_t seed) {
  check_class(model, class_label);
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ValidationError("sigma must be a finite value >= 0");
  if (n < 1 || n > kMaxSamples) throw ValidationError("n must be in [1, " + std::to_string(kMaxSamples) + "]");
  auto gray = decode_gray(png, model.resolution());
  std::vector<ImageResult> out;
  for (const auto& c : diversify(model, gray, class_label, sigma, n, seed)) out.push_back(result_of(c));
  return out;
}

std::vector<ImageResult> walk_request(ColorizationModel& model, const DirectionSet& directions,
                                      const std::vector<std::uint8_t>& png, int64_t class_label, int64_t direction,
                                      const std::vector<double>& alphas,
                                      const std::optional<std::vector<double>>& z_override) {
  check_class(model, class_label);
  if (alphas.empty()) throw ValidationError("walk needs at least one alpha");
  if (static_cast<int64_t>(alphas.size()) > kMaxSamples) {
    throw ValidationError("walk takes at most " + std::to_string(kMaxSamples) + " alphas");
  }
  for (double a : alphas) {
    if (!std::isfinite(a)) throw ValidationError("alpha must be finite");
  }
  const auto& d = directions.at(direction);
  if (d.vector.size(0) != model.latent_dim()) throw ValidationError("direction size differs from the latent size");
  auto gray = decode_gray(png, model.resolution());
  std::optional<torch::Tensor> z;
  if (z_override) z = latent_from(*z_override, model.latent_dim());
  auto frames = walk_colorize(model, gray, class_label, d.vector.to(torch::kFloat32), alphas, z);
  std::vector<ImageResult> out;
  for (size_t i = 0; i < frames.size(); ++i) out.push_back(result_of(frames[i], alphas[i]));
  return out;
}

json checkpoint_digests(const RunPaths& run, const std::filesystem::path& colorizer_dir) {
  const auto cdir = colorizer_dir.empty() ? run.colorizer() : colorizer_dir;
  json out;
  out["generator"] = file_digest(run.prior() / "generator.tensors");
  out["encoder"] = file_digest(run.encoder() / "encoder.tensors");
  out["projector"] = file_digest(cdir / "projector.tensors");
  out["colorizer"] = file_digest(cdir / "colorizer.tensors");
  if (std::filesystem::exists(run.directions())) out["directions"] = file_digest(run.directions());
  return out;
}

struct Service::Impl {
  ColorizationModel model;
  DirectionSet directions;
  json checkpoints;
  ServiceOptions options;
  std::counting_semaphore<256> slots;
  httplib::Server server;
  std::thread thread;

  Impl(ColorizationModel m, DirectionSet d, json c, ServiceOptions o)
      : model(std::move(m)),
        directions(std::move(d)),
        checkpoints(std::move(c)),
        options(std::move(o)),
        slots(std::clamp(options.workers, 1, 256)) {}

  struct PayloadTooLarge {};

  std::vector<std::uint8_t> image_field(const json& req) {
    if (!req.contains("image") || !req["image"].is_string()) throw ValidationError("image must be a base64 string");
    const auto& text = req["image"].get_ref<const std::string&>();
    if (text.size() / 4 * 3 > options.max_image_bytes + 3) throw PayloadTooLarge();
    auto bytes = base64_decode(text);
    if (bytes.size() > options.max_image_bytes) throw PayloadTooLarge();
    return bytes;
  }

  template <typename T>
  static T field(const json& req, const char* name) {
    if (!req.contains(name)) throw ValidationError(std::string("missing field ") + name);
    try {
      return req[name].get<T>();
    } catch (const json::exception&) {
      throw ValidationError(std::string("field ") + name + " has the wrong type");
    }
  }

  template <typename T>
  static std::optional<T> optional_field(const json& req, const char* name) {
    if (!req.contains(name) || req[name].is_null()) return std::nullopt;
    return field<T>(req, name);
  }

  static int64_t class_field(const json& req) {
    if (!req.contains("class_label") || !req["class_label"].is_number_integer()) {
      throw ValidationError("class_label must be an integer");
    }
    return req["class_label"].get<int64_t>();
  }

  static std::uint64_t seed_field(const json& req, std::uint64_t fallback) {
    if (!req.contains("seed") || req["seed"].is_null()) return fallback;
    if (!req["seed"].is_number_unsigned()) throw ValidationError("seed must be a non-negative integer");
    return req["seed"].get<std::uint64_t>();
  }

  static json frame(const ImageResult& r) {
    return {{"image", base64_encode(r.png)}, {"z", r.z}};
  }

  template <typename F>
  auto infer(F&& f) {
    slots.acquire();
    struct Release {
      std::counting_semaphore<256>& s;
      ~Release() { s.release(); }
    } release{slots};
    return f();
  }

  json colorize(const json& req) {
    auto png = image_field(req);
    const auto label = class_field(req);
    std::optional<std::uint64_t> seed;
    if (req.contains("seed") && !req["seed"].is_null()) seed = seed_field(req, 0);
    auto z = optional_field<std::vector<double>>(req, "z_override");
    auto r = infer([&] { return colorize_request(model, png, label, seed, z); });
    return frame(r);
  }

  json diversify(const json& req) {
    auto png = image_field(req);
    const auto label = class_field(req);
    const auto sigma = optional_field<double>(req, "sigma").value_or(kDefaultSigma);
    const auto n = optional_field<int64_t>(req, "n").value_or(kDefaultSamples);
    const auto seed = seed_field(req, 0);
    auto rs = infer([&] { return diversify_request(model, png, label, sigma, n, seed); });
    json images = json::array();
    for (const auto& r : rs) images.push_back(frame(r));
    return {{"images", images}};
  }

  json walk(const json& req) {
    auto png = image_field(req);
    const auto label = class_field(req);
    const auto direction = field<int64_t>(req, "direction");
    std::vector<double> alphas;
    if (req.contains("alphas")) {
      alphas = field<std::vector<double>>(req, "alphas");
    } else if (req.contains("alpha")) {
      alphas = req["alpha"].is_string() ? parse_alpha_range(req["alpha"].get<std::string>())
                                        : std::vector<double>{field<double>(req, "alpha")};
    } else {
      throw ValidationError("walk needs alphas (array) or alpha (number or \"start:stop:step\")");
    }
    auto z = optional_field<std::vector<double>>(req, "z_override");
    auto rs = infer([&] { return walk_request(model, directions, png, label, direction, alphas, z); });
    json frames = json::array();
    for (const auto& r : rs) {
      auto f = frame(r);
      f["alpha"] = r.alpha;
      frames.push_back(f);
    }
    return {{"frames", frames}};
  }

  json list_directions() const {
    json list = json::array();
    for (const auto& d : directions.directions) list.push_back({{"id", d.id}, {"singular_value", d.singular_value}});
    return {{"directions", list}, {"latent_dim", model.latent_dim()}};
  }

  json health() const {
    return {{"status", "ok"},
            {"checkpoints", checkpoints},
            {"variant", variant_name(model.variant)},
            {"resolution", model.resolution()},
            {"num_classes", model.num_classes()},
            {"latent_dim", model.latent_dim()},
            {"workers", options.workers}};
  }
};

namespace {

json error_body(const std::string& code, const std::string& message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

}  // namespace

Service::Service(ColorizationModel model, DirectionSet directions, json checkpoints, ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(model), std::move(directions), std::move(checkpoints),
                                   std::move(options))) {
  if (impl_->options.workers < 1) throw ConfigError("service needs at least one worker");
  impl_->model.eval();
}

Service::~Service() { stop(); }

ServiceResponse Service::handle(const std::string& method, const std::string& path, const std::string& body) {
  const auto start = std::chrono::steady_clock::now();
  try {
    json out;
    if (method == "GET" && path == "/health") {
      out = impl_->health();
    } else if (method == "GET" && path == "/directions") {
      out = impl_->list_directions();
    } else if (method == "POST" && (path == "/colorize" || path == "/diversify" || path == "/walk")) {
      if (body.size() > impl_->options.max_image_bytes * 2) {
        return {413, error_body("payload_too_large", "request body exceeds the size cap")};
      }
      json req = json::parse(body, nullptr, false);
      if (req.is_discarded() || !req.is_object()) return {400, error_body("validation", "body is not a JSON object")};
      out = path == "/colorize" ? impl_->colorize(req) : path == "/diversify" ? impl_->diversify(req) : impl_->walk(req);
      out["timing_ms"] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    } else {
      return {404, error_body("not_found", method + " " + path)};
    }
    return {200, out};
  } catch (const Impl::PayloadTooLarge&) {
    return {413, error_body("payload_too_large", "image exceeds the size cap")};
  } catch (const ValidationError& e) {
    return {400, error_body(e.code(), e.what())};
  } catch (const ShapeError& e) {
    return {400, error_body(e.code(), e.what())};
  } catch (const Error& e) {
    return {500, error_body(e.code(), e.what())};
  } catch (const std::exception& e) {
    return {500, error_body("internal", e.what())};
  }
}

int Service::start(const std::string& host, int port) {
  auto& server = impl_->server;
  server.set_payload_max_length(impl_->options.max_image_bytes * 2);
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    auto r = handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.Get("/health", route);
  server.Get("/directions", route);
  server.Post("/colorize", route);
  server.Post("/diversify", route);
  server.Post("/walk", route);
  if (!impl_->options.static_dir.empty() && !server.set_mount_point("/", impl_->options.static_dir.string())) {
    throw ConfigError("static directory " + impl_->options.static_dir.string() + " does not exist");
  }
  const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([&server] { server.listen_after_bind(); });
  server.wait_until_ready();
  return bound;
}

void Service::wait() {
  if (impl_ && impl_->thread.joinable()) impl_->thread.join();
}

void Service::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace gcp
