#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gcp/latent_control.hpp"
#include "gcp/model.hpp"
#include "gcp/pipeline.hpp"
#include "json.hpp"

namespace gcp {

constexpr double kDefaultSigma = 0.5;
constexpr int64_t kDefaultSamples = 8;
constexpr int64_t kMaxSamples = 64;
constexpr std::size_t kMaxImageBytes = 4u << 20;

// RFC 4648 with padding. decode throws ValidationError on a bad alphabet,
// length or padding.
std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

// One colorized frame as the CLI writes it and the service returns it.
struct ImageResult {
  std::vector<std::uint8_t> png;
  std::vector<double> z;
  double alpha = 0.0;  // walk frames only
};

// Decodes a PNG and takes its luminance at `resolution`.
GrayPlane decode_gray(const std::vector<std::uint8_t>& png, int64_t resolution);

// Shared by the CLI and the HTTP handlers. A seed draws one perturbed code at
// kDefaultSigma around the encoding; z_override replaces the code entirely.
ImageResult colorize_request(ColorizationModel& model, const std::vector<std::uint8_t>& png, int64_t class_label,
                             std::optional<std::uint64_t> seed = std::nullopt,
                             const std::optional<std::vector<double>>& z_override = std::nullopt);
std::vector<ImageResult> diversify_request(ColorizationModel& model, const std::vector<std::uint8_t>& png,
                                           int64_t class_label, double sigma, int64_t n, std::uint64_t seed);
std::vector<ImageResult> walk_request(ColorizationModel& model, const DirectionSet& directions,
                                      const std::vector<std::uint8_t>& png, int64_t class_label, int64_t direction,
                                      const std::vector<double>& alphas,
                                      const std::optional<std::vector<double>>& z_override = std::nullopt);

// FNV-1a digests of the checkpoint files a model was loaded from.
nlohmann::json checkpoint_digests(const RunPaths& run, const std::filesystem::path& colorizer_dir = {});

struct ServiceOptions {
  int workers = 2;  // concurrent inferences
  std::size_t max_image_bytes = kMaxImageBytes;
  std::filesystem::path static_dir;  // served at / when set
};

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

// JSON API over a loaded, read-only model. handle() is the whole request
// path; start() puts it behind an HTTP listener.
class Service {
 public:
  Service(ColorizationModel model, DirectionSet directions, nlohmann::json checkpoints, ServiceOptions options = {});
  ~Service();

  ServiceResponse handle(const std::string& method, const std::string& path, const std::string& body);

  // Binds host:port (0 picks a free port), serves on a background thread and
  // returns the bound port.
  int start(const std::string& host, int port);
  void wait();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace gcp
