#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <vector>

#include "gcp/prior_gan.hpp"

namespace gcp {

struct Direction {
  int64_t id = 0;
  torch::Tensor vector;  // unit [latent_dim], float64
  double singular_value = 0.0;
};

// Ordered by descending singular value.
struct DirectionSet {
  std::vector<Direction> directions;

  size_t size() const { return directions.size(); }
  const Direction& at(int64_t id) const;
  // Orthonormality within `tol`, non-increasing singular values.
  void validate(double tol = 1e-5) const;
};

// z + sigma * eps_i with eps_i standard normal drawn from `seed`.
std::vector<torch::Tensor> perturb(const torch::Tensor& z, double sigma, int64_t n, std::uint64_t seed);

// Top-m right singular vectors of a [out, latent_dim] weight. Each vector's
// sign makes its largest-magnitude entry positive.
DirectionSet discover_directions(const torch::Tensor& weight, int64_t m);
// Uses the generator's latent projection weight.
DirectionSet discover_directions(Generator& generator, int64_t m);

// z_i = z + alpha_i * d.
std::vector<torch::Tensor> walk(const torch::Tensor& z, const torch::Tensor& direction, const std::vector<double>& alphas);

// Inclusive "start:stop:step" range, e.g. "-2:2:0.5" -> 9 values.
std::vector<double> parse_alpha_range(const std::string& text);

// directions.tensors ("direction.<id>", "singular_values") next to the prior.
void save_directions(const std::filesystem::path& path, const DirectionSet& set);
DirectionSet load_directions(const std::filesystem::path& path);

}  // namespace gcp
