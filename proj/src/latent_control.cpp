#include "gcp/latent_control.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <sstream>

#include "gcp/errors.hpp"
#include "gcp/tensor_io.hpp"

namespace gcp {

const Direction& DirectionSet::at(int64_t id) const {
  if (id < 0 || id >= static_cast<int64_t>(directions.size())) {
    throw ValidationError("direction " + std::to_string(id) + " outside [0, " + std::to_string(directions.size()) + ")");
  }
  return directions[static_cast<size_t>(id)];
}

void DirectionSet::validate(double tol) const {
  for (size_t i = 0; i < directions.size(); ++i) {
    const auto& di = directions[i].vector;
    if (std::fabs(di.norm().item<double>() - 1.0) > tol) throw ValidationError("direction is not unit length");
    if (i > 0 && directions[i].singular_value > directions[i - 1].singular_value) {
      throw ValidationError("directions are not ordered by singular value");
    }
    for (size_t j = 0; j < i; ++j) {
      if (std::fabs(torch::dot(di, directions[j].vector).item<double>()) > tol) {
        throw ValidationError("directions are not orthogonal");
      }
    }
  }
}

std::vector<torch::Tensor> perturb(const torch::Tensor& z, double sigma, int64_t n, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ValidationError("perturbation sigma must be >= 0");
  if (n < 0) throw ValidationError("perturbation count must be >= 0");
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  std::vector<torch::Tensor> out;
  for (int64_t i = 0; i < n; ++i) {
    auto eps = torch::randn(z.sizes(), gen, z.scalar_type());
    out.push_back(sigma == 0.0 ? z.clone() : z + sigma * eps);
  }
  return out;
}

DirectionSet discover_directions(const torch::Tensor& weight, int64_t m) {
  if (weight.dim() != 2) throw ShapeError("direction discovery needs a 2-d weight");
  const auto d = weight.size(1);
  if (m <= 0 || m > d) {
    throw ValidationError("requested " + std::to_string(m) + " directions, latent dimension is " + std::to_string(d));
  }
  auto [u, s, vh] = torch::linalg_svd(weight.detach().to(torch::kFloat64), /*full_matrices=*/false);
  (void)u;
  if (m > vh.size(0)) {
    throw ValidationError("weight rank bound " + std::to_string(vh.size(0)) + " is below the requested " +
                          std::to_string(m) + " directions");
  }
  DirectionSet set;
  for (int64_t i = 0; i < m; ++i) {
    auto v = vh[i].clone();
    if (v[v.abs().argmax()].item<double>() < 0) v = -v;
    set.directions.push_back({i, v, s[i].item<double>()});
  }
  return set;
}

DirectionSet discover_directions(Generator& generator, int64_t m) {
  return discover_directions(generator->latent_projection_weight(), m);
}

std::vector<torch::Tensor> walk(const torch::Tensor& z, const torch::Tensor& direction,
                                const std::vector<double>& alphas) {
  if (z.sizes() != direction.sizes()) throw ShapeError("walk direction and latent code differ in shape");
  auto d = direction.to(z.scalar_type());
  std::vector<torch::Tensor> out;
  for (double a : alphas) out.push_back(a == 0.0 ? z.clone() : z + a * d);
  return out;
}

std::vector<double> parse_alpha_range(const std::string& text) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) {
    try {
      size_t used = 0;
      parts.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("bad alpha range '" + text + "': expected start:stop:step");
    }
  }
  if (parts.size() == 1) return parts;
  if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0]) {
    throw ValidationError("bad alpha range '" + text + "': expected start:stop:step with step > 0, stop >= start");
  }
  const auto count = static_cast<int64_t>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9)) + 1;
  std::vector<double> out;
  for (int64_t i = 0; i < count; ++i) out.push_back(parts[0] + static_cast<double>(i) * parts[2]);
  return out;
}

void save_directions(const std::filesystem::path& path, const DirectionSet& set) {
  TensorMap map;
  std::vector<double> values;
  for (const auto& d : set.directions) {
    map["direction." + std::to_string(d.id)] = d.vector;
    values.push_back(d.singular_value);
  }
  map["singular_values"] = torch::tensor(values, torch::kFloat64);
  write_tensors(path, map);
}

DirectionSet load_directions(const std::filesystem::path& path) {
  auto map = read_tensors(path);
  auto it = map.find("singular_values");
  if (it == map.end()) throw CheckpointError(path.string() + " lacks singular_values");
  const auto values = it->second;
  DirectionSet set;
  for (int64_t i = 0; i < values.size(0); ++i) {
    auto d = map.find("direction." + std::to_string(i));
    if (d == map.end()) throw CheckpointError(path.string() + " lacks direction." + std::to_string(i));
    set.directions.push_back({i, d->second, values[i].item<double>()});
  }
  return set;
}

}  // namespace gcp
