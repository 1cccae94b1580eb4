#include "gcp/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "gcp/errors.hpp"
#include "gcp/image_io.hpp"

namespace gcp {

namespace {

using Rgb = std::array<double, 3>;

Rgb hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0) / 60.0;
  const double c = v * s;
  const double x = c * (1.0 - std::fabs(std::fmod(h, 2.0) - 1.0));
  const double m = v - c;
  Rgb out{};
  switch (static_cast<int>(h)) {
    case 0: out = {c, x, 0}; break;
    case 1: out = {x, c, 0}; break;
    case 2: out = {0, c, x}; break;
    case 3: out = {0, x, c}; break;
    case 4: out = {x, 0, c}; break;
    default: out = {c, 0, x}; break;
  }
  for (auto& ch : out) ch += m;
  return out;
}

struct Point {
  double x, y;
};

bool inside_polygon(const std::vector<Point>& poly, double x, double y) {
  bool in = false;
  for (size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    if ((poly[i].y > y) != (poly[j].y > y) &&
        x < (poly[j].x - poly[i].x) * (y - poly[i].y) / (poly[j].y - poly[i].y) + poly[i].x) {
      in = !in;
    }
  }
  return in;
}

std::vector<Point> regular_polygon(double cx, double cy, double radius, int sides, double rotation,
                                   double inner_ratio = 1.0) {
  std::vector<Point> pts;
  const int n = inner_ratio < 1.0 ? 2 * sides : sides;
  for (int i = 0; i < n; ++i) {
    const double r = (inner_ratio < 1.0 && i % 2 == 1) ? radius * inner_ratio : radius;
    const double a = rotation + 2.0 * std::numbers::pi * i / n;
    pts.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
  }
  return pts;
}

torch::Tensor render(int64_t label, int64_t num_classes, int64_t res, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  const double base = class_base_hue(label, num_classes);

  const Rgb obj = hsv_to_rgb(base + uni(-20, 20), uni(0.65, 1.0), uni(0.6, 1.0));
  const double bg_hue = base + 40.0 + uni(-15, 15);
  const double bg_sat = uni(0.15, 0.35);
  const double bg_val = uni(0.25, 0.5);
  const double stripe_angle = uni(0, std::numbers::pi);
  const double stripe_freq = uni(2.0, 6.0) * 2.0 * std::numbers::pi / static_cast<double>(res);
  const double stripe_phase = uni(0, 2.0 * std::numbers::pi);

  const double radius = uni(0.22, 0.34) * res;
  const double cx = uni(radius, res - radius);
  const double cy = uni(radius, res - radius);
  const double rot = uni(0, 2.0 * std::numbers::pi);
  const int shape = static_cast<int>(label % 4);
  std::vector<Point> poly;
  if (shape == 1) poly = regular_polygon(cx, cy, radius * 1.15, 4, rot);
  if (shape == 2) poly = regular_polygon(cx, cy, radius * 1.25, 3, rot);
  if (shape == 3) poly = regular_polygon(cx, cy, radius * 1.3, 5, rot, 0.45);

  auto covered = [&](double x, double y) {
    if (shape == 0) return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= radius * radius;
    return inside_polygon(poly, x, y);
  };

  std::normal_distribution<double> noise(0.0, 0.02);
  auto img = torch::empty({3, res, res}, torch::kFloat32);
  auto acc = img.accessor<float, 3>();
  for (int64_t y = 0; y < res; ++y) {
    for (int64_t x = 0; x < res; ++x) {
      const double t = (x * std::cos(stripe_angle) + y * std::sin(stripe_angle)) * stripe_freq + stripe_phase;
      const Rgb bg = hsv_to_rgb(bg_hue, bg_sat, std::clamp(bg_val + 0.12 * std::sin(t) + noise(rng), 0.0, 1.0));
      // 2x2 supersampling for anti-aliased edges.
      int hits = 0;
      for (double dy : {0.25, 0.75}) {
        for (double dx : {0.25, 0.75}) hits += covered(x + dx, y + dy) ? 1 : 0;
      }
      const double cover = hits / 4.0;
      const double dist = std::hypot(x + 0.5 - cx, y + 0.5 - cy) / radius;
      const double shade = 1.0 - 0.25 * std::min(dist, 1.0);
      for (int c = 0; c < 3; ++c) {
        const double v = cover * obj[c] * shade + (1.0 - cover) * bg[c];
        acc[c][y][x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return img;
}

std::string image_name(int64_t i) {
  std::ostringstream os;
  os << std::setw(5) << std::setfill('0') << i << ".png";
  return os.str();
}

std::vector<int64_t> seeded_permutation(int64_t n, std::uint64_t seed, std::uint64_t stream) {
  std::vector<int64_t> perm(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::mt19937_64 rng(seq);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

}  // namespace

LabeledImages LabeledImages::subset(const std::vector<int64_t>& indices) const {
  LabeledImages out;
  auto index = torch::tensor(indices, torch::kInt64);
  out.images = images.index_select(0, index);
  out.labels = labels.index_select(0, index);
  for (auto i : indices) out.names.push_back(names.at(static_cast<size_t>(i)));
  return out;
}

LabeledImages LabeledImages::head(int64_t n) const {
  std::vector<int64_t> idx;
  for (int64_t i = 0; i < std::min(n, size()); ++i) idx.push_back(i);
  return subset(idx);
}

void DatasetSpec::validate() const {
  if (num_classes <= 0) throw DatasetError("dataset needs at least one class");
  if (n_images < num_classes) throw DatasetError("dataset needs at least one image per class");
  if (resolution < 8) throw DatasetError("dataset resolution must be >= 8");
  if (val_fraction < 0.0 || val_fraction >= 1.0) throw DatasetError("val_fraction must lie in [0, 1)");
}

double class_base_hue(int64_t label, int64_t num_classes) {
  return 10.0 + 360.0 * static_cast<double>(label) / static_cast<double>(num_classes);
}

void make_synthetic_dataset(const DatasetSpec& spec, const std::filesystem::path& dir) {
  spec.validate();
  if (spec.source != DatasetSource::kSynthetic) throw DatasetError("make_synthetic_dataset needs a synthetic spec");
  std::filesystem::create_directories(dir);
  std::ofstream labels(dir / "labels.tsv");
  if (!labels) throw DatasetError("cannot write " + (dir / "labels.tsv").string());
  for (int64_t i = 0; i < spec.n_images; ++i) {
    const int64_t label = i % spec.num_classes;
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(i)};
    std::mt19937_64 rng(seq);
    const auto name = image_name(i);
    write_png(dir / name, RgbImage(render(label, spec.num_classes, spec.resolution, rng)));
    labels << name << "\t" << label << "\n";
  }
}

LabeledImages load_dataset(const std::filesystem::path& dir, int64_t resolution, int64_t num_classes) {
  std::ifstream in(dir / "labels.tsv");
  if (!in) throw DatasetError("missing " + (dir / "labels.tsv").string());
  LabeledImages out;
  std::vector<torch::Tensor> images;
  std::vector<int64_t> labels;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string name, label_text;
    if (!std::getline(row, name, '\t') || !std::getline(row, label_text)) {
      throw DatasetError("labels.tsv:" + std::to_string(lineno) + ": expected filename<TAB>class");
    }
    int64_t label = 0;
    try {
      label = std::stoll(label_text);
    } catch (const std::exception&) {
      throw DatasetError("labels.tsv:" + std::to_string(lineno) + ": bad class index '" + label_text + "'");
    }
    if (label < 0 || label >= num_classes) {
      throw DatasetError("labels.tsv:" + std::to_string(lineno) + ": class " + std::to_string(label) +
                         " outside [0, " + std::to_string(num_classes) + ")");
    }
    images.push_back(resize_image(read_png(dir / name), resolution).tensor());
    labels.push_back(label);
    out.names.push_back(name);
  }
  if (images.empty()) throw DatasetError("dataset " + dir.string() + " is empty");
  out.images = torch::stack(images);
  out.labels = torch::tensor(labels, torch::kInt64);
  return out;
}

DatasetSplit split_dataset(const LabeledImages& data, double val_fraction, std::uint64_t seed) {
  const auto n = data.size();
  const auto n_val = static_cast<int64_t>(std::llround(val_fraction * static_cast<double>(n)));
  auto perm = seeded_permutation(n, seed, 0x5eed);
  std::vector<int64_t> val(perm.begin(), perm.begin() + n_val);
  std::vector<int64_t> train(perm.begin() + n_val, perm.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  DatasetSplit out;
  out.train = data.subset(train);
  if (!val.empty()) out.val = data.subset(val);
  return out;
}

std::vector<int64_t> batch_indices(int64_t dataset_size, int64_t batch_size, std::uint64_t seed, int64_t step) {
  if (dataset_size <= 0 || batch_size <= 0) throw DatasetError("empty dataset or batch");
  const int64_t per_epoch = std::max<int64_t>(1, dataset_size / batch_size);
  const auto epoch = static_cast<std::uint64_t>(step / per_epoch);
  const int64_t offset = (step % per_epoch) * batch_size;
  auto perm = seeded_permutation(dataset_size, seed, epoch + 1);
  std::vector<int64_t> out;
  for (int64_t i = 0; i < batch_size; ++i) out.push_back(perm[static_cast<size_t>((offset + i) % dataset_size)]);
  return out;
}

}  // namespace gcp
