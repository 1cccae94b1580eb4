#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gcp {

// In-memory labeled image set.
struct LabeledImages {
  torch::Tensor images;            // [N, 3, R, R] float32 in [0, 1]
  torch::Tensor labels;            // [N] int64
  std::vector<std::string> names;  // file names, parallel to images

  int64_t size() const { return images.defined() ? images.size(0) : 0; }
  int64_t resolution() const { return images.size(2); }
  LabeledImages subset(const std::vector<int64_t>& indices) const;
  LabeledImages head(int64_t n) const;
};

enum class DatasetSource { kSynthetic, kImageFolder };

struct DatasetSpec {
  DatasetSource source = DatasetSource::kSynthetic;
  int64_t n_images = 2000;
  int64_t num_classes = 4;
  int64_t resolution = 64;
  double val_fraction = 0.1;
  std::uint64_t seed = 7;

  void validate() const;
};

// Class k draws a shape (circle, square, triangle, star, cycling for k >= 4)
// in a hue family centred on k * 360 / K degrees, over a textured background
// from a neighbouring desaturated hue. Writes NNNNN.png files and labels.tsv.
void make_synthetic_dataset(const DatasetSpec& spec, const std::filesystem::path& dir);

// Hue (degrees) at the centre of class k's object palette.
double class_base_hue(int64_t label, int64_t num_classes);

// Reads `labels.tsv` (filename <tab> class) and the listed PNGs, resized to
// `resolution`. Rows are kept in file order.
LabeledImages load_dataset(const std::filesystem::path& dir, int64_t resolution, int64_t num_classes);

struct DatasetSplit {
  LabeledImages train;
  LabeledImages val;
};

// Seeded shuffle; the first round(val_fraction * N) shuffled items form val.
// Both halves keep ascending file order.
DatasetSplit split_dataset(const LabeledImages& data, double val_fraction, std::uint64_t seed);

// Deterministic mini-batch indices: each epoch is a seeded permutation and
// step t takes the t-th window of it (wrapping within the epoch).
std::vector<int64_t> batch_indices(int64_t dataset_size, int64_t batch_size, std::uint64_t seed, int64_t step);

}  // namespace gcp
