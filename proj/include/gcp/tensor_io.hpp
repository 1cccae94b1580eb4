#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gcp {

// Named tensor blob file. Layout (little-endian):
//   "GCPTNSR1"  u32 count
//   count x { u32 name_len, name bytes, u8 dtype, u32 ndim, i64 dims[ndim],
//             u64 nbytes, raw data }
// dtype codes: 0 float32, 1 float64, 2 int64, 3 uint8, 4 int32.
using TensorMap = std::map<std::string, torch::Tensor>;

void write_tensors(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap read_tensors(const std::filesystem::path& path);

// Every parameter and buffer of `module`, keyed by its dotted name.
TensorMap module_state(const torch::nn::Module& module);

// Copies `state` into `module`. The name sets must match exactly and every
// shape must agree; otherwise CheckpointError names the offending tensor.
void load_module_state(torch::nn::Module& module, const TensorMap& state, const std::string& what);

void save_module(const std::filesystem::path& path, const torch::nn::Module& module);
void load_module(const std::filesystem::path& path, torch::nn::Module& module);

// Flat `key = value` text file; '#' starts a comment.
class Metadata {
 public:
  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  void set(const std::string& key, double value);
  void set(const std::string& key, int64_t value);
  void set(const std::string& key, const std::vector<int64_t>& values);

  bool contains(const std::string& key) const { return entries_.count(key) != 0; }
  std::string get(const std::string& key) const;
  std::optional<std::string> find(const std::string& key) const;
  int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::vector<int64_t> get_ints(const std::string& key) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

  void write(const std::filesystem::path& path) const;
  static Metadata read(const std::filesystem::path& path);

 private:
  std::map<std::string, std::string> entries_;
};

std::vector<int64_t> parse_int_list(const std::string& text);
std::string format_int_list(const std::vector<int64_t>& values);

// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);

}  // namespace gcp
