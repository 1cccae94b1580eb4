#include "gcp/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "gcp/errors.hpp"

namespace gcp {

static_assert(std::endian::native == std::endian::little, "tensor blobs are written in host order");

namespace {

constexpr char kMagic[8] = {'G', 'C', 'P', 'T', 'N', 'S', 'R', '1'};

std::uint8_t dtype_code(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return 0;
    case torch::kFloat64: return 1;
    case torch::kInt64: return 2;
    case torch::kUInt8: return 3;
    case torch::kInt32: return 4;
    default: throw CheckpointError(std::string("unsupported tensor dtype ") + c10::toString(t));
  }
}

torch::ScalarType dtype_from_code(std::uint8_t code) {
  switch (code) {
    case 0: return torch::kFloat32;
    case 1: return torch::kFloat64;
    case 2: return torch::kInt64;
    case 3: return torch::kUInt8;
    case 4: return torch::kInt32;
    default: throw CheckpointError("unknown dtype code " + std::to_string(code));
  }
}

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T take(std::istream& in, const std::filesystem::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw CheckpointError(path.string() + ": truncated tensor file");
  }
  return value;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string sizes_string(torch::IntArrayRef sizes) {
  std::ostringstream os;
  os << sizes;
  return os.str();
}

}  // namespace

void write_tensors(const std::filesystem::path& path, const TensorMap& tensors) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    auto t = tensor.detach().to(torch::kCPU).contiguous();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(out, dtype_code(t.scalar_type()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.sizes()) put<std::int64_t>(out, d);
    const auto nbytes = static_cast<std::uint64_t>(t.numel() * t.element_size());
    put<std::uint64_t>(out, nbytes);
    out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes));
  }
  if (!out) throw CheckpointError("write failed for " + path.string());
}

TensorMap read_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("missing tensor file " + path.string());
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(path.string() + ": not a tensor blob file");
  }
  const auto count = take<std::uint32_t>(in, path);
  TensorMap tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = take<std::uint32_t>(in, path);
    if (name_len > 4096) throw CheckpointError(path.string() + ": corrupt tensor name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw CheckpointError(path.string() + ": truncated tensor file");
    const auto dtype = dtype_from_code(take<std::uint8_t>(in, path));
    const auto ndim = take<std::uint32_t>(in, path);
    if (ndim > 8) throw CheckpointError(path.string() + ": corrupt rank for " + name);
    std::vector<int64_t> dims(ndim);
    for (auto& d : dims) d = take<std::int64_t>(in, path);
    const auto nbytes = take<std::uint64_t>(in, path);
    auto t = torch::empty(dims, torch::TensorOptions().dtype(dtype));
    if (nbytes != static_cast<std::uint64_t>(t.numel() * t.element_size())) {
      throw CheckpointError(path.string() + ": byte count mismatch for " + name);
    }
    if (!in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes))) {
      throw CheckpointError(path.string() + ": truncated data for " + name);
    }
    tensors.emplace(std::move(name), std::move(t));
  }
  return tensors;
}

TensorMap module_state(const torch::nn::Module& module) {
  TensorMap state;
  for (const auto& p : module.named_parameters(true)) state.emplace(p.key(), p.value());
  for (const auto& b : module.named_buffers(true)) state.emplace(b.key(), b.value());
  return state;
}

void load_module_state(torch::nn::Module& module, const TensorMap& state, const std::string& what) {
  auto targets = module_state(module);
  for (const auto& [name, _] : state) {
    if (!targets.count(name)) throw CheckpointError(what + ": unexpected tensor '" + name + "'");
  }
  torch::NoGradGuard no_grad;
  for (auto& [name, target] : targets) {
    auto it = state.find(name);
    if (it == state.end()) throw CheckpointError(what + ": missing tensor '" + name + "'");
    if (it->second.sizes() != target.sizes()) {
      throw CheckpointError(what + ": shape mismatch for '" + name + "': expected " + sizes_string(target.sizes()) +
                            ", found " + sizes_string(it->second.sizes()));
    }
    target.copy_(it->second.to(target.scalar_type()));
  }
}

void save_module(const std::filesystem::path& path, const torch::nn::Module& module) {
  write_tensors(path, module_state(module));
}

void load_module(const std::filesystem::path& path, torch::nn::Module& module) {
  load_module_state(module, read_tensors(path), path.string());
}

void Metadata::set(const std::string& key, double value) {
  std::ostringstream os;
  os << std::setprecision(17) << value;
  entries_[key] = os.str();
}

void Metadata::set(const std::string& key, int64_t value) { entries_[key] = std::to_string(value); }

void Metadata::set(const std::string& key, const std::vector<int64_t>& values) {
  entries_[key] = format_int_list(values);
}

std::optional<std::string> Metadata::find(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string Metadata::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw CheckpointError("metadata key '" + key + "' missing");
  return it->second;
}

int64_t Metadata::get_int(const std::string& key) const {
  const auto v = get(key);
  try {
    size_t used = 0;
    auto out = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw CheckpointError("metadata key '" + key + "' is not an integer: " + v);
  }
}

double Metadata::get_double(const std::string& key) const {
  const auto v = get(key);
  try {
    size_t used = 0;
    auto out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw CheckpointError("metadata key '" + key + "' is not a number: " + v);
  }
}

std::vector<int64_t> Metadata::get_ints(const std::string& key) const {
  try {
    return parse_int_list(get(key));
  } catch (const ConfigError& e) {
    throw CheckpointError("metadata key '" + key + "': " + e.what());
  }
}

void Metadata::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot write " + path.string());
  for (const auto& [k, v] : entries_) out << k << " = " << v << "\n";
}

Metadata Metadata::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("missing metadata file " + path.string());
  Metadata md;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw CheckpointError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    md.entries_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return md;
}

std::vector<int64_t> parse_int_list(const std::string& text) {
  std::vector<int64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      size_t used = 0;
      out.push_back(std::stoll(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("not an integer list: '" + text + "'");
    }
  }
  return out;
}

std::string format_int_list(const std::vector<int64_t>& values) {
  std::string out;
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(values[i]);
  }
  return out;
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<std::uint8_t>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace gcp
