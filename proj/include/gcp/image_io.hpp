#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gcp/colorspace.hpp"

namespace gcp {

// 8-bit PNG I/O. Grayscale and palette files are expanded to RGB by channel
// replication; alpha is dropped. Pixels are mapped to [0,1] as v / 255.
RgbImage read_png(const std::filesystem::path& path);
RgbImage decode_png(const std::vector<std::uint8_t>& bytes);

// Values are quantized with round(v * 255).
void write_png(const std::filesystem::path& path, const RgbImage& img);
std::vector<std::uint8_t> encode_png(const RgbImage& img);

// Bilinear resize to size x size (no-op when already that size).
RgbImage resize_image(const RgbImage& img, int64_t size);

}  // namespace gcp
