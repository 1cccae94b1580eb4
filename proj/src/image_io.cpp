#include "gcp/image_io.hpp"

#include <png.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "gcp/errors.hpp"

namespace gcp {

namespace {

RgbImage from_rgb8(std::vector<std::uint8_t> pixels, int64_t height, int64_t width) {
  auto t = torch::from_blob(pixels.data(), {height, width, 3}, torch::kUInt8)
               .permute({2, 0, 1})
               .to(torch::kFloat32)
               .div(255.0)
               .contiguous();
  return RgbImage(t);
}

std::vector<std::uint8_t> to_rgb8(const RgbImage& img) {
  auto q = img.tensor()
               .detach()
               .to(torch::kFloat64)
               .mul(255.0)
               .round()
               .clamp(0, 255)
               .to(torch::kUInt8)
               .permute({1, 2, 0})
               .contiguous();
  std::vector<std::uint8_t> out(static_cast<size_t>(q.numel()));
  std::memcpy(out.data(), q.data_ptr<std::uint8_t>(), out.size());
  return out;
}

}  // namespace

RgbImage decode_png(const std::vector<std::uint8_t>& bytes) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (bytes.empty() || !png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw ValidationError(std::string("png decode failed: ") + (bytes.empty() ? "empty input" : image.message));
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw ValidationError("png decode failed: " + msg);
  }
  return from_rgb8(std::move(pixels), image.height, image.width);
}

RgbImage read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_png(bytes);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_png(const RgbImage& img) {
  auto pixels = to_rgb8(img);
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
    throw ValidationError(std::string("png encode failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
    throw ValidationError(std::string("png encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

void write_png(const std::filesystem::path& path, const RgbImage& img) {
  auto bytes = encode_png(img);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

RgbImage resize_image(const RgbImage& img, int64_t size) {
  if (img.height() == size && img.width() == size) return img;
  namespace F = torch::nn::functional;
  auto out = F::interpolate(img.tensor().unsqueeze(0),
                            F::InterpolateFuncOptions()
                                .size(std::vector<int64_t>{size, size})
                                .mode(torch::kBilinear)
                                .align_corners(false)
                                .antialias(true));
  return RgbImage(out.squeeze(0).clamp(0.0, 1.0));
}

}  // namespace gcp
