#include "gaitmm/png_io.hpp"

#include <png.h>

#include <cstring>

#include "gaitmm/error.hpp"

namespace gaitmm {

GrayImage read_png_gray(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    fail(ErrorKind::kIo, "cannot read PNG '" + path + "': " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  GrayImage out;
  out.height = static_cast<int>(image.height);
  out.width = static_cast<int>(image.width);
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    fail(ErrorKind::kIo, "cannot decode PNG '" + path + "': " + msg);
  }
  return out;
}

void write_png_gray(const std::string& path, int height, int width, std::span<const std::uint8_t> pixels) {
  if (pixels.size() != static_cast<std::size_t>(height) * width) {
    fail(ErrorKind::kIo, "write_png_gray: buffer does not match " + std::to_string(height) + "x" + std::to_string(width));
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    fail(ErrorKind::kIo, "cannot write PNG '" + path + "': " + image.message);
  }
}

}  // namespace gaitmm
