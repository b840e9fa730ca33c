#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gaitmm {

struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;
};

// Any PNG, converted to 8-bit grayscale. Throws an I/O error on failure.
GrayImage read_png_gray(const std::string& path);
void write_png_gray(const std::string& path, int height, int width, std::span<const std::uint8_t> pixels);

}  // namespace gaitmm
