#ifndef RECOLOR_PNG_HPP
#define RECOLOR_PNG_HPP

#include <cstdint>
#include <filesystem>
#include <vector>

#include "recolor/tensor.hpp"

namespace recolor {

// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct RgbRaster {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;

  RgbRaster() = default;
  RgbRaster(int w, int h, uint8_t fill = 255)
      : width(w), height(h), pixels(static_cast<size_t>(w) * h * 3, fill) {}

  uint8_t* px(int x, int y) { return pixels.data() + (static_cast<size_t>(y) * width + x) * 3; }
  const uint8_t* px(int x, int y) const {
    return pixels.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
};

// v in [0,1] per channel mapped with round(v*255); out-of-range values clamp.
RgbRaster raster_from_image(const Tensor& chw);

// Copies src into dst with its top-left corner at (x, y).
void blit(RgbRaster& dst, const RgbRaster& src, int x, int y);

void write_png(const std::filesystem::path& path, const RgbRaster& img);

}  // namespace recolor

#endif  // RECOLOR_PNG_HPP
