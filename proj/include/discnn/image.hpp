#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "discnn/tensor.hpp"

namespace discnn {

// 8-bit RGB, interleaved, row-major. x is the column, y the row, origin at
// the top-left.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;  // width*height*3

  Image() = default;
  Image(int w, int h) : width(w), height(h) {
    if (w < 1 || h < 1)
      throw shape_error("image: dimensions must be positive, got " +
                        std::to_string(w) + "x" + std::to_string(h));
    pixels.assign(static_cast<size_t>(w) * h * 3, 0);
  }
  uint8_t* at(int x, int y) { return pixels.data() + (static_cast<size_t>(y) * width + x) * 3; }
  const uint8_t* at(int x, int y) const {
    return pixels.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
};

// Half-open pixel box [xmin,xmax) x [ymin,ymax).
struct Box {
  int xmin = 0, ymin = 0, xmax = 0, ymax = 0;

  int width() const { return xmax - xmin; }
  int height() const { return ymax - ymin; }
  bool valid() const { return xmin < xmax && ymin < ymax; }
  bool operator==(const Box&) const = default;
};

using Color = std::array<uint8_t, 3>;

// Binary PPM ("P6", maxval 255). Lossless round trip.
Image load_image(const std::string& path);
void save_image(const Image& img, const std::string& path);

// Corner-aligned bilinear resampling.
Image resize_bilinear(const Image& src, int target_w, int target_h);

// Same resampling, but producing [0,1] floats straight into a row-strided
// float buffer (the network input). Avoids the 8-bit round trip.
void resize_bilinear_to_float(const Image& src, int n, float* dst,
                              int dst_row_stride);

// Paints box borders (thickness grows inward), clamped to the image; interior
// pixels are untouched.
Image draw_boxes(const Image& img, const std::vector<Box>& boxes, Color color,
                 int thickness = 2);

}  // namespace discnn
