#pragma once

// In-memory images are doubles in [0,1], layout [h][w][c]. On disk: binary
// PPM (P6) for 3-channel, PGM (P5) for 1-channel, maxval 255. 8-bit value v
// maps to v/255.0 exactly.

#include <cstdint>
#include <string>
#include <vector>

namespace repose::core {

struct Image {
  int h = 0, w = 0, c = 1;
  std::vector<double> px;

  Image() = default;
  Image(int h_, int w_, int c_, double fill = 0.0)
      : h(h_), w(w_), c(c_), px(static_cast<size_t>(h_) * w_ * c_, fill) {}

  double& at(int y, int x, int ch = 0) {
    return px[(static_cast<size_t>(y) * w + x) * c + ch];
  }
  double at(int y, int x, int ch = 0) const {
    return px[(static_cast<size_t>(y) * w + x) * c + ch];
  }
  bool empty() const { return px.empty(); }
  int64_t size() const { return static_cast<int64_t>(px.size()); }
};

// Reads P5 (c=1) or P6 (c=3), maxval must be 255.
Image read_image(const std::string& path);
// Writes P6 when img.c==3, P5 when img.c==1. Values are clamped to [0,1] and
// rounded to the nearest 8-bit level.
void write_image(const std::string& path, const Image& img);

uint8_t quantize8(double v);

// Bilinear resize (used by the loader; exact pass-through when sizes match).
Image resize_bilinear(const Image& img, int out_h, int out_w);
// Crop; the rectangle must be inside the image.
Image crop(const Image& img, int y0, int x0, int h, int w);

}  // namespace repose::core
