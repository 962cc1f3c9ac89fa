#pragma once

// UV texture extraction and completion. A UVTexture is a square texel grid
// with per-texel validity; projection writes observed pixel colors into
// texels (nearest depth wins on collision) and completion fills every
// invalid texel from its nearest valid one.

#include "repose/body/raster.hpp"
#include "repose/body/types.hpp"
#include "repose/core/image.hpp"

namespace repose::body {

struct UVTexture {
  int size = 0;
  core::Image color;  // [size,size,3]
  core::Image valid;  // [size,size,1], exactly 0 or 1

  explicit UVTexture(int size_ = 0)
      : size(size_), color(size_, size_, 3), valid(size_, size_, 1) {}
  int64_t valid_count() const;
};

// Interpolated UV for a covered raster pixel.
Eigen::Vector2d pixel_uv(const MeshTemplate& tpl, const RasterResult& rr, int y, int x);

// Projects the image onto the posed surface and scatters observed colors
// into the UV atlas: texel <- color of the nearest-depth covering pixel.
UVTexture project_to_uv(const core::Image& image, const MeshTemplate& tpl,
                        const RasterResult& rr, int texture_size);

// Fills invalid texels from the nearest valid texel; ties break on squared
// euclidean texel distance, then row-major texel index. Throws
// std::invalid_argument when no texel is valid. Idempotent.
UVTexture complete_texture(const UVTexture& tex);

// Renders the texture onto the rasterized view (nearest-texel sampling).
// Texels that are invalid contribute black; pixels without coverage are
// black with mask 0.
core::Image warp_texture(const UVTexture& tex, const MeshTemplate& tpl,
                         const RasterResult& rr);

// Brute-force nearest-valid-texel reference used by tests.
UVTexture complete_texture_bruteforce(const UVTexture& tex);

}  // namespace repose::body
