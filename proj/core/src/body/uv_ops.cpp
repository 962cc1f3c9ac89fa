#include "repose/body/uv_ops.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace repose::body {

int64_t UVTexture::valid_count() const {
  int64_t n = 0;
  for (double v : valid.px) n += v != 0.0;
  return n;
}

Eigen::Vector2d pixel_uv(const MeshTemplate& tpl, const RasterResult& rr, int y, int x) {
  const int64_t p = rr.idx(y, x);
  const int f = rr.face_id[static_cast<size_t>(p)];
  if (f < 0) throw std::invalid_argument("pixel_uv: pixel not covered");
  Eigen::Vector2d uv = Eigen::Vector2d::Zero();
  for (int k = 0; k < 3; ++k)
    uv += rr.bary[static_cast<size_t>(p) * 3 + k] * Eigen::Vector2d(tpl.uv.row(tpl.faces(f, k)));
  return uv;
}

namespace {
int uv_to_texel(double u, int size) {
  int t = static_cast<int>(std::floor(u * size));
  return std::clamp(t, 0, size - 1);
}
}  // namespace

UVTexture project_to_uv(const core::Image& image, const MeshTemplate& tpl,
                        const RasterResult& rr, int texture_size) {
  if (texture_size <= 0) throw std::invalid_argument("project_to_uv: bad texture size");
  if (image.h != rr.h || image.w != rr.w || image.c != 3)
    throw std::invalid_argument("project_to_uv: image/raster shape mismatch");
  UVTexture tex(texture_size);
  // nearest observed depth per texel; scan order breaks exact ties
  std::vector<double> best(static_cast<size_t>(texture_size) * texture_size,
                           std::numeric_limits<double>::infinity());
  for (int y = 0; y < rr.h; ++y)
    for (int x = 0; x < rr.w; ++x) {
      if (!rr.covered(y, x)) continue;
      const Eigen::Vector2d uv = pixel_uv(tpl, rr, y, x);
      const int tu = uv_to_texel(uv.x(), texture_size);
      const int tv = uv_to_texel(uv.y(), texture_size);
      const double z = rr.depth[static_cast<size_t>(rr.idx(y, x))];
      double& b = best[static_cast<size_t>(tv) * texture_size + tu];
      if (z < b) {
        b = z;
        for (int c = 0; c < 3; ++c) tex.color.at(tv, tu, c) = image.at(y, x, c);
        tex.valid.at(tv, tu) = 1.0;
      }
    }
  return tex;
}

UVTexture complete_texture(const UVTexture& tex) {
  if (tex.size <= 0) throw std::invalid_argument("complete_texture: empty texture");
  if (tex.valid_count() == 0)
    throw std::invalid_argument("complete_texture: no valid texels to complete from");
  const int s = tex.size;
  UVTexture out = tex;
  for (int ty = 0; ty < s; ++ty)
    for (int tx = 0; tx < s; ++tx) {
      if (tex.valid.at(ty, tx) != 0.0) continue;
      // expanding Chebyshev rings; once a candidate is found, rings beyond
      // sqrt(best_d2) cannot contain anything closer
      int64_t best_d2 = std::numeric_limits<int64_t>::max();
      int64_t best_idx = -1;
      const int max_r = s - 1;
      for (int r = 1; r <= max_r; ++r) {
        if (best_idx >= 0 && static_cast<int64_t>(r) * r > best_d2) break;
        const int y0 = ty - r, y1 = ty + r, x0 = tx - r, x1 = tx + r;
        auto consider = [&](int y, int x) {
          if (y < 0 || y >= s || x < 0 || x >= s) return;
          if (tex.valid.at(y, x) == 0.0) return;
          const int64_t dy = y - ty, dx = x - tx;
          const int64_t d2 = dy * dy + dx * dx;
          const int64_t idx = static_cast<int64_t>(y) * s + x;
          if (d2 < best_d2 || (d2 == best_d2 && idx < best_idx)) {
            best_d2 = d2;
            best_idx = idx;
          }
        };
        for (int x = x0; x <= x1; ++x) {
          consider(y0, x);
          consider(y1, x);
        }
        for (int y = y0 + 1; y <= y1 - 1; ++y) {
          consider(y, x0);
          consider(y, x1);
        }
      }
      const int sy = static_cast<int>(best_idx / s), sx = static_cast<int>(best_idx % s);
      for (int c = 0; c < 3; ++c) out.color.at(ty, tx, c) = tex.color.at(sy, sx, c);
      out.valid.at(ty, tx) = 1.0;
    }
  return out;
}

UVTexture complete_texture_bruteforce(const UVTexture& tex) {
  if (tex.valid_count() == 0)
    throw std::invalid_argument("complete_texture: no valid texels to complete from");
  const int s = tex.size;
  UVTexture out = tex;
  for (int ty = 0; ty < s; ++ty)
    for (int tx = 0; tx < s; ++tx) {
      if (tex.valid.at(ty, tx) != 0.0) continue;
      int64_t best_d2 = std::numeric_limits<int64_t>::max();
      int64_t best_idx = -1;
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
          if (tex.valid.at(y, x) == 0.0) continue;
          const int64_t dy = y - ty, dx = x - tx;
          const int64_t d2 = dy * dy + dx * dx;
          const int64_t idx = static_cast<int64_t>(y) * s + x;
          if (d2 < best_d2 || (d2 == best_d2 && idx < best_idx)) {
            best_d2 = d2;
            best_idx = idx;
          }
        }
      const int sy = static_cast<int>(best_idx / s), sx = static_cast<int>(best_idx % s);
      for (int c = 0; c < 3; ++c) out.color.at(ty, tx, c) = tex.color.at(sy, sx, c);
      out.valid.at(ty, tx) = 1.0;
    }
  return out;
}

core::Image warp_texture(const UVTexture& tex, const MeshTemplate& tpl,
                         const RasterResult& rr) {
  core::Image out(rr.h, rr.w, 3);
  for (int y = 0; y < rr.h; ++y)
    for (int x = 0; x < rr.w; ++x) {
      if (!rr.covered(y, x)) continue;
      const Eigen::Vector2d uv = pixel_uv(tpl, rr, y, x);
      const int tu = uv_to_texel(uv.x(), tex.size);
      const int tv = uv_to_texel(uv.y(), tex.size);
      if (tex.valid.at(tv, tu) == 0.0) continue;
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = tex.color.at(tv, tu, c);
    }
  return out;
}

}  // namespace repose::body
