#include "repose/body/condition_maps.hpp"

#include <cmath>
#include <stdexcept>

namespace repose::body {

void palette_color(int part, int part_count, double rgb[3]) {
  if (part < 0 || part >= part_count)
    throw std::invalid_argument("palette_color: part out of range");
  const double h = 360.0 * part / part_count / 60.0;  // sector in [0,6)
  const int sector = static_cast<int>(std::floor(h)) % 6;
  const double f = h - std::floor(h);
  const double q = 1.0 - f, t = f;  // s = v = 1
  switch (sector) {
    case 0: rgb[0] = 1; rgb[1] = t; rgb[2] = 0; break;
    case 1: rgb[0] = q; rgb[1] = 1; rgb[2] = 0; break;
    case 2: rgb[0] = 0; rgb[1] = 1; rgb[2] = t; break;
    case 3: rgb[0] = 0; rgb[1] = q; rgb[2] = 1; break;
    case 4: rgb[0] = t; rgb[1] = 0; rgb[2] = 1; break;
    default: rgb[0] = 1; rgb[1] = 0; rgb[2] = q; break;
  }
}

void encode_normal(const Vec3& n_world, const Camera& cam, double rgb[3]) {
  const Vec3 n_cv = cam.R * n_world;  // camera frame, z away from viewer
  // GL-style frame flips y and z so a camera-facing normal is +z.
  const Vec3 n_gl(n_cv.x(), -n_cv.y(), -n_cv.z());
  for (int k = 0; k < 3; ++k) rgb[k] = n_gl(k) * 0.5 + 0.5;
}

ConditionMaps rasterize_condition_maps(const MeshTemplate& tpl, const PosedBody& posed,
                                       const Camera& cam,
                                       const UVTexture& completed_texture) {
  if (completed_texture.valid_count() !=
      static_cast<int64_t>(completed_texture.size) * completed_texture.size)
    throw std::invalid_argument("condition maps: texture must be completed first");

  const RasterResult rr = rasterize(posed.vertices, tpl.faces, cam);
  const Points normals = vertex_normals(posed.vertices, tpl.faces);

  ConditionMaps out;
  out.texture = warp_texture(completed_texture, tpl, rr);
  out.normal = core::Image(rr.h, rr.w, 3);
  out.semantic = core::Image(rr.h, rr.w, 3);
  out.mask = core::Image(rr.h, rr.w, 1);

  for (int y = 0; y < rr.h; ++y)
    for (int x = 0; x < rr.w; ++x) {
      if (!rr.covered(y, x)) continue;
      const int64_t p = rr.idx(y, x);
      const int f = rr.face_id[static_cast<size_t>(p)];
      out.mask.at(y, x) = 1.0;

      Vec3 n = Vec3::Zero();
      for (int k = 0; k < 3; ++k)
        n += rr.bary[static_cast<size_t>(p) * 3 + k] * Vec3(normals.row(tpl.faces(f, k)));
      const double len = n.norm();
      if (len > 1e-12) n /= len;
      double nrgb[3];
      encode_normal(n, cam, nrgb);
      for (int k = 0; k < 3; ++k) out.normal.at(y, x, k) = nrgb[k];

      // faces never span parts, so the first vertex's label is the face label
      double prgb[3];
      palette_color(tpl.part_labels[static_cast<size_t>(tpl.faces(f, 0))], tpl.part_count, prgb);
      for (int k = 0; k < 3; ++k) out.semantic.at(y, x, k) = prgb[k];
    }
  return out;
}

}  // namespace repose::body
