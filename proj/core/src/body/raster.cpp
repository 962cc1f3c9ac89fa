#include "repose/body/raster.hpp"

#include <cmath>
#include <limits>

namespace repose::body {

RasterResult rasterize(const Points& verts, const Faces& faces, const Camera& cam) {
  cam.validate();
  RasterResult out;
  out.h = cam.height;
  out.w = cam.width;
  const size_t np = static_cast<size_t>(out.h) * out.w;
  out.depth.assign(np, std::numeric_limits<double>::infinity());
  out.face_id.assign(np, -1);
  out.bary.assign(np * 3, 0.0);
  out.mask.assign(np, 0);

  constexpr double kZNear = 1e-6;
  for (int f = 0; f < faces.rows(); ++f) {
    Vec3 pc[3];
    Eigen::Vector2d pp[3];
    bool in_front = true;
    for (int k = 0; k < 3; ++k) {
      pc[k] = cam.to_camera(verts.row(faces(f, k)));
      if (pc[k].z() <= kZNear) {
        in_front = false;  // no near-plane clipping; partial faces are skipped
        break;
      }
      pp[k] = cam.project(pc[k]);
    }
    if (!in_front) continue;

    const double area = (pp[1].x() - pp[0].x()) * (pp[2].y() - pp[0].y()) -
                        (pp[2].x() - pp[0].x()) * (pp[1].y() - pp[0].y());
    if (area == 0.0) continue;

    const double min_x = std::min({pp[0].x(), pp[1].x(), pp[2].x()});
    const double max_x = std::max({pp[0].x(), pp[1].x(), pp[2].x()});
    const double min_y = std::min({pp[0].y(), pp[1].y(), pp[2].y()});
    const double max_y = std::max({pp[0].y(), pp[1].y(), pp[2].y()});
    // Pixel (x, y) samples at its center (x+0.5, y+0.5).
    const int x0 = std::max(0, static_cast<int>(std::floor(min_x - 0.5)));
    const int x1 = std::min(out.w - 1, static_cast<int>(std::ceil(max_x - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(min_y - 0.5)));
    const int y1 = std::min(out.h - 1, static_cast<int>(std::ceil(max_y - 0.5)));
    if (x0 > x1 || y0 > y1) continue;

    const double inv_area = 1.0 / area;
    for (int y = y0; y <= y1; ++y) {
      const double sy = y + 0.5;
      for (int x = x0; x <= x1; ++x) {
        const double sx = x + 0.5;
        // signed sub-areas -> screen-space barycentrics
        const double l0 = ((pp[1].x() - sx) * (pp[2].y() - sy) -
                           (pp[2].x() - sx) * (pp[1].y() - sy)) * inv_area;
        const double l1 = ((pp[2].x() - sx) * (pp[0].y() - sy) -
                           (pp[0].x() - sx) * (pp[2].y() - sy)) * inv_area;
        const double l2 = 1.0 - l0 - l1;
        if (l0 < 0 || l1 < 0 || l2 < 0) continue;
        // perspective-correct interpolation
        const double inv_z = l0 / pc[0].z() + l1 / pc[1].z() + l2 / pc[2].z();
        const double z = 1.0 / inv_z;
        const int64_t p = out.idx(y, x);
        if (z < out.depth[static_cast<size_t>(p)]) {
          out.depth[static_cast<size_t>(p)] = z;
          out.face_id[static_cast<size_t>(p)] = f;
          out.mask[static_cast<size_t>(p)] = 1;
          out.bary[static_cast<size_t>(p) * 3 + 0] = l0 / pc[0].z() * z;
          out.bary[static_cast<size_t>(p) * 3 + 1] = l1 / pc[1].z() * z;
          out.bary[static_cast<size_t>(p) * 3 + 2] = l2 / pc[2].z() * z;
        }
      }
    }
  }
  return out;
}

Points vertex_normals(const Points& verts, const Faces& faces) {
  Points normals = Points::Zero(verts.rows(), 3);
  for (int f = 0; f < faces.rows(); ++f) {
    const Vec3 a = verts.row(faces(f, 0));
    const Vec3 b = verts.row(faces(f, 1));
    const Vec3 c = verts.row(faces(f, 2));
    const Vec3 n = (b - a).cross(c - a);  // area-weighted
    for (int k = 0; k < 3; ++k) normals.row(faces(f, k)) += n;
  }
  for (int i = 0; i < normals.rows(); ++i) {
    const double len = normals.row(i).norm();
    if (len > 1e-12)
      normals.row(i) /= len;
    else
      normals.row(i) = Vec3(0, 0, 1);
  }
  return normals;
}

}  // namespace repose::body
