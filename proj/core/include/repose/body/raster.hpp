#pragma once

// Software z-buffer rasterizer. Faces are processed in index order and the
// depth test is strict, so depth ties resolve to the lower face index.

#include <vector>

#include "repose/body/types.hpp"

namespace repose::body {

struct RasterResult {
  int h = 0, w = 0;
  std::vector<double> depth;     // camera-space z; +inf where empty
  std::vector<int32_t> face_id;  // -1 where empty
  std::vector<double> bary;      // [h*w*3] perspective-correct barycentrics
  std::vector<uint8_t> mask;     // 1 where any face covers the pixel

  bool covered(int y, int x) const { return face_id[static_cast<size_t>(y) * w + x] >= 0; }
  int64_t idx(int y, int x) const { return static_cast<int64_t>(y) * w + x; }
};

RasterResult rasterize(const Points& verts, const Faces& faces, const Camera& cam);

// Area-weighted smooth per-vertex normals (world space, unit length).
Points vertex_normals(const Points& verts, const Faces& faces);

}  // namespace repose::body
