#pragma once

// Geometry-prior condition maps: texture, normal, and semantic renderings of
// the posed template under a target camera. All maps come from one shared
// rasterization, so their foreground masks are identical by construction.

#include "repose/body/lbs.hpp"
#include "repose/body/raster.hpp"
#include "repose/body/uv_ops.hpp"

namespace repose::body {

struct ConditionMaps {
  core::Image texture;   // [H,W,3] warped UV texture
  core::Image normal;    // [H,W,3] camera-space normals, encoded n*0.5+0.5
  core::Image semantic;  // [H,W,3] part palette colors
  core::Image mask;      // [H,W,1] shared foreground mask
};

// Part palette: hue k*360/P with full saturation and value.
void palette_color(int part, int part_count, double rgb[3]);

// Normal encoding: world normal -> camera frame (GL convention: x right,
// y up, z toward the viewer) -> n*0.5+0.5. A camera-facing surface encodes
// to (0.5, 0.5, 1.0).
void encode_normal(const Vec3& n_world, const Camera& cam, double rgb[3]);

ConditionMaps rasterize_condition_maps(const MeshTemplate& tpl, const PosedBody& posed,
                                       const Camera& cam, const UVTexture& completed_texture);

}  // namespace repose::body
