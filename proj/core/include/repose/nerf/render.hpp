#pragma once

// Ray generation, stratified sampling, and view rendering for the coarse
// stage. Rays that miss the padded posed-body bounding box degenerate to
// zero-length sample intervals, which the volume renderer composites to
// exactly zero color and alpha.

#include <cstdint>
#include <utility>
#include <vector>

#include "repose/body/lbs.hpp"
#include "repose/core/image.hpp"
#include "repose/nerf/features.hpp"
#include "repose/nerf/mlp.hpp"

namespace repose::nerf {

// Full Stage-1 model: encoder, grid conv stack, radiance MLP, one ParamSet.
struct NerfModel {
  NerfConfig cfg;
  ad::ParamSet params;
  ReferenceEncoder encoder;
  FeatureGridNet gridnet;
  NerfMlp mlp;

  explicit NerfModel(const NerfConfig& c, uint64_t seed)
      : cfg(c), params(), encoder(), gridnet(), mlp() {
    core::Rng rng(seed);
    auto r1 = rng.fork(0x656e63);  // per-component streams keep init stable
    auto r2 = rng.fork(0x677269);  // if one module changes its draw count
    auto r3 = rng.fork(0x6d6c70);
    encoder = ReferenceEncoder(cfg, r1, params);
    gridnet = FeatureGridNet(cfg, r2, params);
    mlp = NerfMlp(cfg, r3, params);
  }
};

struct RaySampleBatch {
  std::vector<double> origins;     // [N*3]
  std::vector<double> dirs;        // [N*3], unit within 1e-6
  std::vector<double> ts;          // [N*S] strictly non-decreasing per ray
  std::vector<double> far;         // [N]
  std::vector<double> positions;   // [N*S*3]
  int n = 0, s = 0;
  void validate() const;  // throws std::invalid_argument
};

// Stratified samples for the given pixels; rays missing the padded bbox get
// near == far (all samples coincide at the far plane).
RaySampleBatch make_ray_samples(const body::Camera& cam,
                                const std::vector<std::pair<int, int>>& pixels_yx,
                                const body::Points& posed_verts, double bbox_pad, int s,
                                core::Rng& rng);

struct RenderedRays {
  ad::Tensor rgb;    // [N,3]
  ad::Tensor alpha;  // [N]
  ad::Tensor depth;  // [N]
};

// Differentiable render of one pixel batch under the target pose.
RenderedRays render_rays(const NerfModel& model, const RefContext& ref,
                         const body::MeshTemplate& tpl, const body::BodyParams& pose_tgt,
                         const body::PosedBody& posed_tgt, const body::VertexGrid& tgt_grid,
                         const body::Camera& cam, const std::vector<std::pair<int, int>>& pixels_yx,
                         int s, core::Rng& rng);

struct CoarseRender {
  core::Image rgb;    // [H,W,3]
  core::Image alpha;  // [H,W,1] in [0,1]
  core::Image depth;  // [H,W,1] expected ray termination distance
  core::Image mask;   // [H,W,1], exactly (alpha > 0.5)
};

// Full-frame inference render (no gradients; chunked over rays).
// Deterministic and bit-identical for a fixed seed.
CoarseRender render_view(const NerfModel& model, const RefContext& ref,
                         const body::MeshTemplate& tpl, const body::BodyParams& pose_tgt,
                         const body::Camera& cam, int s, uint64_t seed, int chunk = 1024);

// Screen-space normal estimate from the rendered depth buffer, encoded like
// the rasterized condition maps (camera frame, n*0.5+0.5); pixels without a
// full masked 4-neighborhood are black.
core::Image normal_from_depth(const CoarseRender& render, const body::Camera& cam);

}  // namespace repose::nerf
