#pragma once

// Point feature extraction: target-space query points are carried back to the
// canonical frame (inverse LBS), re-posed into the reference frame, and
// projected into the reference feature map for a bilinear pixel-aligned
// sample. A second branch splats per-vertex reference features into a dense
// canonical grid, runs a small 3D conv stack once per reference, and is
// resampled trilinearly at the canonical query points. Both are concatenated
// into rho. Points that fail inverse skinning get rho = 0 and canonical 0.

#include <vector>

#include "repose/ad/ops.hpp"
#include "repose/ad/optim.hpp"
#include "repose/body/lbs.hpp"
#include "repose/body/template_body.hpp"
#include "repose/core/random.hpp"
#include "repose/nerf/config.hpp"
#include "repose/nerf/encoder.hpp"

namespace repose::nerf {

// One 3D conv stack over the splatted canonical feature volume.
class FeatureGridNet {
 public:
  FeatureGridNet() = default;
  FeatureGridNet(const NerfConfig& cfg, core::Rng& rng, ad::ParamSet& params);

  // volume:[c_f,G,G,G] -> [grid_ch,G,G,G]
  ad::Tensor forward(const ad::Tensor& volume) const;

 private:
  ad::Tensor w1_, b1_, w2_, b2_;
};

// Everything derived from one reference observation, reused across renders:
// the encoded feature map, the processed canonical feature grid, and the
// reference-side skinning data needed to project query points.
struct RefContext {
  ad::Tensor refmap;        // [c_f, H/stride, W/stride]
  ad::Tensor grid;          // [grid_ch, G, G, G]
  body::PosedBody posed;    // template under the reference pose/shape
  body::BodyParams params;  // reference pose/shape
  body::Camera cam;
  body::Vec3 grid_min = body::Vec3::Zero();  // canonical grid bounds
  body::Vec3 grid_max = body::Vec3::Zero();
  int enc_stride = 4;
  int grid_res = 16;
};

// Encodes the reference image and builds the canonical feature grid by
// sampling the map at every posed template vertex projection.
RefContext make_ref_context(const NerfConfig& cfg, const ReferenceEncoder& enc,
                            const FeatureGridNet& gridnet, const body::MeshTemplate& tpl,
                            const core::Image& ref_image, const body::Camera& ref_cam,
                            const body::BodyParams& ref_params);

struct PointQueryResult {
  ad::Tensor rho;                   // [N, c_f + grid_ch]
  std::vector<double> x_canonical;  // [N*3]; zeros where invalid
  std::vector<uint8_t> valid;       // [N]
};

// posed_tgt / tgt_grid must come from forward_lbs(tpl, pose_tgt) and cover
// the same vertices; x_tgt are world points under the target pose.
PointQueryResult query_point_features(const RefContext& ref, const body::MeshTemplate& tpl,
                                      const body::BodyParams& pose_tgt,
                                      const body::PosedBody& posed_tgt,
                                      const body::VertexGrid& tgt_grid,
                                      const std::vector<body::Vec3>& x_tgt);

// Projected image coordinate (pixel i spans [i, i+1)) -> feature map
// coordinate (integer coords are texel centers): texel f of a stride-s map
// has its center at image coordinate s*f + s/2.
inline double to_feature_coord(double px, int stride) { return px / stride - 0.5; }

}  // namespace repose::nerf
