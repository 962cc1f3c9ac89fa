#include "repose/nerf/features.hpp"

#include <cmath>

#include "repose/ad/init.hpp"

namespace repose::nerf {

using ad::Tensor;
using body::Vec3;

FeatureGridNet::FeatureGridNet(const NerfConfig& cfg, core::Rng& rng, ad::ParamSet& params) {
  w1_ = ad::init_conv_weight({cfg.grid_ch, cfg.c_f, 3, 3, 3}, rng);
  b1_ = ad::init_zeros({cfg.grid_ch});
  w2_ = ad::init_conv_weight({cfg.grid_ch, cfg.grid_ch, 3, 3, 3}, rng);
  b2_ = ad::init_zeros({cfg.grid_ch});
  params.add("grid.w1", w1_);
  params.add("grid.b1", b1_);
  params.add("grid.w2", w2_);
  params.add("grid.b2", b2_);
}

Tensor FeatureGridNet::forward(const Tensor& volume) const {
  ad::check(volume.ndim() == 4, "gridnet: volume must be [C,G,G,G]");
  const int g = volume.dim(1);
  Tensor x = ad::reshape(volume, {1, volume.dim(0), g, g, g});
  x = ad::silu(ad::conv3d(x, w1_, b1_, 1, 1));
  x = ad::conv3d(x, w2_, b2_, 1, 1);
  return ad::reshape(x, {x.dim(1), g, g, g});
}

namespace {
// Sentinel far outside any map/grid: sampling ops read zero there and send
// no gradient anywhere, which implements the invalid-point contract.
constexpr double kOutside = -1e6;

// Canonical point -> grid voxel coordinates ([0, G-1] spans the bbox).
inline void grid_coords(const Vec3& x, const Vec3& lo, const Vec3& hi, int g, double* out) {
  for (int k = 0; k < 3; ++k)
    out[k] = (x(k) - lo(k)) / (hi(k) - lo(k)) * (g - 1);
}
}  // namespace

RefContext make_ref_context(const NerfConfig& cfg, const ReferenceEncoder& enc,
                            const FeatureGridNet& gridnet, const body::MeshTemplate& tpl,
                            const core::Image& ref_image, const body::Camera& ref_cam,
                            const body::BodyParams& ref_params) {
  RefContext ref;
  ref.refmap = enc.forward(ReferenceEncoder::to_tensor(ref_image));
  ref.posed = body::forward_lbs(tpl, ref_params);
  ref.params = ref_params;
  ref.cam = ref_cam;
  ref.enc_stride = cfg.enc_stride;
  ref.grid_res = cfg.grid_res;

  // canonical grid bounds: rest-template bbox with a 5% margin so boundary
  // vertices land strictly inside
  Vec3 lo = tpl.vertices.colwise().minCoeff();
  Vec3 hi = tpl.vertices.colwise().maxCoeff();
  const Vec3 pad = 0.05 * (hi - lo);
  ref.grid_min = lo - pad;
  ref.grid_max = hi + pad;

  // per-vertex pixel-aligned features, splatted at canonical rest positions
  const int v = tpl.vertex_count();
  std::vector<double> map_pts(static_cast<size_t>(v) * 2);
  std::vector<double> can_pts(static_cast<size_t>(v) * 3);
  for (int i = 0; i < v; ++i) {
    const Vec3 x_cam = ref_cam.to_camera(ref.posed.vertices.row(i));
    if (x_cam.z() > 1e-6) {
      const Eigen::Vector2d px = ref_cam.project(x_cam);
      map_pts[2 * i] = to_feature_coord(px.x(), cfg.enc_stride);
      map_pts[2 * i + 1] = to_feature_coord(px.y(), cfg.enc_stride);
    } else {
      map_pts[2 * i] = map_pts[2 * i + 1] = kOutside;
    }
    grid_coords(tpl.vertices.row(i), ref.grid_min, ref.grid_max, cfg.grid_res,
                can_pts.data() + 3 * i);
  }
  Tensor feats = ad::bilinear_sample(ref.refmap, Tensor::from_data({v, 2}, std::move(map_pts)));
  Tensor volume = ad::splat3d(feats, Tensor::from_data({v, 3}, std::move(can_pts)),
                              cfg.grid_res);
  ref.grid = gridnet.forward(volume);
  return ref;
}

PointQueryResult query_point_features(const RefContext& ref, const body::MeshTemplate& tpl,
                                      const body::BodyParams& pose_tgt,
                                      const body::PosedBody& posed_tgt,
                                      const body::VertexGrid& tgt_grid,
                                      const std::vector<Vec3>& x_tgt) {
  const int n = static_cast<int>(x_tgt.size());
  PointQueryResult out;
  out.x_canonical.assign(static_cast<size_t>(n) * 3, 0.0);
  out.valid.assign(static_cast<size_t>(n), 0);

  const auto canon = body::inverse_lbs(tpl, pose_tgt, posed_tgt, tgt_grid, x_tgt);

  std::vector<double> map_pts(static_cast<size_t>(n) * 2, kOutside);
  std::vector<double> grid_pts(static_cast<size_t>(n) * 3, kOutside);
  for (int i = 0; i < n; ++i) {
    if (!canon[i].valid) continue;
    out.valid[i] = 1;
    const Vec3& xc = canon[i].x_canonical;
    for (int k = 0; k < 3; ++k) out.x_canonical[3 * i + k] = xc(k);

    // re-pose into the reference frame via the canonical nearest vertex:
    // the borrowed blended transform plus that vertex's shape displacement
    const int v = canon[i].nearest_vertex;
    Vec3 shaped = xc;
    for (int b = 0; b < body::kShapeDims; ++b)
      shaped += ref.params.beta[static_cast<size_t>(b)] *
                Vec3(tpl.shape_basis[static_cast<size_t>(b)].row(v));
    const Eigen::Vector4d xr = ref.posed.vertex_tf[static_cast<size_t>(v)] * shaped.homogeneous();
    const Vec3 x_cam = ref.cam.to_camera(xr.head<3>());
    if (x_cam.z() > 1e-6) {
      const Eigen::Vector2d px = ref.cam.project(x_cam);
      map_pts[2 * i] = to_feature_coord(px.x(), ref.enc_stride);
      map_pts[2 * i + 1] = to_feature_coord(px.y(), ref.enc_stride);
    }
    grid_coords(xc, ref.grid_min, ref.grid_max, ref.grid_res, grid_pts.data() + 3 * i);
  }

  Tensor pix = ad::bilinear_sample(ref.refmap, Tensor::from_data({n, 2}, std::move(map_pts)));
  Tensor vox = ad::trilinear_sample(ref.grid, Tensor::from_data({n, 3}, std::move(grid_pts)));
  out.rho = ad::concat({pix, vox}, 1);
  return out;
}

}  // namespace repose::nerf
