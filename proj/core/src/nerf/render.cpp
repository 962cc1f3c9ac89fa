#include "repose/nerf/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace repose::nerf {

using ad::Tensor;
using body::Vec3;

void RaySampleBatch::validate() const {
  ad::check(static_cast<int>(origins.size()) == n * 3 && static_cast<int>(dirs.size()) == n * 3 &&
                static_cast<int>(ts.size()) == n * s && static_cast<int>(far.size()) == n &&
                static_cast<int>(positions.size()) == n * s * 3,
            "ray batch: inconsistent sizes");
  for (int i = 0; i < n; ++i) {
    const double norm2 = dirs[3 * i] * dirs[3 * i] + dirs[3 * i + 1] * dirs[3 * i + 1] +
                         dirs[3 * i + 2] * dirs[3 * i + 2];
    if (std::fabs(norm2 - 1.0) > 3e-6)
      throw std::invalid_argument("ray batch: directions must be unit");
    for (int k = 1; k < s; ++k)
      if (ts[static_cast<size_t>(i) * s + k] < ts[static_cast<size_t>(i) * s + k - 1])
        throw std::invalid_argument("ray batch: sample depths must be non-decreasing");
    if (far[i] < ts[static_cast<size_t>(i) * s + s - 1])
      throw std::invalid_argument("ray batch: far bound precedes the last sample");
  }
}

RaySampleBatch make_ray_samples(const body::Camera& cam,
                                const std::vector<std::pair<int, int>>& pixels_yx,
                                const body::Points& posed_verts, double bbox_pad, int s,
                                core::Rng& rng) {
  ad::check(s >= 1, "make_ray_samples: need at least one sample");
  const Vec3 lo_raw = posed_verts.colwise().minCoeff();
  const Vec3 hi_raw = posed_verts.colwise().maxCoeff();
  const Vec3 pad = bbox_pad * (hi_raw - lo_raw);
  const Vec3 lo = lo_raw - pad, hi = hi_raw + pad;
  const Vec3 origin = cam.center();

  RaySampleBatch batch;
  batch.n = static_cast<int>(pixels_yx.size());
  batch.s = s;
  batch.origins.resize(static_cast<size_t>(batch.n) * 3);
  batch.dirs.resize(static_cast<size_t>(batch.n) * 3);
  batch.ts.resize(static_cast<size_t>(batch.n) * s);
  batch.far.resize(static_cast<size_t>(batch.n));
  batch.positions.resize(static_cast<size_t>(batch.n) * s * 3);

  for (int i = 0; i < batch.n; ++i) {
    const auto [py, px] = pixels_yx[static_cast<size_t>(i)];
    const Vec3 d_cam((px + 0.5 - cam.cx) / cam.fx, (py + 0.5 - cam.cy) / cam.fy, 1.0);
    const Vec3 d = (cam.R.transpose() * d_cam).normalized();
    for (int k = 0; k < 3; ++k) {
      batch.origins[3 * i + k] = origin(k);
      batch.dirs[3 * i + k] = d(k);
    }

    // slab intersection with the padded bbox; a miss degenerates the ray to
    // near == far so the renderer composites exactly zero
    double tmin = 1e-3, tmax = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3 && tmin <= tmax; ++k) {
      if (std::fabs(d(k)) < 1e-12) {
        if (origin(k) < lo(k) || origin(k) > hi(k)) tmax = -1;
        continue;
      }
      double t0 = (lo(k) - origin(k)) / d(k);
      double t1 = (hi(k) - origin(k)) / d(k);
      if (t0 > t1) std::swap(t0, t1);
      tmin = std::max(tmin, t0);
      tmax = std::min(tmax, t1);
    }
    const bool hit = tmax > tmin;
    const double near_t = hit ? tmin : 1.0;
    const double far_t = hit ? tmax : 1.0;
    batch.far[static_cast<size_t>(i)] = far_t;
    for (int k = 0; k < s; ++k) {
      // stratified: one uniform per cell; consumption order is fixed by the
      // pixel list so renders are bit-identical per seed
      const double u = rng.uniform();
      const double t = near_t + (k + u) / s * (far_t - near_t);
      batch.ts[static_cast<size_t>(i) * s + k] = t;
      for (int c = 0; c < 3; ++c)
        batch.positions[(static_cast<size_t>(i) * s + k) * 3 + c] = origin(c) + t * d(c);
    }
  }
  batch.validate();
  return batch;
}

RenderedRays render_rays(const NerfModel& model, const RefContext& ref,
                         const body::MeshTemplate& tpl, const body::BodyParams& pose_tgt,
                         const body::PosedBody& posed_tgt, const body::VertexGrid& tgt_grid,
                         const body::Camera& cam, const std::vector<std::pair<int, int>>& pixels_yx,
                         int s, core::Rng& rng) {
  const RaySampleBatch batch =
      make_ray_samples(cam, pixels_yx, posed_tgt.vertices, model.cfg.bbox_pad, s, rng);
  const int n = batch.n;
  const int64_t m = static_cast<int64_t>(n) * s;

  std::vector<Vec3> pts(static_cast<size_t>(m));
  std::vector<double> dirs_per_sample(static_cast<size_t>(m) * 3);
  for (int64_t i = 0; i < m; ++i) {
    pts[static_cast<size_t>(i)] =
        Vec3(batch.positions[3 * i], batch.positions[3 * i + 1], batch.positions[3 * i + 2]);
    const int64_t ray = i / s;
    for (int k = 0; k < 3; ++k)
      dirs_per_sample[static_cast<size_t>(3 * i + k)] = batch.dirs[static_cast<size_t>(3 * ray + k)];
  }

  const PointQueryResult q =
      query_point_features(ref, tpl, pose_tgt, posed_tgt, tgt_grid, pts);
  const NerfMlp::Out mlp_out = model.mlp.forward(q.x_canonical, dirs_per_sample, q.rho);

  Tensor sigma = ad::reshape(mlp_out.sigma, {n, s});
  Tensor color = ad::reshape(mlp_out.color, {n, s, 3});
  Tensor ts = Tensor::from_data({n, s}, batch.ts);
  Tensor far = Tensor::from_data({n}, batch.far);
  Tensor out = ad::volume_render(sigma, color, ts, far);  // [N,5]

  RenderedRays r;
  r.rgb = ad::slice(out, 1, 0, 3);
  r.alpha = ad::reshape(ad::slice(out, 1, 3, 1), {n});
  r.depth = ad::reshape(ad::slice(out, 1, 4, 1), {n});
  return r;
}

CoarseRender render_view(const NerfModel& model, const RefContext& ref,
                         const body::MeshTemplate& tpl, const body::BodyParams& pose_tgt,
                         const body::Camera& cam, int s, uint64_t seed, int chunk) {
  ad::NoGradGuard no_grad;
  const body::PosedBody posed_tgt = body::forward_lbs(tpl, pose_tgt);
  const body::VertexGrid tgt_grid(posed_tgt.vertices, body::kDefaultInverseRadius);
  core::Rng rng(seed);

  CoarseRender out;
  out.rgb = core::Image(cam.height, cam.width, 3);
  out.alpha = core::Image(cam.height, cam.width, 1);
  out.depth = core::Image(cam.height, cam.width, 1);
  out.mask = core::Image(cam.height, cam.width, 1);

  std::vector<std::pair<int, int>> pixels;
  pixels.reserve(static_cast<size_t>(chunk));
  int64_t base = 0;
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      pixels.emplace_back(y, x);
      const bool last = y == cam.height - 1 && x == cam.width - 1;
      if (static_cast<int>(pixels.size()) == chunk || last) {
        const RenderedRays r = render_rays(model, ref, tpl, pose_tgt, posed_tgt, tgt_grid, cam,
                                           pixels, s, rng);
        for (size_t i = 0; i < pixels.size(); ++i) {
          const int64_t p = base + static_cast<int64_t>(i);
          for (int c = 0; c < 3; ++c) out.rgb.px[3 * p + c] = r.rgb.at(3 * static_cast<int64_t>(i) + c);
          const double a = r.alpha.at(static_cast<int64_t>(i));
          out.alpha.px[p] = a;
          out.depth.px[p] = r.depth.at(static_cast<int64_t>(i));
          out.mask.px[p] = a > 0.5 ? 1.0 : 0.0;
        }
        base += static_cast<int64_t>(pixels.size());
        pixels.clear();
      }
    }
  return out;
}

core::Image normal_from_depth(const CoarseRender& render, const body::Camera& cam) {
  const int h = render.depth.h, w = render.depth.w;
  core::Image out(h, w, 3);
  auto unproject = [&](int y, int x) {
    const double z = render.depth.px[static_cast<int64_t>(y) * w + x];
    return Vec3((x + 0.5 - cam.cx) / cam.fx * z, (y + 0.5 - cam.cy) / cam.fy * z, z);
  };
  auto fg = [&](int y, int x) {
    return y >= 0 && y < h && x >= 0 && x < w &&
           render.mask.px[static_cast<int64_t>(y) * w + x] == 1.0;
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!(fg(y, x) && fg(y, x - 1) && fg(y, x + 1) && fg(y - 1, x) && fg(y + 1, x))) continue;
      const Vec3 dx = unproject(y, x + 1) - unproject(y, x - 1);
      const Vec3 dy = unproject(y + 1, x) - unproject(y - 1, x);
      Vec3 n = dx.cross(dy);
      const double len = n.norm();
      if (len < 1e-12) continue;
      n /= len;
      if (n.z() > 0) n = -n;  // face the viewer (camera-space z points away)
      // same encoding as the rasterized maps: flip to a y-up, z-toward-viewer
      // frame, then map [-1,1] to [0,1]
      const int64_t i = static_cast<int64_t>(y) * w + x;
      out.px[3 * i] = 0.5 * n.x() + 0.5;
      out.px[3 * i + 1] = 0.5 * -n.y() + 0.5;
      out.px[3 * i + 2] = 0.5 * -n.z() + 0.5;
    }
  return out;
}

}  // namespace repose::nerf
