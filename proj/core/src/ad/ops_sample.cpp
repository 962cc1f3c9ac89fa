#include <array>
#include <cmath>

#include "repose/ad/ops.hpp"

namespace repose::ad {

namespace {
// One bilinear tap: up to 4 (index, weight) pairs within bounds.
struct Tap {
  int64_t idx;
  double w;
};
}  // namespace

Tensor bilinear_sample(const Tensor& map, const Tensor& pts) {
  check(map.ndim() == 3, "bilinear_sample: map must be [C,H,W]");
  check(pts.ndim() == 2 && pts.dim(1) == 2, "bilinear_sample: pts must be [N,2]");
  const int c = map.dim(0), h = map.dim(1), w = map.dim(2);
  const int n = pts.dim(0);
  const int64_t hw = static_cast<int64_t>(h) * w;

  // Precompute taps once; shared by forward and backward.
  std::vector<std::array<Tap, 4>> taps(static_cast<size_t>(n));
  std::vector<int> ntaps(static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    const double px = pts.at(static_cast<int64_t>(i) * 2 + 0);
    const double py = pts.at(static_cast<int64_t>(i) * 2 + 1);
    const int x0 = static_cast<int>(std::floor(px));
    const int y0 = static_cast<int>(std::floor(py));
    const double fx = px - x0, fy = py - y0;
    const double ws[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
    const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
    const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
    int k = 0;
    for (int t = 0; t < 4; ++t) {
      if (xs[t] < 0 || xs[t] >= w || ys[t] < 0 || ys[t] >= h || ws[t] == 0.0) continue;
      taps[static_cast<size_t>(i)][static_cast<size_t>(k)] = {static_cast<int64_t>(ys[t]) * w + xs[t], ws[t]};
      ++k;
    }
    ntaps[static_cast<size_t>(i)] = k;
  }

  std::vector<double> out(static_cast<size_t>(n) * c, 0.0);
  const double* mv = map.value().data();
  for (int i = 0; i < n; ++i)
    for (int ci = 0; ci < c; ++ci) {
      double acc = 0;
      for (int t = 0; t < ntaps[static_cast<size_t>(i)]; ++t) {
        const Tap& tp = taps[static_cast<size_t>(i)][static_cast<size_t>(t)];
        acc += tp.w * mv[ci * hw + tp.idx];
      }
      out[static_cast<size_t>(i) * c + ci] = acc;
    }

  auto mp = map.ptr();
  return make_op({n, c}, std::move(out), {map, pts},
                 [mp, taps = std::move(taps), ntaps = std::move(ntaps), n, c, hw](Node& nd) {
                   if (!mp->requires_grad) return;
                   for (int i = 0; i < n; ++i)
                     for (int ci = 0; ci < c; ++ci) {
                       const double g = nd.grad[static_cast<size_t>(i) * c + ci];
                       if (g == 0.0) continue;
                       for (int t = 0; t < ntaps[static_cast<size_t>(i)]; ++t) {
                         const Tap& tp = taps[static_cast<size_t>(i)][static_cast<size_t>(t)];
                         mp->grad[static_cast<size_t>(ci * hw + tp.idx)] += g * tp.w;
                       }
                     }
                 });
}

Tensor trilinear_sample(const Tensor& grid, const Tensor& pts) {
  check(grid.ndim() == 4, "trilinear_sample: grid must be [C,G,G,G]");
  check(grid.dim(1) == grid.dim(2) && grid.dim(2) == grid.dim(3),
        "trilinear_sample: grid must be cubic");
  check(pts.ndim() == 2 && pts.dim(1) == 3, "trilinear_sample: pts must be [N,3]");
  const int c = grid.dim(0), g = grid.dim(1);
  const int n = pts.dim(0);
  const int64_t g3 = static_cast<int64_t>(g) * g * g;

  std::vector<std::array<Tap, 8>> taps(static_cast<size_t>(n));
  std::vector<int> ntaps(static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    const double px = pts.at(static_cast<int64_t>(i) * 3 + 0);
    const double py = pts.at(static_cast<int64_t>(i) * 3 + 1);
    const double pz = pts.at(static_cast<int64_t>(i) * 3 + 2);
    const int x0 = static_cast<int>(std::floor(px));
    const int y0 = static_cast<int>(std::floor(py));
    const int z0 = static_cast<int>(std::floor(pz));
    const double fx = px - x0, fy = py - y0, fz = pz - z0;
    int k = 0;
    for (int dz = 0; dz < 2; ++dz)
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const int xi = x0 + dx, yi = y0 + dy, zi = z0 + dz;
          const double wt = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
          if (xi < 0 || xi >= g || yi < 0 || yi >= g || zi < 0 || zi >= g || wt == 0.0)
            continue;
          taps[static_cast<size_t>(i)][static_cast<size_t>(k)] = {
              (static_cast<int64_t>(zi) * g + yi) * g + xi, wt};
          ++k;
        }
    ntaps[static_cast<size_t>(i)] = k;
  }

  std::vector<double> out(static_cast<size_t>(n) * c, 0.0);
  const double* gv = grid.value().data();
  for (int i = 0; i < n; ++i)
    for (int ci = 0; ci < c; ++ci) {
      double acc = 0;
      for (int t = 0; t < ntaps[static_cast<size_t>(i)]; ++t) {
        const Tap& tp = taps[static_cast<size_t>(i)][static_cast<size_t>(t)];
        acc += tp.w * gv[ci * g3 + tp.idx];
      }
      out[static_cast<size_t>(i) * c + ci] = acc;
    }

  auto gp = grid.ptr();
  return make_op({n, c}, std::move(out), {grid, pts},
                 [gp, taps = std::move(taps), ntaps = std::move(ntaps), n, c, g3](Node& nd) {
                   if (!gp->requires_grad) return;
                   for (int i = 0; i < n; ++i)
                     for (int ci = 0; ci < c; ++ci) {
                       const double gr = nd.grad[static_cast<size_t>(i) * c + ci];
                       if (gr == 0.0) continue;
                       for (int t = 0; t < ntaps[static_cast<size_t>(i)]; ++t) {
                         const Tap& tp = taps[static_cast<size_t>(i)][static_cast<size_t>(t)];
                         gp->grad[static_cast<size_t>(ci * g3 + tp.idx)] += gr * tp.w;
                       }
                     }
                 });
}

Tensor splat3d(const Tensor& feats, const Tensor& pts, int grid_size) {
  check(feats.ndim() == 2, "splat3d: feats must be [N,C]");
  check(pts.ndim() == 2 && pts.dim(1) == 3 && pts.dim(0) == feats.dim(0),
        "splat3d: pts must be [N,3] matching feats rows");
  check(grid_size >= 2, "splat3d: grid_size must be >= 2");
  const int n = feats.dim(0), c = feats.dim(1), g = grid_size;
  const int64_t g3 = static_cast<int64_t>(g) * g * g;

  std::vector<std::array<Tap, 8>> taps(static_cast<size_t>(n));
  std::vector<int> ntaps(static_cast<size_t>(n), 0);
  std::vector<double> wsum(static_cast<size_t>(g3), 0.0);
  for (int i = 0; i < n; ++i) {
    const double px = pts.at(static_cast<int64_t>(i) * 3 + 0);
    const double py = pts.at(static_cast<int64_t>(i) * 3 + 1);
    const double pz = pts.at(static_cast<int64_t>(i) * 3 + 2);
    const int x0 = static_cast<int>(std::floor(px));
    const int y0 = static_cast<int>(std::floor(py));
    const int z0 = static_cast<int>(std::floor(pz));
    const double fx = px - x0, fy = py - y0, fz = pz - z0;
    int k = 0;
    for (int dz = 0; dz < 2; ++dz)
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const int xi = x0 + dx, yi = y0 + dy, zi = z0 + dz;
          const double wt = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
          if (xi < 0 || xi >= g || yi < 0 || yi >= g || zi < 0 || zi >= g || wt == 0.0)
            continue;
          const int64_t idx = (static_cast<int64_t>(zi) * g + yi) * g + xi;
          taps[static_cast<size_t>(i)][static_cast<size_t>(k)] = {idx, wt};
          wsum[static_cast<size_t>(idx)] += wt;
          ++k;
        }
    ntaps[static_cast<size_t>(i)] = k;
  }

  std::vector<double> out(static_cast<size_t>(c) * g3, 0.0);
  const double* fv = feats.value().data();
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < ntaps[static_cast<size_t>(i)]; ++t) {
      const Tap& tp = taps[static_cast<size_t>(i)][static_cast<size_t>(t)];
      for (int ci = 0; ci < c; ++ci)
        out[static_cast<size_t>(ci * g3 + tp.idx)] += tp.w * fv[static_cast<size_t>(i) * c + ci];
    }
  for (int64_t cell = 0; cell < g3; ++cell) {
    if (wsum[static_cast<size_t>(cell)] <= 0.0) continue;
    const double inv = 1.0 / wsum[static_cast<size_t>(cell)];
    for (int ci = 0; ci < c; ++ci) out[static_cast<size_t>(ci * g3 + cell)] *= inv;
  }

  auto fp = feats.ptr();
  return make_op({c, g, g, g}, std::move(out), {feats, pts},
                 [fp, taps = std::move(taps), ntaps = std::move(ntaps),
                  wsum = std::move(wsum), n, c, g3](Node& nd) {
                   if (!fp->requires_grad) return;
                   for (int i = 0; i < n; ++i)
                     for (int t = 0; t < ntaps[static_cast<size_t>(i)]; ++t) {
                       const Tap& tp = taps[static_cast<size_t>(i)][static_cast<size_t>(t)];
                       const double wn = tp.w / wsum[static_cast<size_t>(tp.idx)];
                       for (int ci = 0; ci < c; ++ci)
                         fp->grad[static_cast<size_t>(i) * c + ci] +=
                             wn * nd.grad[static_cast<size_t>(ci * g3 + tp.idx)];
                     }
                 });
}

}  // namespace repose::ad
