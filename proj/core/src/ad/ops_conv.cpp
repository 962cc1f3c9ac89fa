#include <Eigen/Dense>
#include <cmath>

#include "repose/ad/ops.hpp"

namespace repose::ad {

namespace {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;

// im2col for one [C,H,W] image: columns matrix [C*kh*kw, Ho*Wo].
void im2col2d(const double* x, int c, int h, int w, int kh, int kw, int stride,
              int pad, int ho, int wo, double* col) {
  const int64_t cols = static_cast<int64_t>(ho) * wo;
  int64_t r = 0;
  for (int ci = 0; ci < c; ++ci)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj, ++r) {
        double* dst = col + r * cols;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ki;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kj;
            dst[static_cast<int64_t>(oy) * wo + ox] =
                (iy >= 0 && iy < h && ix >= 0 && ix < w)
                    ? x[(static_cast<int64_t>(ci) * h + iy) * w + ix]
                    : 0.0;
          }
        }
      }
}

void col2im2d(const double* col, int c, int h, int w, int kh, int kw, int stride,
              int pad, int ho, int wo, double* x) {
  const int64_t cols = static_cast<int64_t>(ho) * wo;
  int64_t r = 0;
  for (int ci = 0; ci < c; ++ci)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj, ++r) {
        const double* src = col + r * cols;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kj;
            if (ix < 0 || ix >= w) continue;
            x[(static_cast<int64_t>(ci) * h + iy) * w + ix] +=
                src[static_cast<int64_t>(oy) * wo + ox];
          }
        }
      }
}

// im2col for one [C,D,H,W] volume: [C*kd*kh*kw, Do*Ho*Wo].
void im2col3d(const double* x, int c, int d, int h, int w, int kd, int kh, int kw,
              int stride, int pad, int od, int oh, int ow, double* col) {
  const int64_t cols = static_cast<int64_t>(od) * oh * ow;
  int64_t r = 0;
  for (int ci = 0; ci < c; ++ci)
    for (int kz = 0; kz < kd; ++kz)
      for (int ki = 0; ki < kh; ++ki)
        for (int kj = 0; kj < kw; ++kj, ++r) {
          double* dst = col + r * cols;
          int64_t o = 0;
          for (int oz = 0; oz < od; ++oz) {
            const int iz = oz * stride - pad + kz;
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * stride - pad + ki;
              for (int ox = 0; ox < ow; ++ox, ++o) {
                const int ix = ox * stride - pad + kj;
                dst[o] = (iz >= 0 && iz < d && iy >= 0 && iy < h && ix >= 0 && ix < w)
                             ? x[((static_cast<int64_t>(ci) * d + iz) * h + iy) * w + ix]
                             : 0.0;
              }
            }
          }
        }
}

void col2im3d(const double* col, int c, int d, int h, int w, int kd, int kh,
              int kw, int stride, int pad, int od, int oh, int ow, double* x) {
  const int64_t cols = static_cast<int64_t>(od) * oh * ow;
  int64_t r = 0;
  for (int ci = 0; ci < c; ++ci)
    for (int kz = 0; kz < kd; ++kz)
      for (int ki = 0; ki < kh; ++ki)
        for (int kj = 0; kj < kw; ++kj, ++r) {
          const double* src = col + r * cols;
          int64_t o = 0;
          for (int oz = 0; oz < od; ++oz) {
            const int iz = oz * stride - pad + kz;
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * stride - pad + ki;
              for (int ox = 0; ox < ow; ++ox, ++o) {
                const int ix = ox * stride - pad + kj;
                if (iz >= 0 && iz < d && iy >= 0 && iy < h && ix >= 0 && ix < w)
                  x[((static_cast<int64_t>(ci) * d + iz) * h + iy) * w + ix] += src[o];
              }
            }
          }
        }
}

int conv_out(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}
}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  check(x.ndim() == 4 && w.ndim() == 4, "conv2d: want x [N,C,H,W], w [O,C,kh,kw]");
  check(x.dim(1) == w.dim(1), "conv2d: channel mismatch x " + shape_str(x.shape()) +
                                  " w " + shape_str(w.shape()));
  check(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int o = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int ho = conv_out(h, kh, stride, pad), wo = conv_out(wd, kw, stride, pad);
  check(ho > 0 && wo > 0, "conv2d: empty output");
  if (b.defined()) check(b.ndim() == 1 && b.dim(0) == o, "conv2d: bad bias");

  const int64_t krows = static_cast<int64_t>(c) * kh * kw;
  const int64_t cols = static_cast<int64_t>(ho) * wo;
  std::vector<double> out(static_cast<size_t>(n) * o * cols);
  std::vector<double> col(static_cast<size_t>(krows * cols));
  for (int i = 0; i < n; ++i) {
    im2col2d(x.value().data() + static_cast<int64_t>(i) * c * h * wd, c, h, wd, kh,
             kw, stride, pad, ho, wo, col.data());
    MapM y(out.data() + static_cast<int64_t>(i) * o * cols, o, cols);
    y.noalias() = MapC(w.value().data(), o, krows) * MapC(col.data(), krows, cols);
    if (b.defined())
      for (int oc = 0; oc < o; ++oc) y.row(oc).array() += b.at(oc);
  }

  auto xp = x.ptr();
  auto wp = w.ptr();
  auto bp = b.defined() ? b.ptr() : nullptr;
  std::vector<Tensor> parents = b.defined() ? std::vector<Tensor>{x, w, b}
                                            : std::vector<Tensor>{x, w};
  return make_op({n, o, ho, wo}, std::move(out), parents,
                 [=](Node& nd) {
                   std::vector<double> colb(static_cast<size_t>(krows * cols));
                   std::vector<double> dcol(static_cast<size_t>(krows * cols));
                   for (int i = 0; i < n; ++i) {
                     MapC dy(nd.grad.data() + static_cast<int64_t>(i) * o * cols, o, cols);
                     if (wp->requires_grad || xp->requires_grad) {
                       if (wp->requires_grad) {
                         im2col2d(xp->value.data() + static_cast<int64_t>(i) * c * h * wd,
                                  c, h, wd, kh, kw, stride, pad, ho, wo, colb.data());
                         MapM(wp->grad.data(), o, krows).noalias() +=
                             dy * MapC(colb.data(), krows, cols).transpose();
                       }
                       if (xp->requires_grad) {
                         MapM(dcol.data(), krows, cols).noalias() =
                             MapC(wp->value.data(), o, krows).transpose() * dy;
                         col2im2d(dcol.data(), c, h, wd, kh, kw, stride, pad, ho, wo,
                                  xp->grad.data() + static_cast<int64_t>(i) * c * h * wd);
                       }
                     }
                     if (bp && bp->requires_grad)
                       for (int oc = 0; oc < o; ++oc) bp->grad[static_cast<size_t>(oc)] += dy.row(oc).sum();
                   }
                 });
}

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  check(x.ndim() == 5 && w.ndim() == 5, "conv3d: want x [N,C,D,H,W], w [O,C,kd,kh,kw]");
  check(x.dim(1) == w.dim(1), "conv3d: channel mismatch");
  check(stride >= 1 && pad >= 0, "conv3d: bad stride/pad");
  const int n = x.dim(0), c = x.dim(1), d = x.dim(2), h = x.dim(3), wd = x.dim(4);
  const int o = w.dim(0), kd = w.dim(2), kh = w.dim(3), kw = w.dim(4);
  const int od = conv_out(d, kd, stride, pad), oh = conv_out(h, kh, stride, pad),
            ow = conv_out(wd, kw, stride, pad);
  check(od > 0 && oh > 0 && ow > 0, "conv3d: empty output");
  if (b.defined()) check(b.ndim() == 1 && b.dim(0) == o, "conv3d: bad bias");

  const int64_t krows = static_cast<int64_t>(c) * kd * kh * kw;
  const int64_t cols = static_cast<int64_t>(od) * oh * ow;
  const int64_t in_vol = static_cast<int64_t>(c) * d * h * wd;
  std::vector<double> out(static_cast<size_t>(n) * o * cols);
  std::vector<double> col(static_cast<size_t>(krows * cols));
  for (int i = 0; i < n; ++i) {
    im2col3d(x.value().data() + i * in_vol, c, d, h, wd, kd, kh, kw, stride, pad,
             od, oh, ow, col.data());
    MapM y(out.data() + static_cast<int64_t>(i) * o * cols, o, cols);
    y.noalias() = MapC(w.value().data(), o, krows) * MapC(col.data(), krows, cols);
    if (b.defined())
      for (int oc = 0; oc < o; ++oc) y.row(oc).array() += b.at(oc);
  }

  auto xp = x.ptr();
  auto wp = w.ptr();
  auto bp = b.defined() ? b.ptr() : nullptr;
  std::vector<Tensor> parents = b.defined() ? std::vector<Tensor>{x, w, b}
                                            : std::vector<Tensor>{x, w};
  return make_op({n, o, od, oh, ow}, std::move(out), parents, [=](Node& nd) {
    std::vector<double> colb(static_cast<size_t>(krows * cols));
    std::vector<double> dcol(static_cast<size_t>(krows * cols));
    for (int i = 0; i < n; ++i) {
      MapC dy(nd.grad.data() + static_cast<int64_t>(i) * o * cols, o, cols);
      if (wp->requires_grad) {
        im2col3d(xp->value.data() + i * in_vol, c, d, h, wd, kd, kh, kw, stride,
                 pad, od, oh, ow, colb.data());
        MapM(wp->grad.data(), o, krows).noalias() +=
            dy * MapC(colb.data(), krows, cols).transpose();
      }
      if (xp->requires_grad) {
        MapM(dcol.data(), krows, cols).noalias() =
            MapC(wp->value.data(), o, krows).transpose() * dy;
        col2im3d(dcol.data(), c, d, h, wd, kd, kh, kw, stride, pad, od, oh, ow,
                 xp->grad.data() + i * in_vol);
      }
      if (bp && bp->requires_grad)
        for (int oc = 0; oc < o; ++oc) bp->grad[static_cast<size_t>(oc)] += dy.row(oc).sum();
    }
  });
}

Tensor upsample2x(const Tensor& x) {
  check(x.ndim() == 4, "upsample2x: want [N,C,H,W]");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int h2 = 2 * h, w2 = 2 * w;
  std::vector<double> out(static_cast<size_t>(n) * c * h2 * w2);
  for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; ++nc) {
    const double* src = x.value().data() + nc * h * w;
    double* dst = out.data() + nc * h2 * w2;
    for (int y = 0; y < h2; ++y)
      for (int xc = 0; xc < w2; ++xc)
        dst[static_cast<int64_t>(y) * w2 + xc] = src[static_cast<int64_t>(y / 2) * w + xc / 2];
  }
  auto xp = x.ptr();
  return make_op({n, c, h2, w2}, std::move(out), {x}, [xp, n, c, h, w, h2, w2](Node& nd) {
    if (!xp->requires_grad) return;
    for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; ++nc) {
      const double* dy = nd.grad.data() + nc * h2 * w2;
      double* dx = xp->grad.data() + nc * h * w;
      for (int y = 0; y < h2; ++y)
        for (int xc = 0; xc < w2; ++xc)
          dx[static_cast<int64_t>(y / 2) * w + xc / 2] += dy[static_cast<int64_t>(y) * w2 + xc];
    }
  });
}

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  int groups, double eps) {
  check(x.ndim() == 4, "group_norm: want [N,C,H,W]");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  check(groups >= 1 && c % groups == 0, "group_norm: C=" + std::to_string(c) +
                                            " not divisible by groups=" + std::to_string(groups));
  check(gamma.ndim() == 1 && gamma.dim(0) == c && beta.ndim() == 1 && beta.dim(0) == c,
        "group_norm: bad gamma/beta");
  const int cg = c / groups;
  const int64_t hw = static_cast<int64_t>(h) * w;
  const int64_t m = static_cast<int64_t>(cg) * hw;  // elements per (n, group)

  std::vector<double> out(x.value().size());
  std::vector<double> mean(static_cast<size_t>(n) * groups);
  std::vector<double> rstd(static_cast<size_t>(n) * groups);
  for (int i = 0; i < n; ++i)
    for (int g = 0; g < groups; ++g) {
      const double* src = x.value().data() + (static_cast<int64_t>(i) * c + static_cast<int64_t>(g) * cg) * hw;
      double mu = 0;
      for (int64_t k = 0; k < m; ++k) mu += src[k];
      mu /= static_cast<double>(m);
      double var = 0;
      for (int64_t k = 0; k < m; ++k) {
        const double d = src[k] - mu;
        var += d * d;
      }
      var /= static_cast<double>(m);
      const double rs = 1.0 / std::sqrt(var + eps);
      mean[static_cast<size_t>(i) * groups + g] = mu;
      rstd[static_cast<size_t>(i) * groups + g] = rs;
      double* dst = out.data() + (static_cast<int64_t>(i) * c + static_cast<int64_t>(g) * cg) * hw;
      for (int ch = 0; ch < cg; ++ch) {
        const double ga = gamma.at(static_cast<int64_t>(g) * cg + ch);
        const double be = beta.at(static_cast<int64_t>(g) * cg + ch);
        for (int64_t k = 0; k < hw; ++k) {
          const double xv = src[static_cast<int64_t>(ch) * hw + k];
          dst[static_cast<int64_t>(ch) * hw + k] = ga * (xv - mu) * rs + be;
        }
      }
    }

  auto xp = x.ptr();
  auto gp = gamma.ptr();
  auto bp = beta.ptr();
  return make_op(x.shape(), std::move(out), {x, gamma, beta},
                 [xp, gp, bp, n, c, groups, cg, hw, m, mean, rstd](Node& nd) {
                   for (int i = 0; i < n; ++i)
                     for (int g = 0; g < groups; ++g) {
                       const int64_t base = (static_cast<int64_t>(i) * c + static_cast<int64_t>(g) * cg) * hw;
                       const double mu = mean[static_cast<size_t>(i) * groups + g];
                       const double rs = rstd[static_cast<size_t>(i) * groups + g];
                       const double* xv = xp->value.data() + base;
                       const double* dy = nd.grad.data() + base;
                       // accumulate dgamma/dbeta and the two reduction terms
                       double sum_dxhat = 0, sum_dxhat_xhat = 0;
                       for (int ch = 0; ch < cg; ++ch) {
                         const double ga = gp->value[static_cast<size_t>(g) * cg + ch];
                         double dga = 0, dbe = 0;
                         for (int64_t k = 0; k < hw; ++k) {
                           const double xhat = (xv[static_cast<int64_t>(ch) * hw + k] - mu) * rs;
                           const double dyv = dy[static_cast<int64_t>(ch) * hw + k];
                           dga += dyv * xhat;
                           dbe += dyv;
                           const double dxhat = dyv * ga;
                           sum_dxhat += dxhat;
                           sum_dxhat_xhat += dxhat * xhat;
                         }
                         if (gp->requires_grad) gp->grad[static_cast<size_t>(g) * cg + ch] += dga;
                         if (bp->requires_grad) bp->grad[static_cast<size_t>(g) * cg + ch] += dbe;
                       }
                       if (xp->requires_grad) {
                         const double inv_m = 1.0 / static_cast<double>(m);
                         double* dx = xp->grad.data() + base;
                         for (int ch = 0; ch < cg; ++ch) {
                           const double ga = gp->value[static_cast<size_t>(g) * cg + ch];
                           for (int64_t k = 0; k < hw; ++k) {
                             const double xhat = (xv[static_cast<int64_t>(ch) * hw + k] - mu) * rs;
                             const double dxhat = dy[static_cast<int64_t>(ch) * hw + k] * ga;
                             dx[static_cast<int64_t>(ch) * hw + k] +=
                                 rs * (dxhat - inv_m * sum_dxhat - xhat * inv_m * sum_dxhat_xhat);
                           }
                         }
                       }
                     }
                 });
}

}  // namespace repose::ad
