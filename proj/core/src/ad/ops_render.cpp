#include <cmath>

#include "repose/ad/ops.hpp"

namespace repose::ad {

namespace {
constexpr double kDepthEps = 1e-10;
}

// Quadrature compositing.
//   delta_i = t_{i+1} - t_i  (i < S-1),  delta_{S-1} = far - t_{S-1}
//   a_i     = sigma_i * delta_i
//   T_i     = exp(-sum_{j<i} a_j)
//   w_i     = T_i * (1 - exp(-a_i))
//   rgb     = sum w_i c_i,  alpha = sum w_i,  depth = sum(w_i t_i)/max(alpha,1e-10)
// Backward w.r.t. sigma and color; ts/far are treated as constants.
Tensor volume_render(const Tensor& sigma, const Tensor& color, const Tensor& ts,
                     const Tensor& far) {
  check(sigma.ndim() == 2, "volume_render: sigma must be [N,S]");
  const int n = sigma.dim(0), s = sigma.dim(1);
  check(s >= 1, "volume_render: need at least one sample");
  check(color.ndim() == 3 && color.dim(0) == n && color.dim(1) == s && color.dim(2) == 3,
        "volume_render: color must be [N,S,3]");
  check(ts.ndim() == 2 && ts.dim(0) == n && ts.dim(1) == s,
        "volume_render: ts must be [N,S]");
  check(far.ndim() == 1 && far.dim(0) == n, "volume_render: far must be [N]");

  std::vector<double> out(static_cast<size_t>(n) * 5, 0.0);
  // Cache per-sample weights and transmittances for the backward pass.
  std::vector<double> wcache(static_cast<size_t>(n) * s);
  std::vector<double> tcache(static_cast<size_t>(n) * s);
  std::vector<double> dcache(static_cast<size_t>(n) * s);  // deltas

  for (int i = 0; i < n; ++i) {
    const double* sg = sigma.value().data() + static_cast<size_t>(i) * s;
    const double* tv = ts.value().data() + static_cast<size_t>(i) * s;
    const double* cv = color.value().data() + static_cast<size_t>(i) * s * 3;
    double trans = 1.0;
    double rgb[3] = {0, 0, 0}, alpha = 0, dsum = 0;
    for (int j = 0; j < s; ++j) {
      const double delta = (j + 1 < s) ? tv[j + 1] - tv[j] : far.at(i) - tv[j];
      check(delta >= 0, "volume_render: sample depths must be non-decreasing");
      const double a = sg[j] * delta;
      const double e = -std::expm1(-a);  // 1 - exp(-a), accurate for small a
      const double w = trans * e;
      wcache[static_cast<size_t>(i) * s + j] = w;
      tcache[static_cast<size_t>(i) * s + j] = trans;
      dcache[static_cast<size_t>(i) * s + j] = delta;
      for (int k = 0; k < 3; ++k) rgb[k] += w * cv[static_cast<size_t>(j) * 3 + k];
      alpha += w;
      dsum += w * tv[j];
      trans *= 1.0 - e;  // = exp(-a)
    }
    double* o = out.data() + static_cast<size_t>(i) * 5;
    o[0] = rgb[0];
    o[1] = rgb[1];
    o[2] = rgb[2];
    o[3] = alpha;
    o[4] = dsum / std::max(alpha, kDepthEps);
  }

  auto sp = sigma.ptr();
  auto cp = color.ptr();
  auto tp = ts.ptr();
  return make_op({n, 5}, std::move(out), {sigma, color, ts, far},
                 [sp, cp, tp, n, s, wcache = std::move(wcache),
                  tcache = std::move(tcache), dcache = std::move(dcache)](Node& nd) {
                   for (int i = 0; i < n; ++i) {
                     const double* go = nd.grad.data() + static_cast<size_t>(i) * 5;
                     const double* o = nd.value.data() + static_cast<size_t>(i) * 5;
                     const double* tv = tp->value.data() + static_cast<size_t>(i) * s;
                     const double* cv = cp->value.data() + static_cast<size_t>(i) * s * 3;
                     const double* wk = wcache.data() + static_cast<size_t>(i) * s;
                     const double* tk = tcache.data() + static_cast<size_t>(i) * s;
                     const double* dk = dcache.data() + static_cast<size_t>(i) * s;

                     // Recover alpha before the depth clamp.
                     double alpha = o[3];
                     const double denom = std::max(alpha, kDepthEps);
                     const double depth = o[4];
                     // d loss / d alpha gets the depth-normalization term only
                     // when alpha wasn't clamped.
                     double galpha = go[3];
                     const double gdepth = go[4];
                     if (alpha > kDepthEps) galpha -= gdepth * depth / denom;

                     if (cp->requires_grad) {
                       double* dc = cp->grad.data() + static_cast<size_t>(i) * s * 3;
                       for (int j = 0; j < s; ++j)
                         for (int k = 0; k < 3; ++k)
                           dc[static_cast<size_t>(j) * 3 + k] += wk[j] * go[k];
                     }
                     if (sp->requires_grad) {
                       // gw_j = d loss / d w_j
                       // da_i = T_i exp(-a_i) gw_i - sum_{k>i} w_k gw_k
                       double* dsg = sp->grad.data() + static_cast<size_t>(i) * s;
                       double suffix = 0;  // sum_{k>j} w_k gw_k
                       for (int j = s - 1; j >= 0; --j) {
                         double gw = galpha + gdepth * tv[j] / denom;
                         for (int k = 0; k < 3; ++k) gw += go[k] * cv[static_cast<size_t>(j) * 3 + k];
                         // T_j exp(-a_j) = T_{j+1} = T_j - w_j
                         const double t_next = tk[j] - wk[j];
                         dsg[j] += dk[j] * (t_next * gw - suffix);
                         suffix += wk[j] * gw;
                       }
                     }
                   }
                 });
}

}  // namespace repose::ad
