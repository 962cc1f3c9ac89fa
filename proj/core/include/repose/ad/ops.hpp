#pragma once

// Differentiable ops over ad::Tensor. Shape checks throw std::invalid_argument.
// Convention notes:
//  - Images and feature maps are [C,H,W] or [N,C,H,W], row-major.
//  - matmul treats tensors as 2-D row-major matrices.
//  - Sampling ops differentiate w.r.t. the sampled map only; sample
//    coordinates are treated as constants.

#include "repose/ad/tensor.hpp"

namespace repose::ad {

// ---- elementwise ------------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);  // caller guarantees b != 0
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor exp_(const Tensor& a);
Tensor log_(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);  // pass-through grad inside [lo,hi]
Tensor square(const Tensor& a);

// Broadcast helpers.
// x:[N,D] + v:[D] per row.
Tensor add_rowvec(const Tensor& x, const Tensor& v);
// x:[N,C,H,W] + e:[N,C] broadcast over spatial dims.
Tensor add_per_channel(const Tensor& x, const Tensor& e);

// ---- reductions -------------------------------------------------------------
Tensor sum_all(const Tensor& a);   // -> [1]
Tensor mean_all(const Tensor& a);  // -> [1]
Tensor mse(const Tensor& a, const Tensor& b);
// Mean binary cross-entropy of probabilities p against targets y in [0,1];
// p is clamped to [eps, 1-eps] before the logs.
Tensor bce(const Tensor& p, const Tensor& y, double eps = 1e-7);

// ---- linear algebra ----------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);     // [M,K]x[K,N] -> [M,N]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [M,K]x[N,K] -> [M,N] (a * b^T)
// y = x W^T + b, x:[N,I], w:[O,I], b:[O] (b may be undefined Tensor for none).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor softmax_rows(const Tensor& x);  // [R,C] softmax per row

// ---- shape ------------------------------------------------------------------
Tensor reshape(const Tensor& x, const Shape& shape);
Tensor permute(const Tensor& x, const std::vector<int>& axes);
Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice(const Tensor& x, int axis, int start, int len);

// ---- conv / norm --------------------------------------------------------------
// x:[N,C,H,W], w:[O,C,kh,kw], b:[O] or undefined; zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad);
// x:[N,C,D,H,W], w:[O,C,kd,kh,kw].
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad);
// Nearest-neighbor 2x upsample, x:[N,C,H,W] -> [N,C,2H,2W].
Tensor upsample2x(const Tensor& x);
// x:[N,C,H,W], gamma/beta:[C].
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  int groups, double eps = 1e-5);

// ---- sampling ----------------------------------------------------------------
// map:[C,H,W], pts:[N,2] as (x,y) in pixel units where integer coordinates are
// pixel centers. Out-of-bounds taps read zero. Gradients flow into map only.
Tensor bilinear_sample(const Tensor& map, const Tensor& pts);
// grid:[C,G,G,G], pts:[N,3] as (x,y,z) in voxel units. Zero border.
Tensor trilinear_sample(const Tensor& grid, const Tensor& pts);
// Normalized trilinear scatter of feats:[N,C] at pts:[N,3] into a [C,G,G,G]
// grid; each cell is divided by its accumulated splat weight (cells that
// receive nothing stay zero). Gradients flow into feats only.
Tensor splat3d(const Tensor& feats, const Tensor& pts, int grid_size);

// ---- volume rendering ----------------------------------------------------------
// Quadrature compositing of S samples along N rays.
//   sigma:[N,S] (>=0), color:[N,S,3], ts:[N,S] sample depths (constant),
//   far:[N] ray far bound (constant; delta_{S-1} = far - t_{S-1}).
// Output [N,5]: (r,g,b,alpha,depth); depth = sum(w_i t_i)/max(alpha,1e-10).
Tensor volume_render(const Tensor& sigma, const Tensor& color, const Tensor& ts,
                     const Tensor& far);

}  // namespace repose::ad
