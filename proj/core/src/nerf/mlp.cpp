#include "repose/nerf/mlp.hpp"

#include <cmath>
#include <numbers>

#include "repose/ad/init.hpp"

namespace repose::nerf {

using ad::Tensor;

std::vector<double> positional_encode(const std::vector<double>& pts, int bands) {
  const size_t n = pts.size() / 3;
  const size_t out_dim = 3 + 6 * static_cast<size_t>(bands);
  std::vector<double> out(n * out_dim);
  for (size_t i = 0; i < n; ++i) {
    double* row = out.data() + i * out_dim;
    for (int c = 0; c < 3; ++c) row[c] = pts[3 * i + c];
    size_t k = 3;
    for (int b = 0; b < bands; ++b) {
      const double f = std::ldexp(std::numbers::pi, b);  // 2^b * pi
      for (int c = 0; c < 3; ++c) {
        row[k++] = std::sin(f * pts[3 * i + c]);
        row[k++] = std::cos(f * pts[3 * i + c]);
      }
    }
  }
  return out;
}

NerfMlp::NerfMlp(const NerfConfig& cfg, core::Rng& rng, ad::ParamSet& params)
    : l_x_(cfg.l_x), l_d_(cfg.l_d) {
  const int w = cfg.mlp_width;
  const int in1 = cfg.x_enc_dim() + cfg.d_rho();
  w1_ = ad::init_linear_weight(w, in1, rng);
  b1_ = ad::init_zeros({w});
  w2_ = ad::init_linear_weight(w, w, rng);
  b2_ = ad::init_zeros({w});
  ws_ = ad::init_zeros({1, w});  // zero heads: sigma = softplus(0), color = 0.5
  bs_ = ad::init_zeros({1});
  w3_ = ad::init_linear_weight(w, w + cfg.d_enc_dim(), rng);
  b3_ = ad::init_zeros({w});
  wc_ = ad::init_zeros({3, w});
  bc_ = ad::init_zeros({3});
  params.add("mlp.w1", w1_);
  params.add("mlp.b1", b1_);
  params.add("mlp.w2", w2_);
  params.add("mlp.b2", b2_);
  params.add("mlp.ws", ws_);
  params.add("mlp.bs", bs_);
  params.add("mlp.w3", w3_);
  params.add("mlp.b3", b3_);
  params.add("mlp.wc", wc_);
  params.add("mlp.bc", bc_);
}

NerfMlp::Out NerfMlp::forward(const std::vector<double>& x, const std::vector<double>& d,
                              const ad::Tensor& rho) const {
  ad::check(x.size() % 3 == 0 && x.size() == d.size(), "nerf_mlp: x/d must be [N*3]");
  const int n = static_cast<int>(x.size() / 3);
  ad::check(rho.ndim() == 2 && rho.dim(0) == n, "nerf_mlp: rho row count mismatch");
  for (int i = 0; i < n; ++i) {
    const double norm2 = d[3 * i] * d[3 * i] + d[3 * i + 1] * d[3 * i + 1] +
                         d[3 * i + 2] * d[3 * i + 2];
    ad::check(std::fabs(norm2 - 1.0) < 3e-6, "nerf_mlp: directions must be unit");
  }
  const int xe = 3 + 6 * l_x_, de = 3 + 6 * l_d_;
  Tensor x_enc = Tensor::from_data({n, xe}, positional_encode(x, l_x_));
  Tensor d_enc = Tensor::from_data({n, de}, positional_encode(d, l_d_));

  Tensor h = ad::concat({x_enc, rho}, 1);
  h = ad::silu(ad::linear(h, w1_, b1_));
  h = ad::silu(ad::linear(h, w2_, b2_));
  Tensor sigma = ad::softplus(ad::linear(h, ws_, bs_));
  Tensor c = ad::concat({h, d_enc}, 1);
  c = ad::silu(ad::linear(c, w3_, b3_));
  Tensor color = ad::sigmoid(ad::linear(c, wc_, bc_));
  return {sigma, color};
}

}  // namespace repose::nerf
