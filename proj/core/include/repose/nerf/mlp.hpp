#pragma once

// Radiance MLP: density from encoded canonical position plus point features,
// color from the trunk feature and the encoded view direction. Output heads
// are zero-initialized, so an untrained field is a uniform half-gray fog
// (sigma = softplus(0), color = 0.5).

#include <vector>

#include "repose/ad/ops.hpp"
#include "repose/ad/optim.hpp"
#include "repose/core/random.hpp"
#include "repose/nerf/config.hpp"

namespace repose::nerf {

// gamma(p) = [p, sin(2^k pi p), cos(2^k pi p)] for k in [0, bands).
std::vector<double> positional_encode(const std::vector<double>& pts, int bands);

class NerfMlp {
 public:
  NerfMlp() = default;
  NerfMlp(const NerfConfig& cfg, core::Rng& rng, ad::ParamSet& params);

  struct Out {
    ad::Tensor sigma;  // [N,1], >= 0
    ad::Tensor color;  // [N,3], in [0,1]
  };
  // x,d are plain row-major [N*3] buffers (world-facing callers pass
  // canonical positions and unit view directions); rho is [N, d_rho].
  Out forward(const std::vector<double>& x, const std::vector<double>& d,
              const ad::Tensor& rho) const;

 private:
  int l_x_ = 6, l_d_ = 4;
  ad::Tensor w1_, b1_, w2_, b2_;        // trunk
  ad::Tensor ws_, bs_;                  // sigma head (zero-init)
  ad::Tensor w3_, b3_, wc_, bc_;        // color branch + head (zero-init)
};

}  // namespace repose::nerf
