#pragma once

// Stage-1 composite loss: photometric MSE + mask BCE + (1 - SSIM) + a
// perceptual term against a pluggable frozen feature extractor. Every
// component is returned separately (already weighted) and the total is their
// sum.

#include "repose/ad/ops.hpp"
#include "repose/core/image.hpp"
#include "repose/core/random.hpp"

namespace repose::nerf {

// Differentiable mean SSIM over valid 11x11 Gaussian windows (sigma 1.5) of
// the Rec.601 luma; x,y are [1,3,H,W] with H,W >= 11, values in [0,1].
ad::Tensor ssim_ad(const ad::Tensor& x, const ad::Tensor& y);

// Frozen random conv features standing in for a pretrained perceptual net.
// Weights are fixed by seed, excluded from every ParamSet, and never train.
class PerceptualNet {
 public:
  explicit PerceptualNet(uint64_t seed = 7777);
  // Mean squared feature distance between two [1,3,H,W] images.
  ad::Tensor dist(const ad::Tensor& a, const ad::Tensor& b) const;

 private:
  ad::Tensor w1_, w2_;
};

struct NerfLossWeights {
  double mask = 0.1;
  double ssim = 0.1;
  double lpips = 0.1;  // 0 disables the perceptual term
};

struct NerfLossOut {
  ad::Tensor total;
  double recon = 0;     // unweighted MSE is never useful to log, so all four
  double mask_bce = 0;  // components here carry their lambda already and
  double ssim = 0;      // sum to total
  double lpips = 0;
};

// rgb:[N,3] and alpha:[N] are the rendered patch in row-major pixel order of
// an h x w patch; gt images must be [h,w,3] and [h,w,1] with mask in {0,1}.
// Throws std::invalid_argument if alpha leaves [0,1].
NerfLossOut nerf_loss(const ad::Tensor& rgb, const ad::Tensor& alpha, int h, int w,
                      const core::Image& gt_rgb, const core::Image& gt_mask,
                      const NerfLossWeights& weights, const PerceptualNet* perceptual);

}  // namespace repose::nerf
