#include "repose/nerf/loss.hpp"

#include <cmath>

#include "repose/ad/init.hpp"

namespace repose::nerf {

using ad::Tensor;

namespace {
// Rec.601 luma as a fixed 1x1 conv.
Tensor luma(const Tensor& x) {
  static const Tensor w = Tensor::from_data({1, 3, 1, 1}, {0.299, 0.587, 0.114});
  return ad::conv2d(x, w, Tensor(), 1, 0);
}

Tensor gaussian_window() {
  constexpr int k = 11;
  constexpr double sigma = 1.5;
  std::vector<double> g(k * k);
  double sum = 0;
  for (int y = 0; y < k; ++y)
    for (int x = 0; x < k; ++x) {
      const double dy = y - (k - 1) / 2.0, dx = x - (k - 1) / 2.0;
      g[static_cast<size_t>(y) * k + x] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      sum += g[static_cast<size_t>(y) * k + x];
    }
  for (auto& v : g) v /= sum;
  return Tensor::from_data({1, 1, k, k}, std::move(g));
}

Tensor to_nchw(const core::Image& img) {
  std::vector<double> chw(static_cast<size_t>(img.c) * img.h * img.w);
  const int64_t plane = static_cast<int64_t>(img.h) * img.w;
  for (int64_t i = 0; i < plane; ++i)
    for (int c = 0; c < img.c; ++c)
      chw[static_cast<size_t>(c * plane + i)] = img.px[static_cast<size_t>(i * img.c + c)];
  return Tensor::from_data({1, img.c, img.h, img.w}, std::move(chw));
}
}  // namespace

Tensor ssim_ad(const Tensor& x, const Tensor& y) {
  ad::check(x.ndim() == 4 && x.dim(0) == 1 && x.dim(1) == 3, "ssim: expected [1,3,H,W]");
  ad::check(x.shape() == y.shape(), "ssim: shape mismatch");
  ad::check(x.dim(2) >= 11 && x.dim(3) >= 11, "ssim: image smaller than the 11x11 window");
  static const Tensor g = gaussian_window();
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;  // dynamic range 1

  const Tensor lx = luma(x), ly = luma(y);
  const Tensor mx = ad::conv2d(lx, g, Tensor(), 1, 0);
  const Tensor my = ad::conv2d(ly, g, Tensor(), 1, 0);
  const Tensor sxx = ad::sub(ad::conv2d(ad::mul(lx, lx), g, Tensor(), 1, 0), ad::square(mx));
  const Tensor syy = ad::sub(ad::conv2d(ad::mul(ly, ly), g, Tensor(), 1, 0), ad::square(my));
  const Tensor sxy = ad::sub(ad::conv2d(ad::mul(lx, ly), g, Tensor(), 1, 0), ad::mul(mx, my));

  const Tensor num = ad::mul(ad::add_scalar(ad::mul_scalar(ad::mul(mx, my), 2.0), c1),
                             ad::add_scalar(ad::mul_scalar(sxy, 2.0), c2));
  const Tensor den = ad::mul(ad::add_scalar(ad::add(ad::square(mx), ad::square(my)), c1),
                             ad::add_scalar(ad::add(sxx, syy), c2));
  return ad::mean_all(ad::div(num, den));
}

PerceptualNet::PerceptualNet(uint64_t seed) {
  core::Rng rng(seed);
  // constants, not parameters: requires_grad stays false forever
  auto draw = [&rng](const ad::Shape& s) {
    int64_t fan = s[1] * s[2] * s[3];
    const double k = 1.0 / std::sqrt(static_cast<double>(fan));
    std::vector<double> v(static_cast<size_t>(ad::numel(s)));
    for (auto& x : v) x = rng.uniform(-k, k);
    return Tensor::from_data(s, std::move(v));
  };
  w1_ = draw({8, 3, 3, 3});
  w2_ = draw({16, 8, 3, 3});
}

Tensor PerceptualNet::dist(const Tensor& a, const Tensor& b) const {
  ad::check(a.ndim() == 4 && a.shape() == b.shape(), "perceptual: expected matching [1,3,H,W]");
  const Tensor fa1 = ad::silu(ad::conv2d(a, w1_, Tensor(), 2, 1));
  const Tensor fb1 = ad::silu(ad::conv2d(b, w1_, Tensor(), 2, 1));
  const Tensor fa2 = ad::conv2d(fa1, w2_, Tensor(), 2, 1);
  const Tensor fb2 = ad::conv2d(fb1, w2_, Tensor(), 2, 1);
  return ad::add(ad::mse(fa1, fb1), ad::mse(fa2, fb2));
}

NerfLossOut nerf_loss(const Tensor& rgb, const Tensor& alpha, int h, int w,
                      const core::Image& gt_rgb, const core::Image& gt_mask,
                      const NerfLossWeights& weights, const PerceptualNet* perceptual) {
  const int n = h * w;
  ad::check(rgb.ndim() == 2 && rgb.dim(0) == n && rgb.dim(1) == 3,
            "nerf_loss: rgb must be [h*w,3]");
  ad::check(alpha.ndim() == 1 && alpha.dim(0) == n, "nerf_loss: alpha must be [h*w]");
  ad::check(gt_rgb.h == h && gt_rgb.w == w && gt_rgb.c == 3, "nerf_loss: gt_rgb shape");
  ad::check(gt_mask.h == h && gt_mask.w == w && gt_mask.c == 1, "nerf_loss: gt_mask shape");
  for (double a : alpha.value())
    if (a < 0.0 || a > 1.0) throw std::invalid_argument("nerf_loss: alpha outside [0,1]");

  const Tensor gt = Tensor::from_data({n, 3}, gt_rgb.px);
  const Tensor gtm = Tensor::from_data({n}, gt_mask.px);

  NerfLossOut out;
  Tensor recon = ad::mse(rgb, gt);
  Tensor mask_term = ad::mul_scalar(ad::bce(alpha, gtm), weights.mask);

  const Tensor pred_img =
      ad::permute(ad::reshape(rgb, {h, w, 3}), {2, 0, 1});
  const Tensor pred_nchw = ad::reshape(pred_img, {1, 3, h, w});
  const Tensor gt_nchw = to_nchw(gt_rgb);
  Tensor ssim_term =
      ad::mul_scalar(ad::add_scalar(ad::neg(ssim_ad(pred_nchw, gt_nchw)), 1.0), weights.ssim);

  Tensor total = ad::add(ad::add(recon, mask_term), ssim_term);
  if (perceptual != nullptr && weights.lpips > 0) {
    Tensor lp = ad::mul_scalar(perceptual->dist(pred_nchw, gt_nchw), weights.lpips);
    out.lpips = lp.item();
    total = ad::add(total, lp);
  }
  out.recon = recon.item();
  out.mask_bce = mask_term.item();
  out.ssim = ssim_term.item();
  out.total = total;
  return out;
}

}  // namespace repose::nerf
