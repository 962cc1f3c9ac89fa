#include "repose/nerf/encoder.hpp"

#include <cmath>

#include "repose/ad/init.hpp"
#include "repose/ad/optim.hpp"

namespace repose::nerf {

using ad::Tensor;

ReferenceEncoder::ReferenceEncoder(const NerfConfig& cfg, core::Rng& rng,
                                   ad::ParamSet& params) {
  const int m = cfg.enc_mid;
  w1_ = ad::init_conv_weight({m, 3, 3, 3}, rng);
  b1_ = ad::init_zeros({m});
  w2_ = ad::init_conv_weight({2 * m, m, 3, 3}, rng);
  b2_ = ad::init_zeros({2 * m});
  // zero final conv: an untrained reference contributes nothing downstream
  w3_ = ad::init_zeros({cfg.c_f, 2 * m, 3, 3});
  b3_ = ad::init_zeros({cfg.c_f});
  params.add("enc.w1", w1_);
  params.add("enc.b1", b1_);
  params.add("enc.w2", w2_);
  params.add("enc.b2", b2_);
  params.add("enc.w3", w3_);
  params.add("enc.b3", b3_);
}

Tensor ReferenceEncoder::forward(const Tensor& image) const {
  ad::check(image.ndim() == 3 && image.dim(0) == 3, "encoder: image must be [3,H,W]");
  const int h = image.dim(1), w = image.dim(2);
  ad::check(h % 4 == 0 && w % 4 == 0, "encoder: H and W must be divisible by 4");
  for (double v : image.value())
    ad::check(std::isfinite(v), "encoder: non-finite input");
  Tensor x = ad::reshape(image, {1, 3, h, w});
  x = ad::silu(ad::conv2d(x, w1_, b1_, 2, 1));
  x = ad::silu(ad::conv2d(x, w2_, b2_, 2, 1));
  x = ad::conv2d(x, w3_, b3_, 1, 1);
  return ad::reshape(x, {x.dim(1), h / 4, w / 4});
}

Tensor ReferenceEncoder::to_tensor(const core::Image& img) {
  ad::check(img.c == 3, "to_tensor: expected a 3-channel image");
  std::vector<double> chw(static_cast<size_t>(3) * img.h * img.w);
  const int64_t plane = static_cast<int64_t>(img.h) * img.w;
  for (int64_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c) chw[static_cast<size_t>(c * plane + i)] = img.px[3 * i + c];
  return Tensor::from_data({3, img.h, img.w}, std::move(chw));
}

}  // namespace repose::nerf
