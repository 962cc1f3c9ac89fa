#include "repose/diffusion/cond.hpp"

#include <stdexcept>

#include "repose/ad/init.hpp"
#include "repose/ad/ops.hpp"

namespace repose::diffusion {

ad::Tensor images_to_batch(const std::vector<core::Image>& views) {
  if (views.empty()) throw std::invalid_argument("images_to_batch: no views");
  const int h = views[0].h, w = views[0].w, c = views[0].c;
  std::vector<double> data(views.size() * static_cast<size_t>(c) * h * w);
  for (size_t v = 0; v < views.size(); ++v) {
    const core::Image& img = views[v];
    if (img.h != h || img.w != w || img.c != c)
      throw std::invalid_argument("images_to_batch: mixed image shapes");
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          data[((v * c + ch) * static_cast<size_t>(h) + y) * w + x] = img.at(y, x, ch);
  }
  return ad::Tensor::from_data({static_cast<int>(views.size()), c, h, w}, std::move(data));
}

const std::vector<int>& CondEncoder::channel_sequence() {
  static const std::vector<int> seq = {16, 16, 32, 32, 96, 96, 256, kCondChannels};
  return seq;
}

CondEncoder::CondEncoder(const std::string& prefix, core::Rng& rng, ad::ParamSet& params) {
  int in = 4;
  const auto& seq = channel_sequence();
  for (size_t i = 0; i < seq.size(); ++i) {
    const bool last = i + 1 == seq.size();
    ad::Tensor w = last ? ad::init_zeros({seq[i], in, 3, 3})
                        : ad::init_conv_weight({seq[i], in, 3, 3}, rng);
    ad::Tensor b = ad::init_zeros({seq[i]});
    params.add(prefix + ".c" + std::to_string(i + 1) + ".w", w);
    params.add(prefix + ".c" + std::to_string(i + 1) + ".b", b);
    w_.push_back(w);
    b_.push_back(b);
    in = seq[i];
  }
}

ad::Tensor CondEncoder::forward(const ad::Tensor& latent) const {
  if (latent.ndim() != 4 || latent.dim(1) != 4)
    throw std::invalid_argument("CondEncoder: want [V,4,h,w] latents");
  ad::Tensor h = latent;
  for (size_t i = 0; i < w_.size(); ++i) {
    h = ad::conv2d(h, w_[i], b_[i], 1, 1);
    if (i + 1 < w_.size()) h = ad::silu(h);
  }
  return h;
}

}  // namespace repose::diffusion
