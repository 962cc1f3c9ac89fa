#include <stdexcept>

#include "repose/ad/init.hpp"
#include "repose/ad/ops.hpp"
#include "repose/diffusion/unet.hpp"

namespace repose::diffusion {
namespace {

void add_conv(const std::string& prefix, int out, int in, int k, core::Rng& rng,
              ad::ParamSet& params, ad::Tensor& w, ad::Tensor& b) {
  w = ad::init_conv_weight({out, in, k, k}, rng);
  b = ad::init_zeros({out});
  params.add(prefix + ".w", w);
  params.add(prefix + ".b", b);
}

}  // namespace

RefNet::RefNet(const UNetConfig& cfg, core::Rng& rng, ad::ParamSet& params) : cfg_(cfg) {
  cfg_.validate();
  add_conv("refnet.in", cfg_.ch(0), 4, 3, rng, params, in_w, in_b);
  rb0_ = ResBlock("refnet.rb0", cfg_.ch(0), cfg_.ch(0), cfg_.groups, rng, params);
  add_conv("refnet.down0", cfg_.ch(1), cfg_.ch(0), 3, rng, params, down0_w, down0_b);
  rb1a_ = ResBlock("refnet.rb1a", cfg_.ch(1), cfg_.ch(1), cfg_.groups, rng, params);
  if (cfg_.attn_at(cfg_.latent_hw / 2))
    attn1_ = make_attention("refnet.attn1", cfg_.ch(1), cfg_.groups, rng, params);
  add_conv("refnet.down1", cfg_.ch(2), cfg_.ch(1), 3, rng, params, down1_w, down1_b);
  rb2a_ = ResBlock("refnet.rb2a", cfg_.ch(2), cfg_.ch(2), cfg_.groups, rng, params);
  if (cfg_.attn_at(cfg_.latent_hw / 4))
    attn2_ = make_attention("refnet.attn2", cfg_.ch(2), cfg_.groups, rng, params);
}

std::vector<ad::Tensor> RefNet::forward(const ad::Tensor& ref_latent,
                                        const ad::Tensor& f_time) const {
  if (ref_latent.ndim() != 4 || ref_latent.dim(0) != 1 || ref_latent.dim(1) != 4 ||
      ref_latent.dim(2) != cfg_.latent_hw || ref_latent.dim(3) != cfg_.latent_hw)
    throw std::invalid_argument("RefNet: want a [1,4,h,h] reference latent");
  std::vector<ad::Tensor> cache;
  ad::Tensor h = ad::conv2d(ref_latent, in_w, in_b, 1, 1);
  h = rb0_.forward(h, f_time);
  h = ad::conv2d(h, down0_w, down0_b, 2, 1);
  h = rb1a_.forward(h, f_time);
  if (cfg_.attn_at(cfg_.latent_hw / 2)) {
    cache.push_back(ad::reshape(h, {cfg_.ch(1), cfg_.latent_hw / 2, cfg_.latent_hw / 2}));
    h = spatial_self_attention(attn1_, h);
  }
  h = ad::conv2d(h, down1_w, down1_b, 2, 1);
  h = rb2a_.forward(h, f_time);
  if (cfg_.attn_at(cfg_.latent_hw / 4)) {
    cache.push_back(ad::reshape(h, {cfg_.ch(2), cfg_.latent_hw / 4, cfg_.latent_hw / 4}));
    h = spatial_self_attention(attn2_, h);
  }
  return cache;
}

}  // namespace repose::diffusion
