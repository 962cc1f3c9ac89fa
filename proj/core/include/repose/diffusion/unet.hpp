#pragma once

#include <string>
#include <utility>
#include <vector>

#include "repose/ad/optim.hpp"
#include "repose/ad/tensor.hpp"
#include "repose/core/random.hpp"
#include "repose/diffusion/attention.hpp"
#include "repose/diffusion/embed.hpp"

namespace repose::diffusion {

// Static shape of the denoiser. Three resolution levels: the per-domain top
// level, a shared middle level at half resolution, and a shared bottom level
// at quarter resolution.
struct UNetConfig {
  int base = 64;
  std::vector<int> mults = {1, 2, 4};
  int n_views = 4;
  int mv_stride = 2;       // sparse multi-view attention keeps every mv_stride-th view
  int groups = 8;          // GroupNorm groups
  int latent_hw = 8;       // square latent resolution entering the UNet
  std::vector<int> attn_res = {};  // spatial sizes with attention; empty = {hw/2, hw/4}
  bool concat_strategy = false;    // concat coarse latents onto the noise input (8ch)
  bool normal_branch = true;       // dual-branch RGB+normal vs RGB only

  void validate() const;
  int ch(int level) const { return base * mults[static_cast<size_t>(level)]; }
  bool attn_at(int size) const;
  std::vector<int> attention_sizes() const;  // resolved site sizes, top-down
};

// GroupNorm -> SiLU -> conv, timestep-embedding injection, second zero-init
// conv, residual (1x1 projection when widths differ).
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(const std::string& prefix, int c_in, int c_out, int groups, core::Rng& rng,
           ad::ParamSet& params);
  // x: [N,c_in,H,W], emb: [N, kEmbedDim].
  ad::Tensor forward(const ad::Tensor& x, const ad::Tensor& emb) const;

 private:
  ad::Tensor n1g_, n1b_, w1_, b1_, ew_, eb_, n2g_, n2b_, w2_, b2_, skw_;
  int groups_ = 8;
};

// Everything the denoiser consumes besides the noisy latents.
struct ConditioningBundle {
  ad::Tensor f_rgb, f_normal;  // [V,320,h,w] encoder outputs (conv_add strategy)
  ad::Tensor f_geo;            // [V,320,h,w] MLGF output; always required
  ad::Tensor emb;              // [V,1024] combined camera+time embedding
  std::vector<ad::Tensor> ref_cache;   // per-site reference feature maps
  ad::Tensor cond_rgb, cond_normal;    // [V,4,h,w] coarse latents (concat strategy)
};

// Dual-branch multi-view denoising UNet predicting per-domain velocities.
class DenoiserUNet {
 public:
  DenoiserUNet(const UNetConfig& cfg, core::Rng& rng, ad::ParamSet& params);

  // x_rgb/x_normal: [V,4,h,h] noisy latents (x_normal undefined when the
  // normal branch is off). Returns (v_rgb, v_normal); the second is undefined
  // without the normal branch. Missing conditioning -> std::invalid_argument.
  std::pair<ad::Tensor, ad::Tensor> forward(const ad::Tensor& x_rgb, const ad::Tensor& x_normal,
                                            const ConditioningBundle& bundle,
                                            bool enable_view_attention,
                                            AttnCounters* counters) const;

  const UNetConfig& config() const { return cfg_; }
  int n_ref_sites() const { return static_cast<int>(cfg_.attention_sizes().size()); }

 private:
  struct DomainPath {
    ad::Tensor in_w, in_b;   // conv_in
    ad::Tensor adapt_w;      // 1x1 conditioning adapter, bias-free
    ResBlock rb0;
    ad::Tensor down_w, down_b;
    ad::Tensor up_w, up_b;
    ResBlock rbu;
    ad::Tensor out_ng, out_nb, out_w, out_b;
  };
  struct AttnStack {
    AttentionBlock view1d, mv, ref;
  };

  DomainPath make_domain(const std::string& prefix, core::Rng& rng, ad::ParamSet& params) const;
  ad::Tensor domain_down(const DomainPath& d, const ad::Tensor& x, const ad::Tensor& cond_latent,
                         const ad::Tensor& f_domain, const ad::Tensor& f_geo,
                         const ad::Tensor& emb, ad::Tensor* skip) const;
  ad::Tensor domain_up(const DomainPath& d, const ad::Tensor& h, const ad::Tensor& skip,
                       const ad::Tensor& emb) const;

  UNetConfig cfg_;
  DomainPath rgb_, nrm_;
  ResBlock rb1a_, rb2a_, rb2b_, rbu1_;
  ad::Tensor down1_w, down1_b, up1_w, up1_b;
  AttnStack attn1_, attn2_;
};

// Single-view mirror of the denoiser trunk without view attention. Runs the
// reference latent once at a fixed timestep embedding and records the feature
// map entering each reference-attention site.
class RefNet {
 public:
  RefNet(const UNetConfig& cfg, core::Rng& rng, ad::ParamSet& params);
  // ref_latent: [1,4,h,h]; f_time: [1,1024]. Returns one [C,hs,ws] map per
  // attention site, top-down.
  std::vector<ad::Tensor> forward(const ad::Tensor& ref_latent, const ad::Tensor& f_time) const;

 private:
  UNetConfig cfg_;
  ad::Tensor in_w, in_b, down0_w, down0_b, down1_w, down1_b;
  ResBlock rb0_, rb1a_, rb2a_;
  AttentionBlock attn1_, attn2_;
};

}  // namespace repose::diffusion
