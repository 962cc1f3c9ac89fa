#include "repose/diffusion/unet.hpp"

#include <stdexcept>

#include "repose/ad/init.hpp"
#include "repose/ad/ops.hpp"
#include "repose/diffusion/cond.hpp"

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

void UNetConfig::validate() const {
  if (mults.size() != 3) throw std::invalid_argument("UNetConfig: want exactly 3 multipliers");
  for (int m : mults)
    if (m < 1) throw std::invalid_argument("UNetConfig: multipliers must be positive");
  if (n_views < 1) throw std::invalid_argument("UNetConfig: n_views must be >= 1");
  if (mv_stride < 1) throw std::invalid_argument("UNetConfig: mv_stride must be >= 1");
  if (groups < 1) throw std::invalid_argument("UNetConfig: groups must be >= 1");
  for (int level = 0; level < 3; ++level)
    if (ch(level) % groups != 0)
      throw std::invalid_argument("UNetConfig: channel width not divisible by groups");
  if (latent_hw < 4 || latent_hw % 4 != 0)
    throw std::invalid_argument("UNetConfig: latent_hw must be a positive multiple of 4");
  for (int r : attn_res)
    if (r != latent_hw / 2 && r != latent_hw / 4)
      throw std::invalid_argument("UNetConfig: attention resolution " + std::to_string(r) +
                                  " is not a trunk level");
}

bool UNetConfig::attn_at(int size) const {
  if (attn_res.empty()) return size == latent_hw / 2 || size == latent_hw / 4;
  for (int r : attn_res)
    if (r == size) return true;
  return false;
}

std::vector<int> UNetConfig::attention_sizes() const {
  std::vector<int> out;
  if (attn_at(latent_hw / 2)) out.push_back(latent_hw / 2);
  if (attn_at(latent_hw / 4)) out.push_back(latent_hw / 4);
  return out;
}

ResBlock::ResBlock(const std::string& prefix, int c_in, int c_out, int groups, core::Rng& rng,
                   ad::ParamSet& params)
    : groups_(groups) {
  n1g_ = ad::Tensor::full({c_in}, 1.0, true);
  n1b_ = ad::init_zeros({c_in});
  params.add(prefix + ".n1.g", n1g_);
  params.add(prefix + ".n1.b", n1b_);
  add_conv(prefix + ".c1", c_out, c_in, 3, rng, params, w1_, b1_);
  ew_ = ad::init_linear_weight(c_out, kEmbedDim, rng);
  eb_ = ad::init_zeros({c_out});
  params.add(prefix + ".emb.w", ew_);
  params.add(prefix + ".emb.b", eb_);
  n2g_ = ad::Tensor::full({c_out}, 1.0, true);
  n2b_ = ad::init_zeros({c_out});
  params.add(prefix + ".n2.g", n2g_);
  params.add(prefix + ".n2.b", n2b_);
  w2_ = ad::init_zeros({c_out, c_out, 3, 3});
  b2_ = ad::init_zeros({c_out});
  params.add(prefix + ".c2.w", w2_);
  params.add(prefix + ".c2.b", b2_);
  if (c_in != c_out) {
    skw_ = ad::init_conv_weight({c_out, c_in, 1, 1}, rng);
    params.add(prefix + ".skip.w", skw_);
  }
}

ad::Tensor ResBlock::forward(const ad::Tensor& x, const ad::Tensor& emb) const {
  if (!w1_.defined()) throw std::logic_error("ResBlock: used before construction");
  if (emb.ndim() != 2 || emb.dim(0) != x.dim(0) || emb.dim(1) != kEmbedDim)
    throw std::invalid_argument("ResBlock: embedding shape mismatch");
  ad::Tensor h = ad::conv2d(ad::silu(ad::group_norm(x, n1g_, n1b_, groups_)), w1_, b1_, 1, 1);
  h = ad::add_per_channel(h, ad::linear(ad::silu(emb), ew_, eb_));
  h = ad::conv2d(ad::silu(ad::group_norm(h, n2g_, n2b_, groups_)), w2_, b2_, 1, 1);
  const ad::Tensor sk = skw_.defined() ? ad::conv2d(x, skw_, {}, 1, 0) : x;
  return ad::add(sk, h);
}

DenoiserUNet::DomainPath DenoiserUNet::make_domain(const std::string& prefix, core::Rng& rng,
                                                   ad::ParamSet& params) const {
  DomainPath d;
  const int in_ch = cfg_.concat_strategy ? 8 : 4;
  add_conv(prefix + ".in", cfg_.ch(0), in_ch, 3, rng, params, d.in_w, d.in_b);
  // Bias-free so zero conditioning stays an exact no-op; random weights so
  // gradients reach the conditioning encoders from the first step.
  d.adapt_w = ad::init_conv_weight({cfg_.ch(0), kCondChannels, 1, 1}, rng);
  params.add(prefix + ".adapt.w", d.adapt_w);
  d.rb0 = ResBlock(prefix + ".rb0", cfg_.ch(0), cfg_.ch(0), cfg_.groups, rng, params);
  add_conv(prefix + ".down", cfg_.ch(1), cfg_.ch(0), 3, rng, params, d.down_w, d.down_b);
  add_conv(prefix + ".up", cfg_.ch(0), cfg_.ch(1), 3, rng, params, d.up_w, d.up_b);
  d.rbu = ResBlock(prefix + ".rbu", 2 * cfg_.ch(0), cfg_.ch(0), cfg_.groups, rng, params);
  d.out_ng = ad::Tensor::full({cfg_.ch(0)}, 1.0, true);
  d.out_nb = ad::init_zeros({cfg_.ch(0)});
  params.add(prefix + ".out.ng", d.out_ng);
  params.add(prefix + ".out.nb", d.out_nb);
  add_conv(prefix + ".out", 4, cfg_.ch(0), 3, rng, params, d.out_w, d.out_b);
  return d;
}

DenoiserUNet::DenoiserUNet(const UNetConfig& cfg, core::Rng& rng, ad::ParamSet& params)
    : cfg_(cfg) {
  cfg_.validate();
  rgb_ = make_domain("unet.rgb", rng, params);
  if (cfg_.normal_branch) nrm_ = make_domain("unet.nrm", rng, params);
  rb1a_ = ResBlock("unet.rb1a", cfg_.ch(1), cfg_.ch(1), cfg_.groups, rng, params);
  if (cfg_.attn_at(cfg_.latent_hw / 2)) {
    attn1_.view1d = make_attention("unet.attn1.1d", cfg_.ch(1), cfg_.groups, rng, params);
    attn1_.mv = make_attention("unet.attn1.mv", cfg_.ch(1), cfg_.groups, rng, params);
    attn1_.ref = make_attention("unet.attn1.ref", cfg_.ch(1), cfg_.groups, rng, params);
  }
  add_conv("unet.down1", cfg_.ch(2), cfg_.ch(1), 3, rng, params, down1_w, down1_b);
  rb2a_ = ResBlock("unet.rb2a", cfg_.ch(2), cfg_.ch(2), cfg_.groups, rng, params);
  if (cfg_.attn_at(cfg_.latent_hw / 4)) {
    attn2_.view1d = make_attention("unet.attn2.1d", cfg_.ch(2), cfg_.groups, rng, params);
    attn2_.mv = make_attention("unet.attn2.mv", cfg_.ch(2), cfg_.groups, rng, params);
    attn2_.ref = make_attention("unet.attn2.ref", cfg_.ch(2), cfg_.groups, rng, params);
  }
  rb2b_ = ResBlock("unet.rb2b", cfg_.ch(2), cfg_.ch(2), cfg_.groups, rng, params);
  add_conv("unet.up1", cfg_.ch(1), cfg_.ch(2), 3, rng, params, up1_w, up1_b);
  rbu1_ = ResBlock("unet.rbu1", 2 * cfg_.ch(1), cfg_.ch(1), cfg_.groups, rng, params);
}

ad::Tensor DenoiserUNet::domain_down(const DomainPath& d, const ad::Tensor& x,
                                     const ad::Tensor& cond_latent, const ad::Tensor& f_domain,
                                     const ad::Tensor& f_geo, const ad::Tensor& emb,
                                     ad::Tensor* skip) const {
  ad::Tensor in = x;
  if (cfg_.concat_strategy) {
    if (!cond_latent.defined())
      throw std::invalid_argument("DenoiserUNet: concat strategy needs coarse latents");
    in = ad::concat({x, cond_latent}, 1);
  }
  ad::Tensor h = ad::conv2d(in, d.in_w, d.in_b, 1, 1);
  ad::Tensor inject = f_geo;
  if (f_domain.defined()) inject = ad::add(inject, f_domain);
  h = ad::add(h, ad::conv2d(inject, d.adapt_w, {}, 1, 0));
  *skip = d.rb0.forward(h, emb);
  return ad::conv2d(*skip, d.down_w, d.down_b, 2, 1);
}

ad::Tensor DenoiserUNet::domain_up(const DomainPath& d, const ad::Tensor& h,
                                   const ad::Tensor& skip, const ad::Tensor& emb) const {
  ad::Tensor u = ad::conv2d(ad::upsample2x(h), d.up_w, d.up_b, 1, 1);
  u = d.rbu.forward(ad::concat({u, skip}, 1), emb);
  u = ad::silu(ad::group_norm(u, d.out_ng, d.out_nb, cfg_.groups));
  return ad::conv2d(u, d.out_w, d.out_b, 1, 1);
}

std::pair<ad::Tensor, ad::Tensor> DenoiserUNet::forward(const ad::Tensor& x_rgb,
                                                        const ad::Tensor& x_normal,
                                                        const ConditioningBundle& bundle,
                                                        bool enable_view_attention,
                                                        AttnCounters* counters) const {
  if (!x_rgb.defined() || x_rgb.ndim() != 4 || x_rgb.dim(1) != 4 ||
      x_rgb.dim(2) != cfg_.latent_hw || x_rgb.dim(3) != cfg_.latent_hw)
    throw std::invalid_argument("DenoiserUNet: bad rgb latent shape");
  if (cfg_.normal_branch && (!x_normal.defined() || x_normal.shape() != x_rgb.shape()))
    throw std::invalid_argument("DenoiserUNet: normal latent missing or mismatched");
  if (!bundle.f_geo.defined() || !bundle.emb.defined())
    throw std::invalid_argument("DenoiserUNet: conditioning bundle incomplete");
  const int sites = n_ref_sites();
  if (static_cast<int>(bundle.ref_cache.size()) != sites)
    throw std::invalid_argument("DenoiserUNet: reference cache has " +
                                std::to_string(bundle.ref_cache.size()) + " maps, want " +
                                std::to_string(sites));

  ad::Tensor skip_rgb, skip_nrm;
  const ad::Tensor dn_rgb = domain_down(rgb_, x_rgb, bundle.cond_rgb, bundle.f_rgb, bundle.f_geo,
                                        bundle.emb, &skip_rgb);
  ad::Tensor h = dn_rgb;
  if (cfg_.normal_branch) {
    const ad::Tensor dn_nrm = domain_down(nrm_, x_normal, bundle.cond_normal, bundle.f_normal,
                                          bundle.f_geo, bundle.emb, &skip_nrm);
    h = ad::mul_scalar(ad::add(dn_rgb, dn_nrm), 0.5);
  }

  int site = 0;
  auto attn_stack = [&](const AttnStack& a, const ad::Tensor& in) {
    ad::Tensor out = in;
    if (enable_view_attention) {
      out = view_1d_attention(a.view1d, out, counters);
      out = multiview_attention(a.mv, out, cfg_.mv_stride, counters);
    }
    out = reference_attention(a.ref, out, bundle.ref_cache[static_cast<size_t>(site)], counters);
    ++site;
    return out;
  };

  h = rb1a_.forward(h, bundle.emb);
  const ad::Tensor skip1 = h;
  if (cfg_.attn_at(cfg_.latent_hw / 2)) h = attn_stack(attn1_, h);
  h = ad::conv2d(h, down1_w, down1_b, 2, 1);
  h = rb2a_.forward(h, bundle.emb);
  if (cfg_.attn_at(cfg_.latent_hw / 4)) h = attn_stack(attn2_, h);
  h = rb2b_.forward(h, bundle.emb);
  h = ad::conv2d(ad::upsample2x(h), up1_w, up1_b, 1, 1);
  h = rbu1_.forward(ad::concat({h, skip1}, 1), bundle.emb);

  const ad::Tensor v_rgb = domain_up(rgb_, h, skip_rgb, bundle.emb);
  ad::Tensor v_nrm;
  if (cfg_.normal_branch) v_nrm = domain_up(nrm_, h, skip_nrm, bundle.emb);
  return {v_rgb, v_nrm};
}

}  // namespace repose::diffusion
