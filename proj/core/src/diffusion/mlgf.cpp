#include "repose/diffusion/cond.hpp"

#include <stdexcept>

#include "repose/ad/init.hpp"
#include "repose/ad/ops.hpp"

namespace repose::diffusion {

Mlgf::Mlgf(int image_stride, core::Rng& rng, ad::ParamSet& params) : stride_(image_stride) {
  if (stride_ != 2 && stride_ != 4 && stride_ != 8)
    throw std::invalid_argument("Mlgf: image stride must be 2, 4, or 8");
  int n_down = 0;
  for (int s = stride_; s > 1; s /= 2) ++n_down;

  static const char* kNames[kBranches] = {"tex", "nrm", "sem"};
  const int chain[4] = {16, 32, 64, kCondChannels};
  for (int k = 0; k < kBranches; ++k) {
    Branch& br = branches_[k];
    const std::string prefix = std::string("mlgf.") + kNames[k];
    int in = 3;
    for (int i = 0; i < 4; ++i) {
      ad::Tensor w = ad::init_conv_weight({chain[i], in, 3, 3}, rng);
      ad::Tensor b = ad::init_zeros({chain[i]});
      params.add(prefix + ".c" + std::to_string(i + 1) + ".w", w);
      params.add(prefix + ".c" + std::to_string(i + 1) + ".b", b);
      br.w.push_back(w);
      br.b.push_back(b);
      br.strides.push_back(i < n_down ? 2 : 1);
      in = chain[i];
    }
    br.attn = make_attention(prefix + ".attn", kCondChannels, 8, rng, params);
    br.zw = ad::init_zeros({kCondChannels, kCondChannels, 1, 1});
    br.zb = ad::init_zeros({kCondChannels});
    params.add(prefix + ".zero.w", br.zw);
    params.add(prefix + ".zero.b", br.zb);
  }
}

ad::Tensor Mlgf::branch(int k, const ad::Tensor& map) const {
  if (k < 0 || k >= kBranches) throw std::invalid_argument("Mlgf::branch: bad index");
  if (!map.defined() || map.ndim() != 4 || map.dim(1) != 3)
    throw std::invalid_argument("Mlgf: want a defined [V,3,H,W] condition map");
  if (map.dim(2) % stride_ != 0 || map.dim(3) % stride_ != 0)
    throw std::invalid_argument("Mlgf: map dims not divisible by the image stride");
  const Branch& br = branches_[k];
  ad::Tensor h = map;
  for (size_t i = 0; i < br.w.size(); ++i) {
    h = ad::conv2d(h, br.w[i], br.b[i], br.strides[i], 1);
    if (i + 1 < br.w.size()) h = ad::silu(h);
  }
  h = spatial_self_attention(br.attn, h);
  return ad::conv2d(h, br.zw, br.zb, 1, 0);
}

ad::Tensor Mlgf::forward(const ad::Tensor& texture, const ad::Tensor& normal,
                         const ad::Tensor& semantic, MlgfInputs inputs) const {
  if (!texture.defined() || !normal.defined() || !semantic.defined())
    throw std::invalid_argument("Mlgf: all three condition maps must be present");
  std::vector<ad::Tensor> parts;
  if (inputs != MlgfInputs::no_texture) parts.push_back(branch(0, texture));
  if (inputs != MlgfInputs::no_normal_semantic) {
    parts.push_back(branch(1, normal));
    parts.push_back(branch(2, semantic));
  }
  ad::Tensor out = parts[0];
  for (size_t i = 1; i < parts.size(); ++i) out = ad::add(out, parts[i]);
  return out;
}

}  // namespace repose::diffusion
