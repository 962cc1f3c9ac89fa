#pragma once

#include <string>
#include <vector>

#include "repose/ad/optim.hpp"
#include "repose/ad/tensor.hpp"
#include "repose/core/image.hpp"
#include "repose/core/random.hpp"
#include "repose/diffusion/attention.hpp"

namespace repose::diffusion {

// Width of every conditioning feature map handed to the denoiser.
constexpr int kCondChannels = 320;

// Stacks same-sized [H,W,3] images into a planar [V,3,H,W] tensor.
ad::Tensor images_to_batch(const std::vector<core::Image>& views);

// Coarse-latent conditioning encoder (one per domain, separate parameters):
// eight 3x3 stride-1 convs ramping 4 -> 16 -> 16 -> 32 -> 32 -> 96 -> 96 ->
// 256 -> 320 with SiLU between, the last conv zero-initialized so a fresh
// encoder contributes nothing.
class CondEncoder {
 public:
  CondEncoder(const std::string& prefix, core::Rng& rng, ad::ParamSet& params);
  // [V,4,h,w] -> [V,320,h,w]; wrong channel count -> std::invalid_argument.
  ad::Tensor forward(const ad::Tensor& latent) const;

  static const std::vector<int>& channel_sequence();

 private:
  std::vector<ad::Tensor> w_, b_;
};

// Which geometry modalities participate in the fusion (ablation axis).
enum class MlgfInputs { full, no_texture, no_normal_semantic };

// Multi-layer geometry fusion: texture, normal, and semantic condition maps
// each run a private 4-conv downsampling stack (image resolution -> latent
// resolution), a spatial self-attention, and a zero-initialized 1x1 conv;
// the per-modality outputs are summed into F_geo.
class Mlgf {
 public:
  static constexpr int kBranches = 3;  // texture, normal, semantic

  // image_stride is the image->latent downsampling factor (2, 4, or 8).
  Mlgf(int image_stride, core::Rng& rng, ad::ParamSet& params);

  // One modality alone: map [V,3,H,W] -> [V,320,H/stride,W/stride].
  ad::Tensor branch(int k, const ad::Tensor& map) const;
  // Sum over the modalities selected by `inputs`. Undefined map ->
  // std::invalid_argument.
  ad::Tensor forward(const ad::Tensor& texture, const ad::Tensor& normal,
                     const ad::Tensor& semantic, MlgfInputs inputs) const;

  int image_stride() const { return stride_; }

 private:
  struct Branch {
    std::vector<ad::Tensor> w, b;
    std::vector<int> strides;
    AttentionBlock attn;
    ad::Tensor zw, zb;  // zero-init 1x1 terminal
  };
  int stride_;
  Branch branches_[kBranches];
};

}  // namespace repose::diffusion
