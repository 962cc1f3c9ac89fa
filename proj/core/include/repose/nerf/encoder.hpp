#pragma once

// Reference image encoder: a small conv stem with total stride 4 producing
// the pixel-aligned feature map that canonical points sample from. The final
// conv is zero-initialized, so an untrained encoder emits an all-zero map.

#include "repose/ad/ops.hpp"
#include "repose/core/image.hpp"
#include "repose/core/random.hpp"
#include "repose/nerf/config.hpp"

namespace repose::ad {
class ParamSet;
}

namespace repose::nerf {

class ReferenceEncoder {
 public:
  ReferenceEncoder() = default;
  ReferenceEncoder(const NerfConfig& cfg, core::Rng& rng, ad::ParamSet& params);

  // image:[3,H,W] with H, W divisible by the stride -> [c_f, H/4, W/4].
  ad::Tensor forward(const ad::Tensor& image) const;

  // Converts an Image to the [3,H,W] tensor layout the encoder expects.
  static ad::Tensor to_tensor(const core::Image& img);

 private:
  ad::Tensor w1_, b1_, w2_, b2_, w3_, b3_;
};

}  // namespace repose::nerf
