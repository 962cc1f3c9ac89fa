#pragma once

#include <string>

#include "repose/ad/optim.hpp"
#include "repose/ad/tensor.hpp"
#include "repose/core/random.hpp"

namespace repose::diffusion {

// Invocation counters used to prove which attention paths a forward pass
// actually exercised (phase 1 must never touch the view paths).
struct AttnCounters {
  int64_t view1d = 0;
  int64_t multiview = 0;
  int64_t reference = 0;
  void reset() { view1d = multiview = reference = 0; }
};

// Single-head pre-norm residual attention block. The output projection is
// zero-initialized, so every attention layer starts as an exact identity.
struct AttentionBlock {
  ad::Tensor norm_g, norm_b;      // GroupNorm affine, [C]
  ad::Tensor wq, wk, wv, wo;      // [C,C]; wo zero-init
  int groups = 8;
  int channels() const { return wq.dim(0); }
};

// Registers parameters under prefix (".ng", ".nb", ".wq", ".wk", ".wv",
// ".wo") and returns live handles.
AttentionBlock make_attention(const std::string& prefix, int channels, int groups, core::Rng& rng,
                              ad::ParamSet& params);

// Raw attention update for token rows [T,C]: softmax(QK^T/sqrt(C)) V through
// the zero-init output projection. No residual, no norm. attn (optional)
// receives the [T,T] attention matrix.
ad::Tensor attend_rows(const AttentionBlock& a, const ad::Tensor& tokens,
                       ad::Tensor* attn = nullptr);

// Per-view spatial self-attention over x [V,C,H,W]; views never mix.
ad::Tensor spatial_self_attention(const AttentionBlock& a, const ad::Tensor& x);

// Attention across the view axis at each pixel independently (tokens are the
// V features at one (y,x)); strictly pixel-local.
ad::Tensor view_1d_attention(const AttentionBlock& a, const ad::Tensor& x,
                             AttnCounters* counters);

// Joint spatial+view attention over the sparse view subset {0, stride,
// 2*stride, ...}; unselected views pass through untouched.
ad::Tensor multiview_attention(const AttentionBlock& a, const ad::Tensor& x, int stride,
                               AttnCounters* counters);

// Reference knowledge transfer: the reference map [C,H,W] is duplicated for
// every view, concatenated with that view's tokens, self-attended, and only
// the main-token outputs are kept. Shape mismatch -> std::invalid_argument.
ad::Tensor reference_attention(const AttentionBlock& a, const ad::Tensor& x, const ad::Tensor& ref,
                               AttnCounters* counters);

}  // namespace repose::diffusion
