#include "repose/diffusion/attention.hpp"

#include <cmath>
#include <stdexcept>

#include "repose/ad/init.hpp"
#include "repose/ad/ops.hpp"

namespace repose::diffusion {
namespace {

void check_feature_map(const ad::Tensor& x, const AttentionBlock& a, const char* who) {
  if (x.ndim() != 4) throw std::invalid_argument(std::string(who) + ": want [V,C,H,W]");
  if (x.dim(1) != a.channels())
    throw std::invalid_argument(std::string(who) + ": C=" + std::to_string(x.dim(1)) +
                                " does not match block width " + std::to_string(a.channels()));
}

// [1,C,H,W] slice -> [H*W, C] token rows.
ad::Tensor to_tokens(const ad::Tensor& view) {
  const int c = view.dim(1), h = view.dim(2), w = view.dim(3);
  return ad::permute(ad::reshape(view, {c, h * w}), {1, 0});
}

// [H*W, C] token rows -> [1,C,H,W].
ad::Tensor from_tokens(const ad::Tensor& tokens, int h, int w) {
  const int c = tokens.dim(1);
  return ad::reshape(ad::permute(tokens, {1, 0}), {1, c, h, w});
}

ad::Tensor normed(const AttentionBlock& a, const ad::Tensor& x) {
  return ad::group_norm(x, a.norm_g, a.norm_b, a.groups);
}

}  // namespace

AttentionBlock make_attention(const std::string& prefix, int channels, int groups, core::Rng& rng,
                              ad::ParamSet& params) {
  if (channels % groups != 0)
    throw std::invalid_argument("make_attention: channels not divisible by groups");
  AttentionBlock a;
  a.groups = groups;
  a.norm_g = ad::Tensor::full({channels}, 1.0, true);
  a.norm_b = ad::init_zeros({channels});
  a.wq = ad::init_linear_weight(channels, channels, rng);
  a.wk = ad::init_linear_weight(channels, channels, rng);
  a.wv = ad::init_linear_weight(channels, channels, rng);
  a.wo = ad::init_zeros({channels, channels});
  params.add(prefix + ".ng", a.norm_g);
  params.add(prefix + ".nb", a.norm_b);
  params.add(prefix + ".wq", a.wq);
  params.add(prefix + ".wk", a.wk);
  params.add(prefix + ".wv", a.wv);
  params.add(prefix + ".wo", a.wo);
  return a;
}

ad::Tensor attend_rows(const AttentionBlock& a, const ad::Tensor& tokens, ad::Tensor* attn) {
  if (tokens.ndim() != 2 || tokens.dim(1) != a.channels())
    throw std::invalid_argument("attend_rows: want [T,C] tokens matching the block width");
  const ad::Tensor q = ad::linear(tokens, a.wq, {});
  const ad::Tensor k = ad::linear(tokens, a.wk, {});
  const ad::Tensor v = ad::linear(tokens, a.wv, {});
  const double scale = 1.0 / std::sqrt(static_cast<double>(a.channels()));
  const ad::Tensor weights = ad::softmax_rows(ad::mul_scalar(ad::matmul_nt(q, k), scale));
  if (attn) *attn = weights;
  return ad::linear(ad::matmul(weights, v), a.wo, {});
}

ad::Tensor spatial_self_attention(const AttentionBlock& a, const ad::Tensor& x) {
  check_feature_map(x, a, "spatial_self_attention");
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const ad::Tensor nx = normed(a, x);
  std::vector<ad::Tensor> views;
  for (int v = 0; v < n; ++v) {
    const ad::Tensor upd = attend_rows(a, to_tokens(ad::slice(nx, 0, v, 1)));
    views.push_back(ad::add(ad::slice(x, 0, v, 1), from_tokens(upd, h, w)));
  }
  return n == 1 ? views[0] : ad::concat(views, 0);
}

ad::Tensor view_1d_attention(const AttentionBlock& a, const ad::Tensor& x,
                             AttnCounters* counters) {
  check_feature_map(x, a, "view_1d_attention");
  if (counters) ++counters->view1d;
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  // [V,C,H,W] -> [H*W*V, C] with each pixel's V tokens contiguous. The norm
  // runs per token (not per view map) to keep the op strictly pixel-local.
  const ad::Tensor raw = ad::reshape(ad::permute(x, {2, 3, 0, 1}), {h * w * n, c, 1, 1});
  const ad::Tensor tokens =
      ad::reshape(ad::group_norm(raw, a.norm_g, a.norm_b, a.groups), {h * w * n, c});
  std::vector<ad::Tensor> blocks;
  blocks.reserve(static_cast<size_t>(h) * w);
  for (int p = 0; p < h * w; ++p) blocks.push_back(attend_rows(a, ad::slice(tokens, 0, p * n, n)));
  const ad::Tensor upd = blocks.size() == 1 ? blocks[0] : ad::concat(blocks, 0);
  return ad::add(x, ad::permute(ad::reshape(upd, {h, w, n, c}), {2, 3, 0, 1}));
}

ad::Tensor multiview_attention(const AttentionBlock& a, const ad::Tensor& x, int stride,
                               AttnCounters* counters) {
  check_feature_map(x, a, "multiview_attention");
  if (stride < 1) throw std::invalid_argument("multiview_attention: stride must be >= 1");
  if (counters) ++counters->multiview;
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  std::vector<int> selected;
  for (int v = 0; v < n; v += stride) selected.push_back(v);

  const ad::Tensor nx = normed(a, x);
  std::vector<ad::Tensor> token_mats;
  for (int v : selected) token_mats.push_back(to_tokens(ad::slice(nx, 0, v, 1)));
  const ad::Tensor upd = attend_rows(
      a, token_mats.size() == 1 ? token_mats[0] : ad::concat(token_mats, 0));

  std::vector<ad::Tensor> views;
  size_t next = 0;
  for (int v = 0; v < n; ++v) {
    if (next < selected.size() && selected[next] == v) {
      const ad::Tensor rows = ad::slice(upd, 0, static_cast<int>(next) * h * w, h * w);
      views.push_back(ad::add(ad::slice(x, 0, v, 1), from_tokens(rows, h, w)));
      ++next;
    } else {
      views.push_back(ad::slice(x, 0, v, 1));
    }
  }
  return n == 1 ? views[0] : ad::concat(views, 0);
}

ad::Tensor reference_attention(const AttentionBlock& a, const ad::Tensor& x, const ad::Tensor& ref,
                               AttnCounters* counters) {
  check_feature_map(x, a, "reference_attention");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (ref.ndim() != 3 || ref.dim(0) != c || ref.dim(1) != h || ref.dim(2) != w)
    throw std::invalid_argument("reference_attention: reference map shape does not match layer");
  if (counters) ++counters->reference;
  const ad::Tensor nx = normed(a, x);
  const ad::Tensor ref_tokens =
      to_tokens(normed(a, ad::reshape(ref, {1, c, h, w})));
  std::vector<ad::Tensor> views;
  for (int v = 0; v < n; ++v) {
    const ad::Tensor joint =
        ad::concat({to_tokens(ad::slice(nx, 0, v, 1)), ref_tokens}, 0);
    const ad::Tensor upd = ad::slice(attend_rows(a, joint), 0, 0, h * w);
    views.push_back(ad::add(ad::slice(x, 0, v, 1), from_tokens(upd, h, w)));
  }
  return n == 1 ? views[0] : ad::concat(views, 0);
}

}  // namespace repose::diffusion
