#include "repose/diffusion/latent.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "repose/ad/init.hpp"
#include "repose/ad/ops.hpp"
#include "repose/ad/optim.hpp"

namespace repose::diffusion {
namespace {

void check_encodable(const core::Image& img, int stride) {
  if (img.c != 3) throw std::invalid_argument("codec: want a 3-channel image");
  if (img.h <= 0 || img.w <= 0 || img.h % stride != 0 || img.w % stride != 0)
    throw std::invalid_argument("codec: image dims " + std::to_string(img.h) + "x" +
                                std::to_string(img.w) + " not divisible by stride " +
                                std::to_string(stride));
}

// [H,W,3] interleaved image -> [1,3,H,W] planar tensor.
ad::Tensor image_to_chw(const core::Image& img) {
  std::vector<double> data(static_cast<size_t>(3) * img.h * img.w);
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x)
        data[(static_cast<size_t>(ch) * img.h + y) * img.w + x] = img.at(y, x, ch);
  return ad::Tensor::from_data({1, 3, img.h, img.w}, std::move(data));
}

core::Image chw_to_image(const std::vector<double>& data, int h, int w, bool clamp01) {
  core::Image img(h, w, 3);
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = data[(static_cast<size_t>(ch) * h + y) * w + x];
        if (clamp01) v = std::min(1.0, std::max(0.0, v));
        img.at(y, x, ch) = v;
      }
  return img;
}

}  // namespace

MultiViewLatent::MultiViewLatent(int n_views_, int h_, int w_, Domain d)
    : n_views(n_views_), h(h_), w(w_), domain(d),
      data(static_cast<size_t>(n_views_) * kChannels * h_ * w_, 0.0) {}

void MultiViewLatent::validate() const {
  if (n_views < 1 || h < 1 || w < 1 || data.size() != static_cast<size_t>(size()))
    throw std::invalid_argument("MultiViewLatent: inconsistent sizes");
  for (double v : data)
    if (!std::isfinite(v)) throw std::invalid_argument("MultiViewLatent: non-finite entry");
}

ProjectionCodec::ProjectionCodec(int stride, uint64_t seed) : stride_(stride) {
  if (stride < 1) throw std::invalid_argument("ProjectionCodec: stride must be >= 1");
  const int d = 3 * stride * stride;
  if (d < MultiViewLatent::kChannels)
    throw std::invalid_argument("ProjectionCodec: stride too small for 4 channels");
  proj_.setZero(MultiViewLatent::kChannels, d);
  // Rows 0..2: unit-norm block means per color channel.
  const double inv = 1.0 / stride;
  for (int ch = 0; ch < 3; ++ch)
    for (int k = 0; k < stride * stride; ++k) proj_(ch, ch * stride * stride + k) = inv;
  // Row 3: random direction, orthogonalized against the mean rows.
  core::Rng rng(seed);
  Eigen::VectorXd r(d);
  for (int i = 0; i < d; ++i) r[i] = rng.normal();
  for (int ch = 0; ch < 3; ++ch) r -= proj_.row(ch).dot(r) * proj_.row(ch).transpose();
  proj_.row(3) = r.transpose() / r.norm();
}

std::vector<double> ProjectionCodec::encode(const core::Image& img) const {
  check_encodable(img, stride_);
  const int s = stride_, lh = img.h / s, lw = img.w / s;
  std::vector<double> z(static_cast<size_t>(MultiViewLatent::kChannels) * lh * lw);
  Eigen::VectorXd block(3 * s * s);
  for (int by = 0; by < lh; ++by)
    for (int bx = 0; bx < lw; ++bx) {
      for (int ch = 0; ch < 3; ++ch)
        for (int dy = 0; dy < s; ++dy)
          for (int dx = 0; dx < s; ++dx)
            block[ch * s * s + dy * s + dx] = img.at(by * s + dy, bx * s + dx, ch);
      const Eigen::Vector4d code = proj_ * block;
      for (int ch = 0; ch < MultiViewLatent::kChannels; ++ch)
        z[(static_cast<size_t>(ch) * lh + by) * lw + bx] = code[ch];
    }
  return z;
}

core::Image ProjectionCodec::decode(const std::vector<double>& z, int h, int w) const {
  const int s = stride_, lh = h / s, lw = w / s;
  if (h % s != 0 || w % s != 0 ||
      z.size() != static_cast<size_t>(MultiViewLatent::kChannels) * lh * lw)
    throw std::invalid_argument("ProjectionCodec::decode: bad latent size");
  core::Image img(h, w, 3);
  for (int by = 0; by < lh; ++by)
    for (int bx = 0; bx < lw; ++bx) {
      Eigen::Vector4d code;
      for (int ch = 0; ch < MultiViewLatent::kChannels; ++ch)
        code[ch] = z[(static_cast<size_t>(ch) * lh + by) * lw + bx];
      const Eigen::VectorXd block = proj_.transpose() * code;
      for (int ch = 0; ch < 3; ++ch)
        for (int dy = 0; dy < s; ++dy)
          for (int dx = 0; dx < s; ++dx)
            img.at(by * s + dy, bx * s + dx, ch) =
                std::min(1.0, std::max(0.0, block[ch * s * s + dy * s + dx]));
    }
  return img;
}

LearnedCodec::LearnedCodec(uint64_t seed) {
  core::Rng rng(seed);
  auto conv = [&](const std::string& name, int out, int in) {
    params_.add(name + ".w", ad::init_conv_weight({out, in, 3, 3}, rng));
    params_.add(name + ".b", ad::init_zeros({out}));
  };
  conv("codec.e1", 8, 3);
  conv("codec.e2", 16, 8);
  conv("codec.e3", 4, 16);
  conv("codec.d1", 16, 4);
  conv("codec.d2", 8, 16);
  conv("codec.d3", 8, 8);
  conv("codec.d4", 3, 8);
}

ad::Tensor LearnedCodec::forward_encode(const ad::Tensor& x) const {
  auto c = [&](const char* n, const ad::Tensor& in, int stride) {
    return ad::conv2d(in, params_.get(std::string(n) + ".w"), params_.get(std::string(n) + ".b"),
                      stride, 1);
  };
  ad::Tensor h = ad::silu(c("codec.e1", x, 2));
  h = ad::silu(c("codec.e2", h, 2));
  return c("codec.e3", h, 2);
}

ad::Tensor LearnedCodec::forward_decode(const ad::Tensor& z) const {
  auto c = [&](const char* n, const ad::Tensor& in) {
    return ad::conv2d(in, params_.get(std::string(n) + ".w"), params_.get(std::string(n) + ".b"),
                      1, 1);
  };
  ad::Tensor h = ad::upsample2x(ad::silu(c("codec.d1", z)));
  h = ad::upsample2x(ad::silu(c("codec.d2", h)));
  h = ad::upsample2x(ad::silu(c("codec.d3", h)));
  return ad::sigmoid(c("codec.d4", h));
}

std::vector<double> LearnedCodec::encode(const core::Image& img) const {
  check_encodable(img, stride());
  ad::NoGradGuard ng;
  return forward_encode(image_to_chw(img)).node().value;
}

core::Image LearnedCodec::decode(const std::vector<double>& z, int h, int w) const {
  const int lh = h / stride(), lw = w / stride();
  if (h % stride() != 0 || w % stride() != 0 ||
      z.size() != static_cast<size_t>(MultiViewLatent::kChannels) * lh * lw)
    throw std::invalid_argument("LearnedCodec::decode: bad latent size");
  ad::NoGradGuard ng;
  std::vector<double> data(z);
  const ad::Tensor out = forward_decode(
      ad::Tensor::from_data({1, MultiViewLatent::kChannels, lh, lw}, std::move(data)));
  return chw_to_image(out.node().value, h, w, /*clamp01=*/false);
}

double train_codec(LearnedCodec& codec, const std::vector<core::Image>& images, int iters,
                   double lr, uint64_t seed) {
  if (images.empty()) throw std::invalid_argument("train_codec: no images");
  std::vector<ad::Tensor> targets;
  for (const auto& img : images) {
    check_encodable(img, codec.stride());
    targets.push_back(image_to_chw(img));
  }
  ad::AdamConfig acfg;
  acfg.lr = lr;
  ad::Adam adam(codec.params_, acfg);
  (void)seed;  // the loop is full-batch and deterministic
  for (int it = 0; it < iters; ++it) {
    codec.params_.zero_grad();
    ad::Tensor loss;
    for (const auto& t : targets) {
      const ad::Tensor rec = codec.forward_decode(codec.forward_encode(t));
      const ad::Tensor term = ad::mse(rec, t);
      loss = loss.defined() ? ad::add(loss, term) : term;
    }
    loss = ad::mul_scalar(loss, 1.0 / static_cast<double>(targets.size()));
    ad::backward(loss);
    adam.step();
  }
  ad::NoGradGuard ng;
  double total = 0.0;
  for (const auto& t : targets)
    total += ad::mse(codec.forward_decode(codec.forward_encode(t)), t).item();
  return total / static_cast<double>(targets.size());
}

MultiViewLatent encode_views(const LatentCodec& codec, const std::vector<core::Image>& views,
                             Domain domain) {
  if (views.empty()) throw std::invalid_argument("encode_views: no views");
  const int lh = views[0].h / codec.stride(), lw = views[0].w / codec.stride();
  MultiViewLatent out(static_cast<int>(views.size()), lh, lw, domain);
  for (size_t v = 0; v < views.size(); ++v) {
    if (views[v].h != views[0].h || views[v].w != views[0].w)
      throw std::invalid_argument("encode_views: mixed view sizes");
    const std::vector<double> z = codec.encode(views[v]);
    std::copy(z.begin(), z.end(), out.data.begin() + static_cast<int64_t>(v) * z.size());
  }
  return out;
}

}  // namespace repose::diffusion
