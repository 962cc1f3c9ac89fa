#include "repose/diffusion/embed.hpp"

#include <cmath>
#include <stdexcept>

#include "repose/ad/init.hpp"
#include "repose/ad/ops.hpp"

namespace repose::diffusion {

std::vector<double> sinusoidal_embedding(int t, int dim) {
  if (dim < 2 || dim % 2 != 0)
    throw std::invalid_argument("sinusoidal_embedding: dim must be even and >= 2");
  std::vector<double> out(dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
    out[i] = std::sin(t * freq);
    out[half + i] = std::cos(t * freq);
  }
  return out;
}

TimeEmbed::TimeEmbed(core::Rng& rng, ad::ParamSet& params) : params_(&params) {
  params.add("time.w1", ad::init_linear_weight(kEmbedDim, kBaseDim, rng));
  params.add("time.b1", ad::init_zeros({kEmbedDim}));
  params.add("time.w2", ad::init_linear_weight(kEmbedDim, kEmbedDim, rng));
  params.add("time.b2", ad::init_zeros({kEmbedDim}));
}

ad::Tensor TimeEmbed::forward(int t) const {
  if (t < 0) throw std::invalid_argument("TimeEmbed: negative timestep");
  const ad::Tensor base = ad::Tensor::from_data({1, kBaseDim}, sinusoidal_embedding(t, kBaseDim));
  const ad::Tensor h =
      ad::silu(ad::linear(base, params_->get("time.w1"), params_->get("time.b1")));
  return ad::linear(h, params_->get("time.w2"), params_->get("time.b2"));
}

CameraEmbed::CameraEmbed(bool rotation_only, core::Rng& rng, ad::ParamSet& params)
    : rotation_only_(rotation_only), params_(&params) {
  params.add("cam.w1", ad::init_linear_weight(kEmbedDim, input_dim(), rng));
  params.add("cam.b1", ad::init_zeros({kEmbedDim}));
  params.add("cam.w2", ad::init_linear_weight(kEmbedDim, kEmbedDim, rng));
  params.add("cam.b2", ad::init_zeros({kEmbedDim}));
}

ad::Tensor CameraEmbed::forward(const Eigen::Matrix3d& R, const Eigen::Vector3d& t) const {
  if ((R * R.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-4)
    throw std::invalid_argument("CameraEmbed: rotation is not orthonormal");
  // Row-major flatten of the augmented [R|t] matrix (just R when
  // rotation_only).
  std::vector<double> v(static_cast<size_t>(input_dim()));
  const int cols = rotation_only_ ? 3 : 4;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) v[static_cast<size_t>(r) * cols + c] = R(r, c);
    if (!rotation_only_) v[static_cast<size_t>(r) * cols + 3] = t[r];
  }
  const ad::Tensor x = ad::Tensor::from_data({1, input_dim()}, std::move(v));
  const ad::Tensor h = ad::silu(ad::linear(x, params_->get("cam.w1"), params_->get("cam.b1")));
  return ad::linear(h, params_->get("cam.w2"), params_->get("cam.b2"));
}

ad::Tensor combine_embeddings(const ad::Tensor& f_cam, const ad::Tensor& f_time) {
  if (f_cam.shape() != f_time.shape())
    throw std::invalid_argument("combine_embeddings: shape mismatch");
  return ad::add(f_cam, f_time);
}

}  // namespace repose::diffusion
