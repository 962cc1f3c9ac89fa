#pragma once

#include <Eigen/Dense>

#include "repose/ad/optim.hpp"
#include "repose/ad/tensor.hpp"
#include "repose/core/random.hpp"

namespace repose::diffusion {

constexpr int kEmbedDim = 1024;

// Fixed transformer-style sinusoidal embedding of an integer timestep.
// dim must be even; pairs run through frequencies 10000^(-2i/dim).
std::vector<double> sinusoidal_embedding(int t, int dim);

// Timestep conditioning: sinusoidal base (dim 256) -> 256 -> 1024 -> 1024
// feed-forward with SiLU, yielding f_time.
class TimeEmbed {
 public:
  static constexpr int kBaseDim = 256;
  TimeEmbed(core::Rng& rng, ad::ParamSet& params);
  ad::Tensor forward(int t) const;  // [1, kEmbedDim]

 private:
  ad::ParamSet* params_;
};

// Camera conditioning: flatten [R|t] row-major to 12 numbers (9 when
// rotation_only) and run a 2-layer feed-forward with SiLU to f_cam.
// Non-orthonormal R (tol 1e-4) -> std::invalid_argument.
class CameraEmbed {
 public:
  CameraEmbed(bool rotation_only, core::Rng& rng, ad::ParamSet& params);
  ad::Tensor forward(const Eigen::Matrix3d& R, const Eigen::Vector3d& t) const;  // [1, kEmbedDim]
  bool rotation_only() const { return rotation_only_; }
  int input_dim() const { return rotation_only_ ? 9 : 12; }

 private:
  bool rotation_only_;
  ad::ParamSet* params_;
};

// Elementwise sum of camera and time embeddings of equal shape.
ad::Tensor combine_embeddings(const ad::Tensor& f_cam, const ad::Tensor& f_time);

}  // namespace repose::diffusion
