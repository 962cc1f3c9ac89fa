#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "repose/ad/optim.hpp"
#include "repose/ad/tensor.hpp"
#include "repose/core/image.hpp"
#include "repose/core/random.hpp"

namespace repose::diffusion {

enum class Domain { rgb, normal };

// A stack of per-view latents in the compressed 4-channel space the denoiser
// operates in. Layout is [n_views, 4, h, w], row-major.
struct MultiViewLatent {
  static constexpr int kChannels = 4;

  int n_views = 0, h = 0, w = 0;
  Domain domain = Domain::rgb;
  std::vector<double> data;

  MultiViewLatent() = default;
  MultiViewLatent(int n_views_, int h_, int w_, Domain d);
  int64_t size() const { return static_cast<int64_t>(n_views) * kChannels * h * w; }
  // All entries finite and sizes consistent; throws std::invalid_argument.
  void validate() const;
};

// Image <-> latent conversion seam. encode takes a [H,W,3] image in [0,1]
// with dims divisible by stride() and returns a flat [4, H/s, W/s] buffer;
// decode inverts as well as the codec can.
class LatentCodec {
 public:
  virtual ~LatentCodec() = default;
  virtual int stride() const = 0;
  virtual std::vector<double> encode(const core::Image& img) const = 0;
  virtual core::Image decode(const std::vector<double>& z, int h, int w) const = 0;
};

// Default codec: exact space-to-depth packing (stride s folds each s x s x 3
// block into 3*s*s channels) followed by a fixed orthonormal projection to 4
// channels. The first three projection rows are the per-channel block means,
// so decode(encode(x)) is at least as good as block-mean downsampling; the
// fourth row is a seeded random direction orthogonal to them. encode is
// linear; decode applies the transpose and clamps to [0,1].
class ProjectionCodec : public LatentCodec {
 public:
  explicit ProjectionCodec(int stride = 8, uint64_t seed = 0x636f646563);
  int stride() const override { return stride_; }
  std::vector<double> encode(const core::Image& img) const override;
  core::Image decode(const std::vector<double>& z, int h, int w) const override;

 private:
  int stride_;
  Eigen::MatrixXd proj_;  // [4, 3*s*s], orthonormal rows
};

// Optional learned codec: a tiny convolutional autoencoder with three
// stride-2 stages (8x total), trained by train_codec to overfit a specific
// image set. Inference runs without building an autodiff graph.
class LearnedCodec : public LatentCodec {
 public:
  explicit LearnedCodec(uint64_t seed);
  int stride() const override { return 8; }
  std::vector<double> encode(const core::Image& img) const override;
  core::Image decode(const std::vector<double>& z, int h, int w) const override;

  ad::ParamSet& params() { return params_; }

 private:
  ad::Tensor forward_encode(const ad::Tensor& x) const;  // [1,3,H,W] -> [1,4,H/8,W/8]
  ad::Tensor forward_decode(const ad::Tensor& z) const;
  friend double train_codec(LearnedCodec& codec, const std::vector<core::Image>& images, int iters,
                            double lr, uint64_t seed);

  ad::ParamSet params_;
};

// Adam-overfits the codec on the given images (dims divisible by 8); returns
// the final reconstruction MSE averaged over the set.
double train_codec(LearnedCodec& codec, const std::vector<core::Image>& images, int iters,
                   double lr, uint64_t seed);

// Encodes one image per view into a latent stack (views.size() images, all
// the same size).
MultiViewLatent encode_views(const LatentCodec& codec, const std::vector<core::Image>& views,
                             Domain domain);

}  // namespace repose::diffusion
