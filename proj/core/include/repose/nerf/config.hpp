#pragma once

// Stage-1 radiance field configuration. Defaults follow the build contract
// (encoder stride 4 with 32 channels, 16^3 feature grid, L_x=6 / L_d=4
// encodings, 64/128 samples per ray); toy overfit configs shrink the MLP and
// sample counts to fit a CPU budget.

#include <cstdint>

#include "repose/core/config.hpp"

namespace repose::nerf {

struct NerfConfig {
  // architecture
  int c_f = 32;        // reference feature channels
  int enc_mid = 16;    // encoder stem width
  int enc_stride = 4;  // total downsampling of the reference encoder
  int grid_res = 16;   // canonical feature grid resolution G
  int grid_ch = 8;     // channels produced by the 3D conv stack
  int l_x = 6;         // position encoding bands
  int l_d = 4;         // direction encoding bands
  int mlp_width = 128;

  // rendering
  int s_train = 64;
  int s_eval = 128;
  double bbox_pad = 0.10;  // near/far bounds: posed bbox extended by this fraction

  // loss
  double lambda_mask = 0.1;
  double lambda_ssim = 0.1;
  double lambda_lpips = 0.1;

  // training
  int iters = 2000;
  int patch = 16;  // square patch side for per-iteration loss
  double lr = 5e-3;
  double grad_clip = 10.0;
  int ckpt_every = 500;
  int log_every = 50;
  uint64_t seed = 1;

  int d_rho() const { return c_f + grid_ch; }
  int x_enc_dim() const { return 3 + 6 * l_x; }
  int d_enc_dim() const { return 3 + 6 * l_d; }

  void validate() const;
  // Reads keys prefixed "nerf." from a parsed config; unknown values throw
  // through the schema check done by the CLI layer.
  static NerfConfig from(const core::Config& c);
};

}  // namespace repose::nerf
