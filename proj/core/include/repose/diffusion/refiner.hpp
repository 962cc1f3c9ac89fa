#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "repose/core/config.hpp"
#include "repose/diffusion/cond.hpp"
#include "repose/diffusion/latent.hpp"
#include "repose/diffusion/schedule.hpp"
#include "repose/diffusion/unet.hpp"

namespace repose::diffusion {

enum class CondStrategy { conv_add, concat };

// Full stage-2 configuration. The UNet shape is derived, not stored twice.
struct RefinerConfig {
  // denoiser shape
  int base = 64;
  std::vector<int> mults = {1, 2, 4};
  int n_views = 4;
  int mv_stride = 2;
  int groups = 8;
  std::vector<int> attn_res = {};  // empty = attention at both trunk levels

  // diffusion
  int T = 1000;
  int image_size = 64;
  int codec_stride = 8;
  int sample_steps = 50;
  double guidance_scale = 1.0;  // 1.0 = single forward per step
  double ref_dropout = 0.1;     // phase-1 null-reference probability

  // conditioning ablation axes
  CondStrategy strategy = CondStrategy::conv_add;
  bool camera_rotation_only = false;
  MlgfInputs mlgf_inputs = MlgfInputs::full;
  bool use_nerf_coarse = true;
  bool use_normal_branch = true;

  // optimization
  double lr = 1e-4;
  int phase1_steps = 500;
  int phase2_steps = 200;
  int log_every = 50;
  int ckpt_every = 100;
  uint64_t seed = 1;

  int latent_hw() const { return image_size / codec_stride; }
  UNetConfig unet_config() const;
  void validate() const;
  // Reads "refiner.*" keys, leaving unset ones at their defaults.
  static RefinerConfig from(const core::Config& cfg);
};

// All trainable stage-2 modules plus the parameter registry. Construction is
// deterministic in (cfg, seed); each component draws from its own forked
// stream so adding layers to one never shifts another's init.
struct DenoiserModel {
  RefinerConfig cfg;
  ad::ParamSet params;
  std::unique_ptr<CondEncoder> enc_rgb, enc_normal;
  std::unique_ptr<Mlgf> mlgf;
  std::unique_ptr<TimeEmbed> time_embed;
  std::unique_ptr<CameraEmbed> cam_embed;
  std::unique_ptr<DenoiserUNet> unet;
  std::unique_ptr<RefNet> refnet;
  mutable AttnCounters counters;

  DenoiserModel(const RefinerConfig& cfg, uint64_t seed);
};

// One training scene: ground truth, stage-1 conditioning, and geometry maps
// for each target view, plus the reference view.
struct RefinerScene {
  std::vector<core::Image> gt_rgb, gt_normal;
  std::vector<core::Image> coarse_rgb, coarse_normal;
  std::vector<core::Image> map_texture, map_normal, map_semantic;
  std::vector<Eigen::Matrix3d> cam_R;
  std::vector<Eigen::Vector3d> cam_t;
  core::Image ref_image;
  void validate(const RefinerConfig& cfg) const;
};

// Scene converted to model-ready tensors; latents are encoded once.
struct RefinerBatch {
  int n_views = 0;
  std::vector<double> x_rgb, x_normal;  // clean latents [V,4,h,w]
  ad::Tensor cond_rgb, cond_normal;     // coarse latents [V,4,h,w]
  ad::Tensor map_texture, map_normal, map_semantic;  // [V,3,H,W]
  ad::Tensor ref_latent;                // [1,4,h,w]
  std::vector<Eigen::Matrix3d> cam_R;
  std::vector<Eigen::Vector3d> cam_t;
};
RefinerBatch prepare_batch(const RefinerConfig& cfg, const LatentCodec& codec,
                           const RefinerScene& scene);

// Per-view camera embeddings combined with the timestep embedding, [V,1024].
// The only bundle ingredient that varies across sampler steps.
ad::Tensor view_embeddings(const DenoiserModel& model, const RefinerBatch& batch, int t);

// Builds the conditioning bundle for timestep t. null_reference swaps the
// reference cache for zero maps (classifier-free null conditioning).
ConditioningBundle make_bundle(const DenoiserModel& model, const RefinerBatch& batch, int t,
                               bool null_reference);

// Mean over the active domains of ||v_hat - v_target||^2 (dual-domain
// v-prediction objective) as a differentiable scalar.
ad::Tensor vpred_loss_from_preds(const ad::Tensor& v_hat_rgb, const ad::Tensor& v_hat_normal,
                                 const std::vector<double>& v_rgb,
                                 const std::vector<double>& v_normal);

// Full forward + objective at a given timestep and noise draw.
ad::Tensor vpred_loss(const DenoiserModel& model, const RefinerBatch& batch,
                      const DiffusionSchedule& sched, int t, const std::vector<double>& eps_rgb,
                      const std::vector<double>& eps_normal, bool enable_view_attention,
                      bool null_reference);

// Deterministic DDIM-style sampler from pure noise down the v
// parameterization; bit-identical for a fixed seed.
struct SampleOutput {
  MultiViewLatent rgb, normal;
};
SampleOutput sample(const DenoiserModel& model, const RefinerBatch& batch,
                    const DiffusionSchedule& sched, int n_steps, uint64_t seed,
                    bool enable_view_attention);

// Decodes a latent stack back to images.
std::vector<core::Image> decode_views(const LatentCodec& codec, const MultiViewLatent& latents,
                                      int image_size);

// Parameter-name prefixes frozen in phase 2.
bool is_frozen_in_phase2(const std::string& param_name);

// Two-phase training. Phase 1 trains everything with view attention disabled;
// phase 2 loads phase1_ckpt (std::invalid_argument if absent), freezes MLGF,
// both conditioning encoders, and the reference network, and fine-tunes the
// rest with view attention enabled. Resumes from ckpt_path when it exists.
struct RefinerTrainResult {
  int steps_run = 0;
  std::vector<double> loss_history;  // one entry per step run in this call
  AttnCounters attn;                 // attention-path totals over the run
};
RefinerTrainResult train_refiner(const RefinerConfig& cfg, int phase,
                                 const std::vector<RefinerScene>& scenes,
                                 const std::string& ckpt_path, const std::string& phase1_ckpt,
                                 const std::string& config_hash, std::ostream& log);

// Checkpoint IO. save writes parameters + optimizer state; load fills an
// already-built model, returning the stored step. Hash or phase mismatch ->
// std::runtime_error. expect_phase 0 skips the phase check; empty hash skips
// the hash check.
void save_refiner_checkpoint(const std::string& path, const DenoiserModel& model,
                             const ad::Adam* adam, const ad::ParamSet* adam_set, int phase,
                             int64_t step, const std::string& config_hash);
int64_t load_refiner_checkpoint(const std::string& path, DenoiserModel& model, ad::Adam* adam,
                                ad::ParamSet* adam_set, int expect_phase,
                                const std::string& expect_config_hash);

}  // namespace repose::diffusion
