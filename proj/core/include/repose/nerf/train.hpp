#pragma once

// Stage-1 training loop: per iteration, one random view and one random
// aligned patch are rendered differentiably and stepped against the
// composite loss. Checkpoints carry parameters, Adam state, and the config
// hash; resuming against a different config is refused.

#include <iosfwd>
#include <string>
#include <vector>

#include "repose/nerf/loss.hpp"
#include "repose/nerf/render.hpp"

namespace repose::nerf {

struct TrainView {
  core::Image rgb;   // [H,W,3]
  core::Image mask;  // [H,W,1] binary
  body::Camera cam;
  body::BodyParams pose;
};

struct NerfTrainData {
  body::MeshTemplate tpl;
  core::Image ref_image;
  body::Camera ref_cam;
  body::BodyParams ref_pose;
  std::vector<TrainView> views;
};

struct NerfTrainResult {
  int iters_run = 0;       // total iterations in the checkpoint after the call
  double final_loss = 0;   // last step's total
};

// Runs (or resumes) training up to cfg.iters total iterations. config_hash
// identifies the run configuration; a checkpoint with a different hash makes
// this throw std::runtime_error.
NerfTrainResult train_nerf(const NerfConfig& cfg, const NerfTrainData& data,
                           const std::string& ckpt_path, const std::string& config_hash,
                           std::ostream& log);

// Checkpoint IO shared with the CLI: parameters + optional optimizer state.
void save_nerf_checkpoint(const std::string& path, const NerfModel& model,
                          const ad::Adam* adam, int64_t iter, const std::string& config_hash);
// Loads parameter values into an already-constructed model (shapes must
// match); returns the stored iteration count. adam may be null.
int64_t load_nerf_checkpoint(const std::string& path, NerfModel& model, ad::Adam* adam,
                             const std::string& expect_config_hash);

}  // namespace repose::nerf
