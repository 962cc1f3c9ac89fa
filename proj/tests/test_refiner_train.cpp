#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "repose/core/archive.hpp"
#include "repose/core/image.hpp"
#include "repose/diffusion/refiner.hpp"

using namespace repose;
using diffusion::RefinerConfig;

namespace {
namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("repose_refiner_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

RefinerConfig tiny_config() {
  RefinerConfig cfg;
  cfg.base = 8;
  cfg.mults = {1, 2, 4};
  cfg.n_views = 2;
  cfg.mv_stride = 2;
  cfg.groups = 4;
  cfg.T = 40;
  cfg.image_size = 16;
  cfg.codec_stride = 4;
  cfg.sample_steps = 4;
  cfg.lr = 1e-3;
  cfg.phase1_steps = 6;
  cfg.phase2_steps = 4;
  cfg.log_every = 2;
  cfg.ckpt_every = 100;  // only the final write unless a test lowers it
  cfg.seed = 11;
  return cfg;
}

core::Image noise_image(core::Rng& rng, int size) {
  core::Image im(size, size, 3);
  for (auto& p : im.px) p = 0.5 + 0.4 * rng.uniform(-1.0, 1.0);
  return im;
}

std::vector<diffusion::RefinerScene> make_scenes(const RefinerConfig& cfg, int count,
                                                 uint64_t seed) {
  core::Rng rng(seed);
  std::vector<diffusion::RefinerScene> scenes;
  for (int i = 0; i < count; ++i) {
    diffusion::RefinerScene s;
    for (int v = 0; v < cfg.n_views; ++v) {
      s.gt_rgb.push_back(noise_image(rng, cfg.image_size));
      s.gt_normal.push_back(noise_image(rng, cfg.image_size));
      s.coarse_rgb.push_back(noise_image(rng, cfg.image_size));
      s.coarse_normal.push_back(noise_image(rng, cfg.image_size));
      s.map_texture.push_back(noise_image(rng, cfg.image_size));
      s.map_normal.push_back(noise_image(rng, cfg.image_size));
      s.map_semantic.push_back(noise_image(rng, cfg.image_size));
      s.cam_R.emplace_back(Eigen::AngleAxisd(0.4 * v - 0.2, Eigen::Vector3d::UnitY()));
      s.cam_t.emplace_back(0.1 * v, -0.05, 2.0);
    }
    s.ref_image = noise_image(rng, cfg.image_size);
    scenes.push_back(std::move(s));
  }
  return scenes;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("phase-1 prefixes split the parameter space the way phase 2 expects") {
  for (const char* frozen : {"mlgf.tex.c1.w", "mlgf.attn.wq", "enc_rgb.c8.w", "enc_nrm.c1.b",
                             "refnet.in.w", "refnet.attn2.wo"})
    CHECK(diffusion::is_frozen_in_phase2(frozen));
  for (const char* live : {"unet.rgb.in.w", "unet.attn1.1d.wo", "time.w1", "cam.w2",
                           "unet.nrm.out.b"})
    CHECK_FALSE(diffusion::is_frozen_in_phase2(live));
}

TEST_CASE("phase 1 trains, logs its cadence, and leaves view attention cold") {
  const TempDir dir;
  const RefinerConfig cfg = tiny_config();
  const auto scenes = make_scenes(cfg, 2, 42);

  std::ostringstream log;
  const auto res = diffusion::train_refiner(cfg, 1, scenes, dir.file("p1.ckpt"), "", "h1", log);
  CHECK(res.steps_run == cfg.phase1_steps);
  REQUIRE(res.loss_history.size() == static_cast<size_t>(cfg.phase1_steps));
  for (const double l : res.loss_history) {
    CHECK(std::isfinite(l));
    CHECK(l >= 0.0);
  }
  CHECK(log.str().find("phase 1 step 2/6 vpred") != std::string::npos);
  CHECK(log.str().find("phase 1 step 6/6 vpred") != std::string::npos);
  CHECK(fs::exists(dir.file("p1.ckpt")));

  // Phase 1 never routes through the view-attention paths; the reference
  // path runs at both sites on every step.
  CHECK(res.attn.view1d == 0);
  CHECK(res.attn.multiview == 0);
  CHECK(res.attn.reference == 2 * cfg.phase1_steps);

  CHECK_THROWS_AS(diffusion::train_refiner(cfg, 3, scenes, dir.file("x.ckpt"), "", "h1", log),
                  std::invalid_argument);
}

TEST_CASE("phase 2 needs a phase-1 checkpoint and freezes the conditioning tower") {
  const TempDir dir;
  const RefinerConfig cfg = tiny_config();
  const auto scenes = make_scenes(cfg, 2, 43);
  std::ostringstream log;

  // No phase-1 checkpoint: refused, and the message says what to do.
  CHECK_THROWS_WITH_AS(
      diffusion::train_refiner(cfg, 2, scenes, dir.file("p2.ckpt"), dir.file("missing.ckpt"),
                               "h1", log),
      doctest::Contains("phase 1"), std::invalid_argument);

  diffusion::train_refiner(cfg, 1, scenes, dir.file("p1.ckpt"), "", "h1", log);
  const auto res2 = diffusion::train_refiner(cfg, 2, scenes, dir.file("p2.ckpt"),
                                             dir.file("p1.ckpt"), "h1", log);
  CHECK(res2.steps_run == cfg.phase2_steps);
  CHECK(log.str().find("phase 2 step 4/4 vpred") != std::string::npos);

  // Phase 2 turns the view-attention paths on.
  CHECK(res2.attn.view1d == 2 * cfg.phase2_steps);
  CHECK(res2.attn.multiview == 2 * cfg.phase2_steps);
  CHECK(res2.attn.reference == 2 * cfg.phase2_steps);

  // Frozen families are bit-identical across the phase-2 run; the denoiser
  // itself must have moved.
  const core::Archive a1 = core::Archive::load(dir.file("p1.ckpt"));
  const core::Archive a2 = core::Archive::load(dir.file("p2.ckpt"));
  CHECK(a1.get_scalar_i64("meta/phase") == 1);
  CHECK(a2.get_scalar_i64("meta/phase") == 2);

  const diffusion::DenoiserModel probe(cfg, cfg.seed);
  int frozen_seen = 0;
  bool denoiser_moved = false;
  for (const auto& [name, t] : probe.params.items()) {
    (void)t;
    const auto& v1 = a1.get_f64("param/" + name);
    const auto& v2 = a2.get_f64("param/" + name);
    if (diffusion::is_frozen_in_phase2(name)) {
      CHECK(bit_equal(v1, v2));
      ++frozen_seen;
    } else if (!bit_equal(v1, v2)) {
      denoiser_moved = true;
    }
  }
  CHECK(frozen_seen > 0);
  CHECK(denoiser_moved);
}

TEST_CASE("a split run resumes from its checkpoint and lands on the same bits") {
  const TempDir dir;
  RefinerConfig cfg = tiny_config();
  const auto scenes = make_scenes(cfg, 2, 44);
  std::ostringstream log;

  // Straight: 8 steps in one call.
  cfg.phase1_steps = 8;
  diffusion::train_refiner(cfg, 1, scenes, dir.file("straight.ckpt"), "", "h1", log);

  // Segmented: 4 steps, then resume the same checkpoint up to 8.
  cfg.phase1_steps = 4;
  diffusion::train_refiner(cfg, 1, scenes, dir.file("split.ckpt"), "", "h1", log);
  cfg.phase1_steps = 8;
  const auto resumed =
      diffusion::train_refiner(cfg, 1, scenes, dir.file("split.ckpt"), "", "h1", log);
  CHECK(resumed.loss_history.size() == 4);  // only the second half ran

  const core::Archive sa = core::Archive::load(dir.file("straight.ckpt"));
  const core::Archive sb = core::Archive::load(dir.file("split.ckpt"));
  CHECK(sa.get_scalar_i64("meta/step") == 8);
  CHECK(sb.get_scalar_i64("meta/step") == 8);

  const diffusion::DenoiserModel probe(cfg, cfg.seed);
  for (const auto& [name, t] : probe.params.items()) {
    (void)t;
    CHECK(bit_equal(sa.get_f64("param/" + name), sb.get_f64("param/" + name)));
  }
}

TEST_CASE("resume refuses a checkpoint from a different config or phase") {
  const TempDir dir;
  const RefinerConfig cfg = tiny_config();
  const auto scenes = make_scenes(cfg, 1, 45);
  std::ostringstream log;

  diffusion::train_refiner(cfg, 1, scenes, dir.file("p1.ckpt"), "", "hash-a", log);

  // Same path, different config hash: the run must not silently continue.
  CHECK_THROWS_WITH_AS(
      diffusion::train_refiner(cfg, 1, scenes, dir.file("p1.ckpt"), "", "hash-b", log),
      doctest::Contains("refusing to resume"), std::runtime_error);

  // Loading a phase-1 checkpoint while expecting phase 2 fails too.
  diffusion::DenoiserModel model(cfg, cfg.seed);
  CHECK_THROWS_AS(
      diffusion::load_refiner_checkpoint(dir.file("p1.ckpt"), model, nullptr, nullptr, 2,
                                         "hash-a"),
      std::runtime_error);

  // With the right hash and phase the load reports the stored step.
  CHECK(diffusion::load_refiner_checkpoint(dir.file("p1.ckpt"), model, nullptr, nullptr, 1,
                                           "hash-a") == cfg.phase1_steps);
  // expect_phase 0 and an empty hash skip both checks.
  CHECK(diffusion::load_refiner_checkpoint(dir.file("p1.ckpt"), model, nullptr, nullptr, 0,
                                           "") == cfg.phase1_steps);
  CHECK_THROWS_AS(
      diffusion::load_refiner_checkpoint(dir.file("nope.ckpt"), model, nullptr, nullptr, 0, ""),
      std::runtime_error);
}

TEST_CASE("checkpoint round trip restores every parameter bit for bit") {
  const TempDir dir;
  const RefinerConfig cfg = tiny_config();
  const auto scenes = make_scenes(cfg, 1, 46);
  std::ostringstream log;
  diffusion::train_refiner(cfg, 1, scenes, dir.file("p1.ckpt"), "", "h1", log);

  diffusion::DenoiserModel fresh(cfg, cfg.seed + 1);  // different init on purpose
  diffusion::load_refiner_checkpoint(dir.file("p1.ckpt"), fresh, nullptr, nullptr, 1, "h1");

  const core::Archive a = core::Archive::load(dir.file("p1.ckpt"));
  CHECK(a.get_string("meta/kind") == "refiner_checkpoint");
  CHECK(a.get_scalar_i64("meta/T") == cfg.T);
  for (const auto& [name, t] : fresh.params.items())
    CHECK(bit_equal(t.value(), a.get_f64("param/" + name)));
}
