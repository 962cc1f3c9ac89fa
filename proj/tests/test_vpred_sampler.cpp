#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "repose/ad/ops.hpp"
#include "repose/diffusion/refiner.hpp"

using namespace repose;
using diffusion::RefinerConfig;

namespace {

// Small enough that a forward pass costs milliseconds, large enough that
// every module still runs: 2 views, 16px images, 4x4 latents, 8-wide UNet.
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
  cfg.seed = 11;
  return cfg;
}

core::Image noise_image(core::Rng& rng, int size) {
  core::Image im(size, size, 3);
  for (auto& p : im.px) p = 0.5 + 0.4 * rng.uniform(-1.0, 1.0);
  return im;
}

diffusion::RefinerScene make_scene(const RefinerConfig& cfg, uint64_t seed) {
  core::Rng rng(seed);
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
  return s;
}

diffusion::RefinerBatch make_batch(const RefinerConfig& cfg, uint64_t seed) {
  const diffusion::ProjectionCodec codec(cfg.codec_stride, 5);
  return diffusion::prepare_batch(cfg, codec, make_scene(cfg, seed));
}

std::vector<double> draw(core::Rng& rng, size_t n, double amp = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = amp * rng.normal();
  return v;
}

// Zero-init params block every gradient path through them; nudge the whole
// parameter set so gradcheck exercises real, nonzero flows end to end.
void wake_params(ad::ParamSet& params, uint64_t seed) {
  core::Rng rng(seed);
  for (const auto& [name, t] : params.items())
    for (auto& v : t.node().value) v += 0.05 * rng.uniform(-1.0, 1.0);
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("vpred objective vanishes exactly when the oracle velocities are injected") {
  core::Rng rng(21);
  const ad::Shape shape = {2, 4, 4, 4};
  const size_t n = 2 * 4 * 4 * 4;
  const std::vector<double> vr = draw(rng, n);
  const std::vector<double> vn = draw(rng, n);

  std::vector<double> vr_copy(vr), vn_copy(vn);
  const ad::Tensor hat_rgb = ad::Tensor::from_data(shape, std::move(vr_copy));
  const ad::Tensor hat_nrm = ad::Tensor::from_data(shape, std::move(vn_copy));
  CHECK(diffusion::vpred_loss_from_preds(hat_rgb, hat_nrm, vr, vn).item() == 0.0);

  // Zero predictions reduce to the halved sum of mean squared targets.
  double mr = 0, mn = 0;
  for (size_t i = 0; i < n; ++i) {
    mr += vr[i] * vr[i];
    mn += vn[i] * vn[i];
  }
  mr /= static_cast<double>(n);
  mn /= static_cast<double>(n);
  const ad::Tensor zr = ad::Tensor::zeros(shape), zn = ad::Tensor::zeros(shape);
  CHECK(diffusion::vpred_loss_from_preds(zr, zn, vr, vn).item() ==
        doctest::Approx(0.5 * (mr + mn)).epsilon(1e-12));

  // Single-branch form: plain MSE over the rgb domain only.
  CHECK(diffusion::vpred_loss_from_preds(zr, ad::Tensor(), vr, {}).item() ==
        doctest::Approx(mr).epsilon(1e-12));

  CHECK_THROWS_AS(diffusion::vpred_loss_from_preds(zr, zn, vr, draw(rng, 3)),
                  std::invalid_argument);
  CHECK_THROWS_AS(diffusion::vpred_loss_from_preds(ad::Tensor(), zn, vr, vn),
                  std::invalid_argument);
}

TEST_CASE("vpred objective backpropagates exact gradients through a linear head") {
  core::Rng rng(22);
  const ad::Tensor x_fixed = ad::Tensor::from_data({16, 10}, draw(rng, 160, 0.3));
  const ad::Tensor w = ad::Tensor::from_data({10, 1}, draw(rng, 10, 0.3), true);
  const std::vector<double> target = draw(rng, 16);

  const auto rebuild = [&]() {
    const ad::Tensor v_hat = ad::reshape(ad::matmul(x_fixed, w), {1, 4, 2, 2});
    return diffusion::vpred_loss_from_preds(v_hat, ad::Tensor(), target, {});
  };
  const auto res = gradcheck::run(rebuild, {{"w", w}});
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("end-to-end vpred loss differentiates through every module") {
  RefinerConfig cfg = tiny_config();
  cfg.n_views = 1;  // one view keeps the probe budget cheap
  diffusion::DenoiserModel model(cfg, cfg.seed);
  wake_params(model.params, 23);

  const diffusion::RefinerBatch batch = make_batch(cfg, 24);
  const auto sched = diffusion::make_schedule(cfg.T);
  core::Rng rng(25);
  const std::vector<double> eps_rgb = draw(rng, batch.x_rgb.size());
  const std::vector<double> eps_nrm = draw(rng, batch.x_normal.size());

  const auto rebuild = [&]() {
    return diffusion::vpred_loss(model, batch, sched, 17, eps_rgb, eps_nrm, true, false);
  };

  // One leaf per module family: conditioning encoder, MLGF, both embeddings,
  // the reference mirror, and the denoiser head.
  const std::vector<std::pair<std::string, ad::Tensor>> leaves = {
      {"enc_rgb.c8.w", model.params.get("enc_rgb.c8.w")},
      {"mlgf.tex.zero.w", model.params.get("mlgf.tex.zero.w")},
      {"time.w2", model.params.get("time.w2")},
      {"cam.w2", model.params.get("cam.w2")},
      {"refnet.attn2.wv", model.params.get("refnet.attn2.wv")},
      {"unet.rgb.out.w", model.params.get("unet.rgb.out.w")},
  };
  const auto res = gradcheck::run(rebuild, leaves, 1e-5, 1e-6, 6);
  INFO("worst: ", res.worst);
  CHECK(res.max_rel_err < 1e-3);
}

TEST_CASE("sampler is bit-deterministic in its seed and validates the step count") {
  const RefinerConfig cfg = tiny_config();
  const diffusion::DenoiserModel model(cfg, cfg.seed);
  const diffusion::RefinerBatch batch = make_batch(cfg, 26);
  const auto sched = diffusion::make_schedule(cfg.T);

  const auto a = diffusion::sample(model, batch, sched, 3, 9, true);
  const auto b = diffusion::sample(model, batch, sched, 3, 9, true);
  CHECK(bit_equal(a.rgb.data, b.rgb.data));
  CHECK(bit_equal(a.normal.data, b.normal.data));
  a.rgb.validate();
  a.normal.validate();
  CHECK(a.rgb.n_views == cfg.n_views);
  CHECK(a.rgb.h == cfg.latent_hw());

  const auto c = diffusion::sample(model, batch, sched, 3, 10, true);
  CHECK_FALSE(bit_equal(a.rgb.data, c.rgb.data));

  CHECK_THROWS_AS(diffusion::sample(model, batch, sched, 0, 9, true), std::invalid_argument);
  CHECK_THROWS_AS(diffusion::sample(model, batch, sched, cfg.T + 1, 9, true),
                  std::invalid_argument);
}

TEST_CASE("guided and unguided sampling agree while reference attention is an identity") {
  // A fresh model's reference-attention layers contribute nothing (zero-init
  // output projections), so the null-conditioned pass predicts the same
  // velocity and the guidance mix collapses: same bits for any scale.
  RefinerConfig cfg = tiny_config();
  const diffusion::RefinerBatch batch = make_batch(cfg, 27);
  const auto sched = diffusion::make_schedule(cfg.T);

  const diffusion::DenoiserModel plain(cfg, cfg.seed);
  cfg.guidance_scale = 2.5;
  const diffusion::DenoiserModel guided(cfg, cfg.seed);

  const auto a = diffusion::sample(plain, batch, sched, 3, 12, true);
  const auto b = diffusion::sample(guided, batch, sched, 3, 12, true);
  CHECK(bit_equal(a.rgb.data, b.rgb.data));
  CHECK(bit_equal(a.normal.data, b.normal.data));
}

TEST_CASE("decode_views turns sampled latents into clamped full-size images") {
  const RefinerConfig cfg = tiny_config();
  const diffusion::DenoiserModel model(cfg, cfg.seed);
  const diffusion::RefinerBatch batch = make_batch(cfg, 28);
  const auto sched = diffusion::make_schedule(cfg.T);
  const diffusion::ProjectionCodec codec(cfg.codec_stride, 5);

  const auto out = diffusion::sample(model, batch, sched, 2, 13, false);
  const auto images = diffusion::decode_views(codec, out.rgb, cfg.image_size);
  REQUIRE(images.size() == static_cast<size_t>(cfg.n_views));
  for (const auto& im : images) {
    CHECK(im.h == cfg.image_size);
    CHECK(im.w == cfg.image_size);
    CHECK(im.c == 3);
    for (const double p : im.px) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
  }
}

TEST_CASE("view embeddings vary with the timestep and across cameras") {
  const RefinerConfig cfg = tiny_config();
  const diffusion::DenoiserModel model(cfg, cfg.seed);
  const diffusion::RefinerBatch batch = make_batch(cfg, 29);

  const ad::Tensor e1 = diffusion::view_embeddings(model, batch, 1);
  REQUIRE(e1.ndim() == 2);
  CHECK(e1.dim(0) == cfg.n_views);
  CHECK(e1.dim(1) == diffusion::kEmbedDim);

  const ad::Tensor e2 = diffusion::view_embeddings(model, batch, cfg.T);
  double dt = 0, dv = 0;
  for (int64_t i = 0; i < e1.size(); ++i) dt = std::max(dt, std::fabs(e1.at(i) - e2.at(i)));
  CHECK(dt > 1e-9);

  // The two views look through different cameras, so their rows differ.
  for (int64_t i = 0; i < diffusion::kEmbedDim; ++i)
    dv = std::max(dv, std::fabs(e1.at(i) - e1.at(diffusion::kEmbedDim + i)));
  CHECK(dv > 1e-9);
}

TEST_CASE("single-branch configuration drops every normal-domain tensor") {
  RefinerConfig cfg = tiny_config();
  cfg.use_normal_branch = false;
  const diffusion::DenoiserModel model(cfg, cfg.seed);
  CHECK(model.enc_normal == nullptr);
  CHECK_FALSE(model.params.has("enc_nrm.c1.w"));
  CHECK_FALSE(model.params.has("unet.nrm.in.w"));

  const diffusion::RefinerBatch batch = make_batch(cfg, 30);
  CHECK(batch.x_normal.empty());
  CHECK_FALSE(batch.cond_normal.defined());

  const auto sched = diffusion::make_schedule(cfg.T);
  core::Rng rng(31);
  const ad::Tensor loss = diffusion::vpred_loss(model, batch, sched, 9,
                                                draw(rng, batch.x_rgb.size()), {}, false, false);
  CHECK(std::isfinite(loss.item()));

  const auto out = diffusion::sample(model, batch, sched, 2, 14, false);
  out.rgb.validate();
  CHECK(out.normal.data.empty());
}

TEST_CASE("prepare_batch rejects malformed scenes and mismatched codecs") {
  const RefinerConfig cfg = tiny_config();
  const diffusion::ProjectionCodec codec(cfg.codec_stride, 5);

  diffusion::RefinerScene scene = make_scene(cfg, 32);
  scene.coarse_rgb.pop_back();
  CHECK_THROWS_AS(diffusion::prepare_batch(cfg, codec, scene), std::invalid_argument);

  scene = make_scene(cfg, 32);
  core::Rng rng(33);
  scene.ref_image = noise_image(rng, cfg.image_size * 2);
  CHECK_THROWS_AS(diffusion::prepare_batch(cfg, codec, scene), std::invalid_argument);

  scene = make_scene(cfg, 32);
  scene.cam_R.pop_back();
  CHECK_THROWS_AS(diffusion::prepare_batch(cfg, codec, scene), std::invalid_argument);

  const diffusion::ProjectionCodec wrong_stride(8, 5);
  CHECK_THROWS_AS(diffusion::prepare_batch(cfg, wrong_stride, make_scene(cfg, 32)),
                  std::invalid_argument);
}

TEST_CASE("coarse-conditioning encoders exist only for the conv_add strategy") {
  const RefinerConfig cfg = tiny_config();
  const diffusion::DenoiserModel conv_add(cfg, cfg.seed);
  CHECK(conv_add.enc_rgb != nullptr);
  CHECK(conv_add.enc_normal != nullptr);
  CHECK(conv_add.params.has("enc_rgb.c1.w"));

  RefinerConfig ccfg = tiny_config();
  ccfg.strategy = diffusion::CondStrategy::concat;
  const diffusion::DenoiserModel concat(ccfg, ccfg.seed);
  CHECK(concat.enc_rgb == nullptr);
  CHECK(concat.enc_normal == nullptr);
  CHECK_FALSE(concat.params.has("enc_rgb.c1.w"));
  CHECK(concat.params.get("unet.rgb.in.w").dim(1) == 8);

  // The concat path must still train and sample end to end.
  const diffusion::RefinerBatch batch = make_batch(ccfg, 34);
  const auto sched = diffusion::make_schedule(ccfg.T);
  core::Rng rng(35);
  const ad::Tensor loss =
      diffusion::vpred_loss(concat, batch, sched, 5, draw(rng, batch.x_rgb.size()),
                            draw(rng, batch.x_normal.size()), false, false);
  CHECK(std::isfinite(loss.item()));
  const auto out = diffusion::sample(concat, batch, sched, 2, 15, false);
  out.rgb.validate();

  // Without the stage-1 renders there is nothing to encode either.
  RefinerConfig no_coarse = tiny_config();
  no_coarse.use_nerf_coarse = false;
  const diffusion::DenoiserModel bare(no_coarse, no_coarse.seed);
  CHECK(bare.enc_rgb == nullptr);
  const diffusion::RefinerBatch bare_batch = make_batch(no_coarse, 36);
  CHECK_FALSE(bare_batch.cond_rgb.defined());
  const auto bare_out = diffusion::sample(bare, bare_batch, sched, 2, 16, false);
  bare_out.rgb.validate();
}

TEST_CASE("refiner config parses its key block and rejects unknown enum values") {
  core::Config raw = core::Config::parse_string(
      "refiner.base = 8\n"
      "refiner.mults = 1,2,4\n"
      "refiner.views = 2\n"
      "refiner.groups = 4\n"
      "refiner.T = 50\n"
      "refiner.image_size = 16\n"
      "refiner.codec_stride = 4\n"
      "refiner.sample_steps = 5\n"
      "refiner.cond_strategy = concat\n"
      "refiner.mlgf_inputs = no_texture\n"
      "refiner.use_nerf_coarse = false\n"
      "refiner.guidance_scale = 2.0\n"
      "refiner.seed = 77\n");
  const RefinerConfig cfg = RefinerConfig::from(raw);
  CHECK(cfg.base == 8);
  CHECK(cfg.n_views == 2);
  CHECK(cfg.T == 50);
  CHECK(cfg.latent_hw() == 4);
  CHECK(cfg.strategy == diffusion::CondStrategy::concat);
  CHECK(cfg.mlgf_inputs == diffusion::MlgfInputs::no_texture);
  CHECK_FALSE(cfg.use_nerf_coarse);
  CHECK(cfg.guidance_scale == 2.0);
  CHECK(cfg.seed == 77);
  CHECK(cfg.mv_stride == 2);  // untouched keys keep their defaults

  CHECK_THROWS_AS(
      RefinerConfig::from(core::Config::parse_string("refiner.cond_strategy = bogus\n")),
      std::invalid_argument);
  CHECK_THROWS_AS(
      RefinerConfig::from(core::Config::parse_string("refiner.mlgf_inputs = bogus\n")),
      std::invalid_argument);

  RefinerConfig bad = tiny_config();
  bad.codec_stride = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = tiny_config();
  bad.image_size = 17;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = tiny_config();
  bad.sample_steps = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = tiny_config();
  bad.ref_dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
