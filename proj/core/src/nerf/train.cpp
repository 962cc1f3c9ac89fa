#include "repose/nerf/train.hpp"

#include <filesystem>
#include <memory>
#include <ostream>

#include "repose/core/archive.hpp"

namespace repose::nerf {

void NerfConfig::validate() const {
  auto req = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("nerf config: ") + what);
  };
  req(c_f > 0 && enc_mid > 0, "channel counts must be positive");
  req(enc_stride == 4, "the encoder stem is fixed at stride 4");
  req(grid_res >= 2 && grid_ch > 0, "grid dimensions must be positive");
  req(l_x >= 0 && l_d >= 0, "encoding bands must be non-negative");
  req(mlp_width > 0, "mlp width must be positive");
  req(s_train >= 1 && s_eval >= 1, "samples per ray must be >= 1");
  req(bbox_pad >= 0, "bbox padding must be non-negative");
  req(lambda_mask >= 0 && lambda_ssim >= 0 && lambda_lpips >= 0,
      "loss weights must be non-negative");
  req(iters >= 0 && patch >= 11, "patch must fit an 11x11 SSIM window");
  req(lr > 0, "learning rate must be positive");
  req(ckpt_every > 0 && log_every > 0, "intervals must be positive");
}

NerfConfig NerfConfig::from(const core::Config& c) {
  NerfConfig n;
  n.c_f = c.get_int("nerf.c_f", n.c_f);
  n.enc_mid = c.get_int("nerf.enc_mid", n.enc_mid);
  n.grid_res = c.get_int("nerf.grid_res", n.grid_res);
  n.grid_ch = c.get_int("nerf.grid_ch", n.grid_ch);
  n.l_x = c.get_int("nerf.l_x", n.l_x);
  n.l_d = c.get_int("nerf.l_d", n.l_d);
  n.mlp_width = c.get_int("nerf.mlp_width", n.mlp_width);
  n.s_train = c.get_int("nerf.s_train", n.s_train);
  n.s_eval = c.get_int("nerf.s_eval", n.s_eval);
  n.bbox_pad = c.get_double("nerf.bbox_pad", n.bbox_pad);
  n.lambda_mask = c.get_double("nerf.lambda_mask", n.lambda_mask);
  n.lambda_ssim = c.get_double("nerf.lambda_ssim", n.lambda_ssim);
  n.lambda_lpips = c.get_double("nerf.lambda_lpips", n.lambda_lpips);
  n.iters = c.get_int("nerf.iters", n.iters);
  n.patch = c.get_int("nerf.patch", n.patch);
  n.lr = c.get_double("nerf.lr", n.lr);
  n.grad_clip = c.get_double("nerf.grad_clip", n.grad_clip);
  n.ckpt_every = c.get_int("nerf.ckpt_every", n.ckpt_every);
  n.log_every = c.get_int("nerf.log_every", n.log_every);
  n.seed = static_cast<uint64_t>(c.get_i64("nerf.seed", static_cast<int64_t>(n.seed)));
  n.validate();
  return n;
}

void save_nerf_checkpoint(const std::string& path, const NerfModel& model,
                          const ad::Adam* adam, int64_t iter, const std::string& config_hash) {
  core::Archive a;
  a.put_string("meta/kind", "nerf_checkpoint");
  a.put_string("meta/config_hash", config_hash);
  a.put_scalar_i64("meta/iter", iter);
  for (const auto& [name, t] : model.params.items())
    a.put_f64("param/" + name, {static_cast<int64_t>(t.size())}, t.value());
  if (adam != nullptr) {
    a.put_scalar_i64("adam/steps", adam->steps_taken());
    const auto& items = adam->params().items();
    for (size_t i = 0; i < items.size(); ++i) {
      a.put_f64("adam/m/" + items[i].first,
                {static_cast<int64_t>(adam->moment1(i).size())}, adam->moment1(i));
      a.put_f64("adam/v/" + items[i].first,
                {static_cast<int64_t>(adam->moment2(i).size())}, adam->moment2(i));
    }
  }
  a.save(path);
}

int64_t load_nerf_checkpoint(const std::string& path, NerfModel& model, ad::Adam* adam,
                             const std::string& expect_config_hash) {
  core::Archive a = core::Archive::load(path);
  if (a.get_string("meta/kind") != "nerf_checkpoint")
    throw std::runtime_error("checkpoint kind mismatch: " + path);
  const std::string stored = a.get_string("meta/config_hash");
  if (!expect_config_hash.empty() && stored != expect_config_hash)
    throw std::runtime_error("checkpoint config hash " + stored + " does not match " +
                             expect_config_hash + "; refusing to resume");
  for (const auto& [name, t] : model.params.items()) {
    const auto& v = a.get_f64("param/" + name);
    if (v.size() != t.value().size())
      throw std::runtime_error("checkpoint parameter size mismatch for " + name);
    t.node().value = v;
  }
  if (adam != nullptr && a.has("adam/steps")) {
    adam->set_steps_taken(a.get_scalar_i64("adam/steps"));
    for (const auto& [name, t] : model.params.items())
      adam->load_state(name, a.get_f64("adam/m/" + name), a.get_f64("adam/v/" + name));
  }
  return a.get_scalar_i64("meta/iter");
}

NerfTrainResult train_nerf(const NerfConfig& cfg, const NerfTrainData& data,
                           const std::string& ckpt_path, const std::string& config_hash,
                           std::ostream& log) {
  cfg.validate();
  if (data.views.empty()) throw std::invalid_argument("train_nerf: no training views");
  for (const auto& v : data.views) {
    ad::check(v.rgb.h >= cfg.patch && v.rgb.w >= cfg.patch,
              "train_nerf: view smaller than the training patch");
    ad::check(v.rgb.h == v.mask.h && v.rgb.w == v.mask.w, "train_nerf: mask/rgb mismatch");
  }

  NerfModel model(cfg, cfg.seed);
  ad::Adam adam(model.params, {cfg.lr, 0.9, 0.999, 1e-8, cfg.grad_clip});
  int64_t start_iter = 0;
  if (std::filesystem::exists(ckpt_path))
    start_iter = load_nerf_checkpoint(ckpt_path, model, &adam, config_hash);

  const PerceptualNet perceptual;
  // posed targets are pose-dependent; cache one per distinct view
  std::vector<body::PosedBody> posed(data.views.size());
  std::vector<std::unique_ptr<body::VertexGrid>> grids(data.views.size());
  for (size_t i = 0; i < data.views.size(); ++i) {
    posed[i] = body::forward_lbs(data.tpl, data.views[i].pose);
    grids[i] = std::make_unique<body::VertexGrid>(posed[i].vertices, body::kDefaultInverseRadius);
  }

  NerfTrainResult result;
  result.iters_run = static_cast<int>(start_iter);
  double last_total = 0;
  for (int64_t it = start_iter; it < cfg.iters; ++it) {
    core::Rng rng = core::Rng(cfg.seed).fork(0x747261696e).fork(static_cast<uint64_t>(it));
    const size_t vi = static_cast<size_t>(rng.uniform_int(data.views.size()));
    const TrainView& view = data.views[vi];

    // the reference pass is inside the loop: encoder/grid parameters train
    const RefContext ref = make_ref_context(cfg, model.encoder, model.gridnet, data.tpl,
                                            data.ref_image, data.ref_cam, data.ref_pose);

    const int y0 = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(view.rgb.h - cfg.patch + 1)));
    const int x0 = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(view.rgb.w - cfg.patch + 1)));
    std::vector<std::pair<int, int>> pixels;
    pixels.reserve(static_cast<size_t>(cfg.patch) * cfg.patch);
    for (int y = 0; y < cfg.patch; ++y)
      for (int x = 0; x < cfg.patch; ++x) pixels.emplace_back(y0 + y, x0 + x);

    const RenderedRays rays = render_rays(model, ref, data.tpl, view.pose, posed[vi],
                                          *grids[vi], view.cam, pixels, cfg.s_train, rng);
    const core::Image gt_rgb = core::crop(view.rgb, y0, x0, cfg.patch, cfg.patch);
    const core::Image gt_mask = core::crop(view.mask, y0, x0, cfg.patch, cfg.patch);
    const NerfLossWeights weights{cfg.lambda_mask, cfg.lambda_ssim, cfg.lambda_lpips};
    NerfLossOut loss = nerf_loss(rays.rgb, rays.alpha, cfg.patch, cfg.patch, gt_rgb, gt_mask,
                                 weights, cfg.lambda_lpips > 0 ? &perceptual : nullptr);

    adam.zero_grad();
    ad::backward(loss.total);
    adam.step();
    last_total = loss.total.item();
    result.iters_run = static_cast<int>(it) + 1;

    if ((it + 1) % cfg.log_every == 0 || it + 1 == cfg.iters)
      log << "iter " << (it + 1) << "/" << cfg.iters << " total " << last_total << " recon "
          << loss.recon << " mask " << loss.mask_bce << " ssim " << loss.ssim << " lpips "
          << loss.lpips << "\n";
    if ((it + 1) % cfg.ckpt_every == 0 || it + 1 == cfg.iters)
      save_nerf_checkpoint(ckpt_path, model, &adam, it + 1, config_hash);
  }
  if (cfg.iters == 0 || start_iter >= cfg.iters)
    save_nerf_checkpoint(ckpt_path, model, &adam, std::max<int64_t>(start_iter, 0), config_hash);
  result.final_loss = last_total;
  return result;
}

}  // namespace repose::nerf
