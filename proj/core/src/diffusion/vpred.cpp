#include <sstream>
#include <stdexcept>

#include "repose/ad/ops.hpp"
#include "repose/diffusion/refiner.hpp"

namespace repose::diffusion {
namespace {

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  return out;
}

void check_view_images(const std::vector<core::Image>& imgs, int n_views, int size,
                       const char* what) {
  if (static_cast<int>(imgs.size()) != n_views)
    throw std::invalid_argument(std::string("RefinerScene: ") + what + " has " +
                                std::to_string(imgs.size()) + " views, want " +
                                std::to_string(n_views));
  for (const auto& img : imgs)
    if (img.h != size || img.w != size || img.c != 3)
      throw std::invalid_argument(std::string("RefinerScene: ") + what +
                                  " image is not [size,size,3]");
}

// Classifier-free null conditioning: zero maps shaped like the RefNet cache.
std::vector<ad::Tensor> null_ref_cache(const DenoiserModel& model) {
  const UNetConfig ucfg = model.cfg.unet_config();
  std::vector<ad::Tensor> cache;
  for (int size : ucfg.attention_sizes()) {
    const int ch = size == ucfg.latent_hw / 2 ? ucfg.ch(1) : ucfg.ch(2);
    cache.push_back(ad::Tensor::zeros({ch, size, size}));
  }
  return cache;
}

}  // namespace

UNetConfig RefinerConfig::unet_config() const {
  UNetConfig u;
  u.base = base;
  u.mults = mults;
  u.n_views = n_views;
  u.mv_stride = mv_stride;
  u.groups = groups;
  u.latent_hw = latent_hw();
  u.attn_res = attn_res;
  u.concat_strategy = strategy == CondStrategy::concat;
  u.normal_branch = use_normal_branch;
  return u;
}

void RefinerConfig::validate() const {
  if (codec_stride != 2 && codec_stride != 4 && codec_stride != 8)
    throw std::invalid_argument("RefinerConfig: codec_stride must be 2, 4, or 8");
  if (image_size < codec_stride || image_size % codec_stride != 0)
    throw std::invalid_argument("RefinerConfig: image_size not divisible by codec_stride");
  if (T < 2) throw std::invalid_argument("RefinerConfig: T must be >= 2");
  if (sample_steps < 1 || sample_steps > T)
    throw std::invalid_argument("RefinerConfig: sample_steps must be in [1, T]");
  if (guidance_scale <= 0) throw std::invalid_argument("RefinerConfig: guidance_scale <= 0");
  if (ref_dropout < 0 || ref_dropout >= 1)
    throw std::invalid_argument("RefinerConfig: ref_dropout must be in [0, 1)");
  if (lr <= 0) throw std::invalid_argument("RefinerConfig: lr must be positive");
  if (phase1_steps < 1 || phase2_steps < 1)
    throw std::invalid_argument("RefinerConfig: step counts must be >= 1");
  if (log_every < 1 || ckpt_every < 1)
    throw std::invalid_argument("RefinerConfig: log/ckpt cadence must be >= 1");
  unet_config().validate();
}

RefinerConfig RefinerConfig::from(const core::Config& cfg) {
  RefinerConfig c;
  c.base = cfg.get_int("refiner.base", c.base);
  c.mults = parse_int_list(cfg.get_str("refiner.mults", "1,2,4"));
  c.n_views = cfg.get_int("refiner.views", c.n_views);
  c.mv_stride = cfg.get_int("refiner.mv_stride", c.mv_stride);
  c.groups = cfg.get_int("refiner.groups", c.groups);
  const std::string attn = cfg.get_str("refiner.attn_res", "auto");
  if (attn != "auto") c.attn_res = parse_int_list(attn);
  c.T = cfg.get_int("refiner.T", c.T);
  c.image_size = cfg.get_int("refiner.image_size", c.image_size);
  c.codec_stride = cfg.get_int("refiner.codec_stride", c.codec_stride);
  c.sample_steps = cfg.get_int("refiner.sample_steps", c.sample_steps);
  c.guidance_scale = cfg.get_double("refiner.guidance_scale", c.guidance_scale);
  c.ref_dropout = cfg.get_double("refiner.ref_dropout", c.ref_dropout);
  const std::string strat = cfg.get_str("refiner.cond_strategy", "conv_add");
  if (strat == "conv_add")
    c.strategy = CondStrategy::conv_add;
  else if (strat == "concat")
    c.strategy = CondStrategy::concat;
  else
    throw std::invalid_argument("RefinerConfig: unknown cond_strategy '" + strat + "'");
  c.camera_rotation_only = cfg.get_bool("refiner.camera_rotation_only", c.camera_rotation_only);
  const std::string mlgf = cfg.get_str("refiner.mlgf_inputs", "full");
  if (mlgf == "full")
    c.mlgf_inputs = MlgfInputs::full;
  else if (mlgf == "no_texture")
    c.mlgf_inputs = MlgfInputs::no_texture;
  else if (mlgf == "no_normal_semantic")
    c.mlgf_inputs = MlgfInputs::no_normal_semantic;
  else
    throw std::invalid_argument("RefinerConfig: unknown mlgf_inputs '" + mlgf + "'");
  c.use_nerf_coarse = cfg.get_bool("refiner.use_nerf_coarse", c.use_nerf_coarse);
  c.use_normal_branch = cfg.get_bool("refiner.use_normal_branch", c.use_normal_branch);
  c.lr = cfg.get_double("refiner.lr", c.lr);
  c.phase1_steps = cfg.get_int("refiner.phase1_steps", c.phase1_steps);
  c.phase2_steps = cfg.get_int("refiner.phase2_steps", c.phase2_steps);
  c.log_every = cfg.get_int("refiner.log_every", c.log_every);
  c.ckpt_every = cfg.get_int("refiner.ckpt_every", c.ckpt_every);
  c.seed = static_cast<uint64_t>(cfg.get_i64("refiner.seed", static_cast<int64_t>(c.seed)));
  c.validate();
  return c;
}

DenoiserModel::DenoiserModel(const RefinerConfig& c, uint64_t seed) : cfg(c) {
  cfg.validate();
  const core::Rng root(seed);
  const bool coarse_encoders = cfg.use_nerf_coarse && cfg.strategy == CondStrategy::conv_add;
  if (coarse_encoders) {
    core::Rng r = root.fork(0x657263);
    enc_rgb = std::make_unique<CondEncoder>("enc_rgb", r, params);
    if (cfg.use_normal_branch) {
      core::Rng rn = root.fork(0x656e6d);
      enc_normal = std::make_unique<CondEncoder>("enc_nrm", rn, params);
    }
  }
  {
    core::Rng r = root.fork(0x6d6c67);
    mlgf = std::make_unique<Mlgf>(cfg.codec_stride, r, params);
  }
  {
    core::Rng r = root.fork(0x74696d);
    time_embed = std::make_unique<TimeEmbed>(r, params);
  }
  {
    core::Rng r = root.fork(0x63616d);
    cam_embed = std::make_unique<CameraEmbed>(cfg.camera_rotation_only, r, params);
  }
  {
    core::Rng r = root.fork(0x756e65);
    unet = std::make_unique<DenoiserUNet>(cfg.unet_config(), r, params);
  }
  {
    core::Rng r = root.fork(0x726566);
    refnet = std::make_unique<RefNet>(cfg.unet_config(), r, params);
  }
}

void RefinerScene::validate(const RefinerConfig& cfg) const {
  const int v = cfg.n_views, s = cfg.image_size;
  check_view_images(gt_rgb, v, s, "gt_rgb");
  check_view_images(coarse_rgb, v, s, "coarse_rgb");
  check_view_images(map_texture, v, s, "map_texture");
  check_view_images(map_normal, v, s, "map_normal");
  check_view_images(map_semantic, v, s, "map_semantic");
  if (cfg.use_normal_branch) {
    check_view_images(gt_normal, v, s, "gt_normal");
    check_view_images(coarse_normal, v, s, "coarse_normal");
  }
  if (cam_R.size() != static_cast<size_t>(v) || cam_t.size() != static_cast<size_t>(v))
    throw std::invalid_argument("RefinerScene: camera count does not match views");
  if (ref_image.h != s || ref_image.w != s || ref_image.c != 3)
    throw std::invalid_argument("RefinerScene: bad reference image");
}

RefinerBatch prepare_batch(const RefinerConfig& cfg, const LatentCodec& codec,
                           const RefinerScene& scene) {
  if (codec.stride() != cfg.codec_stride)
    throw std::invalid_argument("prepare_batch: codec stride does not match the config");
  scene.validate(cfg);
  RefinerBatch b;
  b.n_views = cfg.n_views;
  b.x_rgb = encode_views(codec, scene.gt_rgb, Domain::rgb).data;
  if (cfg.use_normal_branch)
    b.x_normal = encode_views(codec, scene.gt_normal, Domain::normal).data;
  const int hw = cfg.latent_hw();
  const ad::Shape latent_shape = {cfg.n_views, MultiViewLatent::kChannels, hw, hw};
  if (cfg.use_nerf_coarse) {
    b.cond_rgb = ad::Tensor::from_data(latent_shape,
                                       encode_views(codec, scene.coarse_rgb, Domain::rgb).data);
    if (cfg.use_normal_branch)
      b.cond_normal = ad::Tensor::from_data(
          latent_shape, encode_views(codec, scene.coarse_normal, Domain::normal).data);
  }
  b.map_texture = images_to_batch(scene.map_texture);
  b.map_normal = images_to_batch(scene.map_normal);
  b.map_semantic = images_to_batch(scene.map_semantic);
  b.ref_latent = ad::Tensor::from_data({1, MultiViewLatent::kChannels, hw, hw},
                                       codec.encode(scene.ref_image));
  b.cam_R = scene.cam_R;
  b.cam_t = scene.cam_t;
  return b;
}

ad::Tensor view_embeddings(const DenoiserModel& model, const RefinerBatch& batch, int t) {
  std::vector<ad::Tensor> rows;
  rows.reserve(batch.cam_R.size());
  for (size_t v = 0; v < batch.cam_R.size(); ++v)
    rows.push_back(model.cam_embed->forward(batch.cam_R[v], batch.cam_t[v]));
  const ad::Tensor f_cam = rows.size() == 1 ? rows[0] : ad::concat(rows, 0);
  const ad::Tensor f_time = model.time_embed->forward(t);
  return ad::add_rowvec(f_cam, ad::reshape(f_time, {kEmbedDim}));
}

ConditioningBundle make_bundle(const DenoiserModel& model, const RefinerBatch& batch, int t,
                               bool null_reference) {
  const RefinerConfig& cfg = model.cfg;
  ConditioningBundle b;
  b.emb = view_embeddings(model, batch, t);
  b.f_geo = model.mlgf->forward(batch.map_texture, batch.map_normal, batch.map_semantic,
                                cfg.mlgf_inputs);
  if (cfg.use_nerf_coarse) {
    if (cfg.strategy == CondStrategy::conv_add) {
      b.f_rgb = model.enc_rgb->forward(batch.cond_rgb);
      if (cfg.use_normal_branch) b.f_normal = model.enc_normal->forward(batch.cond_normal);
    } else {
      b.cond_rgb = batch.cond_rgb;
      b.cond_normal = batch.cond_normal;
    }
  } else if (cfg.strategy == CondStrategy::concat) {
    const int hw = cfg.latent_hw();
    b.cond_rgb = ad::Tensor::zeros({batch.n_views, MultiViewLatent::kChannels, hw, hw});
    b.cond_normal = b.cond_rgb;
  }
  if (null_reference)
    b.ref_cache = null_ref_cache(model);
  else
    b.ref_cache = model.refnet->forward(batch.ref_latent, model.time_embed->forward(0));
  return b;
}

ad::Tensor vpred_loss_from_preds(const ad::Tensor& v_hat_rgb, const ad::Tensor& v_hat_normal,
                                 const std::vector<double>& v_rgb,
                                 const std::vector<double>& v_normal) {
  if (!v_hat_rgb.defined() || static_cast<size_t>(v_hat_rgb.size()) != v_rgb.size())
    throw std::invalid_argument("vpred_loss: rgb prediction/target size mismatch");
  std::vector<double> tr(v_rgb);
  const ad::Tensor loss_rgb = ad::mse(v_hat_rgb, ad::Tensor::from_data(v_hat_rgb.shape(),
                                                                       std::move(tr)));
  if (!v_hat_normal.defined()) return loss_rgb;
  if (static_cast<size_t>(v_hat_normal.size()) != v_normal.size())
    throw std::invalid_argument("vpred_loss: normal prediction/target size mismatch");
  std::vector<double> tn(v_normal);
  const ad::Tensor loss_nrm =
      ad::mse(v_hat_normal, ad::Tensor::from_data(v_hat_normal.shape(), std::move(tn)));
  return ad::mul_scalar(ad::add(loss_rgb, loss_nrm), 0.5);
}

ad::Tensor vpred_loss(const DenoiserModel& model, const RefinerBatch& batch,
                      const DiffusionSchedule& sched, int t, const std::vector<double>& eps_rgb,
                      const std::vector<double>& eps_normal, bool enable_view_attention,
                      bool null_reference) {
  const RefinerConfig& cfg = model.cfg;
  const int hw = cfg.latent_hw();
  const ad::Shape latent_shape = {batch.n_views, MultiViewLatent::kChannels, hw, hw};
  ad::Tensor xt_rgb = ad::Tensor::from_data(latent_shape, add_noise(batch.x_rgb, eps_rgb, t, sched));
  const std::vector<double> vt_rgb = v_target(batch.x_rgb, eps_rgb, t, sched);
  ad::Tensor xt_nrm;
  std::vector<double> vt_nrm;
  if (cfg.use_normal_branch) {
    xt_nrm = ad::Tensor::from_data(latent_shape, add_noise(batch.x_normal, eps_normal, t, sched));
    vt_nrm = v_target(batch.x_normal, eps_normal, t, sched);
  }
  const ConditioningBundle bundle = make_bundle(model, batch, t, null_reference);
  const auto [vh_rgb, vh_nrm] =
      model.unet->forward(xt_rgb, xt_nrm, bundle, enable_view_attention, &model.counters);
  return vpred_loss_from_preds(vh_rgb, vh_nrm, vt_rgb, vt_nrm);
}

}  // namespace repose::diffusion
