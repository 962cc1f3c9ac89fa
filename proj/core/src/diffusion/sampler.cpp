#include <cmath>
#include <stdexcept>

#include "repose/ad/ops.hpp"
#include "repose/diffusion/refiner.hpp"

namespace repose::diffusion {
namespace {

std::vector<double> draw_normals(core::Rng& rng, int64_t n) {
  std::vector<double> out(static_cast<size_t>(n));
  for (auto& v : out) v = rng.normal();
  return out;
}

}  // namespace

SampleOutput sample(const DenoiserModel& model, const RefinerBatch& batch,
                    const DiffusionSchedule& sched, int n_steps, uint64_t seed,
                    bool enable_view_attention) {
  if (n_steps < 1) throw std::invalid_argument("sample: n_steps must be >= 1");
  if (n_steps > sched.T) throw std::invalid_argument("sample: n_steps exceeds schedule length");
  const RefinerConfig& cfg = model.cfg;
  const int hw = cfg.latent_hw();
  const ad::Shape latent_shape = {batch.n_views, MultiViewLatent::kChannels, hw, hw};
  const int64_t n = static_cast<int64_t>(batch.n_views) * MultiViewLatent::kChannels * hw * hw;

  ad::NoGradGuard ng;
  core::Rng rng(seed);
  std::vector<double> x_rgb = draw_normals(rng, n);
  std::vector<double> x_nrm;
  if (cfg.use_normal_branch) x_nrm = draw_normals(rng, n);

  // Everything except the timestep embedding is constant across steps.
  ConditioningBundle bundle = make_bundle(model, batch, sched.T, false);
  ConditioningBundle null_bundle;
  const bool guided = cfg.guidance_scale != 1.0;
  if (guided) null_bundle = make_bundle(model, batch, sched.T, true);

  for (int i = n_steps; i >= 1; --i) {
    const int t = static_cast<int>(std::lround(static_cast<double>(sched.T) * i / n_steps));
    const int t_next =
        static_cast<int>(std::lround(static_cast<double>(sched.T) * (i - 1) / n_steps));
    bundle.emb = view_embeddings(model, batch, t);
    std::vector<double> xr(x_rgb), xn(x_nrm);
    const ad::Tensor xt_rgb = ad::Tensor::from_data(latent_shape, std::move(xr));
    ad::Tensor xt_nrm;
    if (cfg.use_normal_branch) xt_nrm = ad::Tensor::from_data(latent_shape, std::move(xn));
    auto [v_rgb, v_nrm] =
        model.unet->forward(xt_rgb, xt_nrm, bundle, enable_view_attention, &model.counters);
    std::vector<double> vr = v_rgb.value();
    std::vector<double> vn = v_nrm.defined() ? v_nrm.value() : std::vector<double>();
    if (guided) {
      null_bundle.emb = bundle.emb;
      const auto [v0_rgb, v0_nrm] =
          model.unet->forward(xt_rgb, xt_nrm, null_bundle, enable_view_attention, &model.counters);
      for (size_t k = 0; k < vr.size(); ++k)
        vr[k] = v0_rgb.at(static_cast<int64_t>(k)) +
                cfg.guidance_scale * (vr[k] - v0_rgb.at(static_cast<int64_t>(k)));
      for (size_t k = 0; k < vn.size(); ++k)
        vn[k] = v0_nrm.at(static_cast<int64_t>(k)) +
                cfg.guidance_scale * (vn[k] - v0_nrm.at(static_cast<int64_t>(k)));
    }
    x_rgb = ddim_step(x_rgb, vr, t, t_next, sched);
    if (cfg.use_normal_branch) x_nrm = ddim_step(x_nrm, vn, t, t_next, sched);
  }

  SampleOutput out;
  out.rgb = MultiViewLatent(batch.n_views, hw, hw, Domain::rgb);
  out.rgb.data = std::move(x_rgb);
  if (cfg.use_normal_branch) {
    out.normal = MultiViewLatent(batch.n_views, hw, hw, Domain::normal);
    out.normal.data = std::move(x_nrm);
  }
  return out;
}

std::vector<core::Image> decode_views(const LatentCodec& codec, const MultiViewLatent& latents,
                                      int image_size) {
  const int64_t per_view =
      static_cast<int64_t>(MultiViewLatent::kChannels) * latents.h * latents.w;
  std::vector<core::Image> out;
  for (int v = 0; v < latents.n_views; ++v) {
    std::vector<double> z(latents.data.begin() + v * per_view,
                          latents.data.begin() + (v + 1) * per_view);
    out.push_back(codec.decode(z, image_size, image_size));
  }
  return out;
}

}  // namespace repose::diffusion
