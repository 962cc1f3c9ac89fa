#include <algorithm>
#include <filesystem>
#include <ostream>
#include <stdexcept>

#include "repose/ad/ops.hpp"
#include "repose/core/archive.hpp"
#include "repose/diffusion/refiner.hpp"

namespace repose::diffusion {
namespace {
namespace fs = std::filesystem;

constexpr const char* kCkptKind = "refiner_checkpoint";

std::vector<double> draw_normals(core::Rng& rng, int64_t n) {
  std::vector<double> out(static_cast<size_t>(n));
  for (auto& v : out) v = rng.normal();
  return out;
}

}  // namespace

bool is_frozen_in_phase2(const std::string& param_name) {
  for (const char* prefix : {"mlgf.", "enc_rgb.", "enc_nrm.", "refnet."})
    if (param_name.rfind(prefix, 0) == 0) return true;
  return false;
}

void save_refiner_checkpoint(const std::string& path, const DenoiserModel& model,
                             const ad::Adam* adam, const ad::ParamSet* adam_set, int phase,
                             int64_t step, const std::string& config_hash) {
  core::Archive a;
  a.put_string("meta/kind", kCkptKind);
  a.put_string("meta/config_hash", config_hash);
  a.put_scalar_i64("meta/phase", phase);
  a.put_scalar_i64("meta/step", step);
  a.put_scalar_i64("meta/T", model.cfg.T);
  for (const auto& [name, t] : model.params.items())
    a.put_f64("param/" + name, {t.size()}, t.value());
  if (adam != nullptr && adam_set != nullptr) {
    a.put_scalar_i64("adam/steps", adam->steps_taken());
    const auto& items = adam_set->items();
    for (size_t i = 0; i < items.size(); ++i) {
      a.put_f64("adam/m/" + items[i].first, {items[i].second.size()}, adam->moment1(i));
      a.put_f64("adam/v/" + items[i].first, {items[i].second.size()}, adam->moment2(i));
    }
  }
  a.save(path);
}

int64_t load_refiner_checkpoint(const std::string& path, DenoiserModel& model, ad::Adam* adam,
                                ad::ParamSet* adam_set, int expect_phase,
                                const std::string& expect_config_hash) {
  const core::Archive a = core::Archive::load(path);
  if (!a.has("meta/kind") || a.get_string("meta/kind") != kCkptKind)
    throw std::runtime_error("load_refiner_checkpoint: " + path + " is not a refiner checkpoint");
  const std::string stored = a.get_string("meta/config_hash");
  if (!expect_config_hash.empty() && stored != expect_config_hash)
    throw std::runtime_error("checkpoint config hash " + stored + " does not match " +
                             expect_config_hash + "; refusing to resume");
  const int64_t phase = a.get_scalar_i64("meta/phase");
  if (expect_phase != 0 && phase != expect_phase)
    throw std::runtime_error("load_refiner_checkpoint: checkpoint is phase " +
                             std::to_string(phase) + ", want phase " +
                             std::to_string(expect_phase));
  for (const auto& [name, t] : model.params.items()) {
    const auto& v = a.get_f64("param/" + name);
    if (v.size() != t.value().size())
      throw std::runtime_error("checkpoint parameter size mismatch for " + name);
    t.node().value = v;
  }
  if (adam != nullptr && adam_set != nullptr && a.has("adam/steps")) {
    adam->set_steps_taken(a.get_scalar_i64("adam/steps"));
    for (const auto& [name, t] : adam_set->items())
      adam->load_state(name, a.get_f64("adam/m/" + name), a.get_f64("adam/v/" + name));
  }
  return a.get_scalar_i64("meta/step");
}

RefinerTrainResult train_refiner(const RefinerConfig& cfg, int phase,
                                 const std::vector<RefinerScene>& scenes,
                                 const std::string& ckpt_path, const std::string& phase1_ckpt,
                                 const std::string& config_hash, std::ostream& log) {
  cfg.validate();
  if (phase != 1 && phase != 2)
    throw std::invalid_argument("train_refiner: phase must be 1 or 2");
  if (scenes.empty()) throw std::invalid_argument("train_refiner: no scenes");

  const DiffusionSchedule sched = make_schedule(cfg.T);
  DenoiserModel model(cfg, cfg.seed);
  const ProjectionCodec codec(cfg.codec_stride);
  std::vector<RefinerBatch> batches;
  batches.reserve(scenes.size());
  for (const auto& s : scenes) batches.push_back(prepare_batch(cfg, codec, s));

  ad::ParamSet trainable;
  for (const auto& [name, t] : model.params.items())
    if (phase == 1 || !is_frozen_in_phase2(name)) trainable.add(name, t);
  ad::AdamConfig acfg;
  acfg.lr = cfg.lr;
  ad::Adam adam(trainable, acfg);

  const int total = phase == 1 ? cfg.phase1_steps : cfg.phase2_steps;
  int64_t start = 0;
  if (fs::exists(ckpt_path)) {
    start = load_refiner_checkpoint(ckpt_path, model, &adam, &trainable, phase, config_hash);
  } else if (phase == 2) {
    if (phase1_ckpt.empty() || !fs::exists(phase1_ckpt))
      throw std::invalid_argument(
          "train_refiner: phase 2 needs a phase 1 checkpoint; train phase 1 first");
    load_refiner_checkpoint(phase1_ckpt, model, nullptr, nullptr, 1, config_hash);
  }
  if (phase == 2)
    for (const auto& [name, t] : model.params.items())
      if (is_frozen_in_phase2(name)) t.node().requires_grad = false;

  const bool view_attn = phase == 2;
  model.counters.reset();
  RefinerTrainResult result;
  for (int64_t step = start; step < total; ++step) {
    core::Rng rng = core::Rng(cfg.seed).fork(0x76707265).fork(static_cast<uint64_t>(step));
    const size_t scene_idx = rng.uniform_int(batches.size());
    const RefinerBatch& batch = batches[scene_idx];
    const int t = 1 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(cfg.T)));
    const int64_t n = static_cast<int64_t>(batch.x_rgb.size());
    const std::vector<double> eps_rgb = draw_normals(rng, n);
    std::vector<double> eps_nrm;
    if (cfg.use_normal_branch) eps_nrm = draw_normals(rng, n);
    const bool null_ref = cfg.ref_dropout > 0 && rng.uniform() < cfg.ref_dropout;

    model.params.zero_grad();
    const ad::Tensor loss = vpred_loss(model, batch, sched, t, eps_rgb, eps_nrm, view_attn,
                                       null_ref);
    ad::backward(loss);
    adam.step();
    result.loss_history.push_back(loss.item());

    if ((step + 1) % cfg.log_every == 0 || step + 1 == total)
      log << "phase " << phase << " step " << step + 1 << "/" << total << " vpred "
          << loss.item() << "\n";
    if ((step + 1) % cfg.ckpt_every == 0)
      save_refiner_checkpoint(ckpt_path, model, &adam, &trainable, phase, step + 1, config_hash);
  }
  save_refiner_checkpoint(ckpt_path, model, &adam, &trainable, phase,
                          std::max<int64_t>(start, total), config_hash);
  result.steps_run = total;
  result.attn = model.counters;
  return result;
}

}  // namespace repose::diffusion
