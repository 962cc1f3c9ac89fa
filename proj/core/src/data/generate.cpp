#include "repose/data/generate.hpp"

#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "repose/body/lbs.hpp"
#include "repose/core/random.hpp"
#include "repose/data/dataset.hpp"

namespace repose::data {

namespace {

namespace fs = std::filesystem;

constexpr double kPi = 3.14159265358979323846;

// Limbs swing widest; the trunk and head stay subtle so the silhouette
// keeps a recognizable person shape across the whole sequence.
double joint_amplitude(int joint) {
  switch (joint) {
    case body::kLeftArm:
    case body::kRightArm:
      return 0.6;
    case body::kLeftLeg:
    case body::kRightLeg:
      return 0.5;
    case body::kHead:
      return 0.3;
    default:
      return 0.2;
  }
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
}

}  // namespace

void GenerateConfig::validate() const {
  if (root.empty()) throw std::invalid_argument("GenerateConfig: root path is empty");
  if (n_train < 1 || n_test < 1)
    throw std::invalid_argument("GenerateConfig: both splits need at least one subject");
  if (n_views < 2)
    throw std::invalid_argument("GenerateConfig: need the reference view plus a target view");
  if (n_frames < 2)
    throw std::invalid_argument("GenerateConfig: need the reference frame plus a target frame");
  if (image_size < 8) throw std::invalid_argument("GenerateConfig: image_size too small");
  if (texture_size < 8) throw std::invalid_argument("GenerateConfig: texture_size too small");
  if (camera_distance <= 0)
    throw std::invalid_argument("GenerateConfig: camera_distance must be positive");
}

SubjectSpec make_subject_spec(const GenerateConfig& cfg, int subject_id) {
  cfg.validate();
  if (subject_id < 0) throw std::invalid_argument("make_subject_spec: negative subject id");
  core::Rng rng = core::Rng(cfg.seed).fork(0x646174).fork(static_cast<uint64_t>(subject_id));
  SubjectSpec spec;

  // Shape: one beta for the whole sequence.
  std::vector<double> beta(body::kShapeDims);
  for (auto& b : beta) b = rng.uniform(-1.0, 1.0);

  // Poses: frame 0 rests; later frames swing each joint axis sinusoidally
  // with a per-subject amplitude and phase.
  const int j = body::kJointCount;
  std::vector<double> amp(static_cast<size_t>(3 * j)), phase(static_cast<size_t>(3 * j));
  for (int q = 0; q < 3 * j; ++q) {
    amp[static_cast<size_t>(q)] = joint_amplitude(q / 3) * rng.uniform(0.3, 1.0);
    phase[static_cast<size_t>(q)] = rng.uniform(0.0, 2.0 * kPi);
  }
  for (int f = 0; f < cfg.n_frames; ++f) {
    body::BodyParams p = body::BodyParams::rest(j);
    p.beta = beta;
    if (f > 0)
      for (int q = 0; q < 3 * j; ++q)
        p.theta[static_cast<size_t>(q)] =
            amp[static_cast<size_t>(q)] *
            std::sin(2.0 * kPi * f / cfg.n_frames + phase[static_cast<size_t>(q)]);
    spec.frames.push_back(std::move(p));
  }

  // Camera ring: view 0 faces the subject, the rest spread evenly around +y.
  for (int v = 0; v < cfg.n_views; ++v) {
    const double yaw = 2.0 * kPi * v / cfg.n_views;
    body::Mat3 spin;
    spin = Eigen::AngleAxisd(yaw, body::Vec3::UnitY());
    body::Camera c;
    c.width = c.height = cfg.image_size;
    c.fx = c.fy = cfg.image_size;
    c.cx = c.cy = cfg.image_size / 2.0;
    c.R = body::Mat3(body::Vec3(1, -1, -1).asDiagonal()) * spin.transpose();
    c.t = -c.R * (spin * body::Vec3(0, 0, cfg.camera_distance));
    c.validate();
    spec.cameras.push_back(c);
  }

  // Texture: smooth per-channel color waves over the atlas, valid everywhere
  // (so it is already a completed texture).
  spec.texture = body::UVTexture(cfg.texture_size);
  double wave[3][3];  // per channel: u frequency, v frequency, phase
  for (auto& ch : wave) {
    ch[0] = rng.uniform(0.5, 2.5);
    ch[1] = rng.uniform(0.5, 2.5);
    ch[2] = rng.uniform(0.0, 2.0 * kPi);
  }
  for (int ty = 0; ty < cfg.texture_size; ++ty)
    for (int tx = 0; tx < cfg.texture_size; ++tx) {
      const double u = (tx + 0.5) / cfg.texture_size;
      const double v = (ty + 0.5) / cfg.texture_size;
      for (int k = 0; k < 3; ++k)
        spec.texture.color.at(ty, tx, k) =
            0.5 + 0.35 * std::sin(2.0 * kPi * (wave[k][0] * u + wave[k][1] * v) + wave[k][2]);
      spec.texture.valid.at(ty, tx) = 1.0;
    }
  return spec;
}

body::ConditionMaps render_record(const body::MeshTemplate& tpl, const SubjectSpec& spec,
                                  int view, int frame) {
  if (view < 0 || view >= static_cast<int>(spec.cameras.size()))
    throw std::invalid_argument("render_record: view out of range");
  if (frame < 0 || frame >= static_cast<int>(spec.frames.size()))
    throw std::invalid_argument("render_record: frame out of range");
  const body::PosedBody posed = body::forward_lbs(tpl, spec.frames[static_cast<size_t>(frame)]);
  return body::rasterize_condition_maps(tpl, posed, spec.cameras[static_cast<size_t>(view)],
                                        spec.texture);
}

void generate_subject(const GenerateConfig& cfg, int subject_id) {
  const body::MeshTemplate tpl = body::make_template();
  const SubjectSpec spec = make_subject_spec(cfg, subject_id);
  const fs::path dir = subject_dir(cfg.root, subject_id);
  make_dirs(dir);
  for (int v = 0; v < cfg.n_views; ++v) {
    make_dirs(fs::path(record_path(cfg.root, subject_id, v, 0, "img")).parent_path());
    for (int f = 0; f < cfg.n_frames; ++f) {
      const body::ConditionMaps maps = render_record(tpl, spec, v, f);
      core::write_image(record_path(cfg.root, subject_id, v, f, "img"), maps.texture);
      core::write_image(record_path(cfg.root, subject_id, v, f, "mask"), maps.mask);
      core::write_image(record_path(cfg.root, subject_id, v, f, "normal"), maps.normal);
    }
  }
  body::save_cameras((dir / "cameras.txt").string(), spec.cameras);
  body::save_body_params((dir / "body_params.txt").string(), spec.frames, body::kJointCount);
}

void generate_dataset(const GenerateConfig& cfg) {
  cfg.validate();
  make_dirs(cfg.root);
  DatasetManifest train, test;
  train.root = test.root = cfg.root;
  train.split = "train";
  test.split = "test";
  train.resolution = test.resolution = cfg.image_size;
  train.seed = test.seed = cfg.seed;
  for (int i = 0; i < cfg.n_train; ++i) train.subjects.push_back(i);
  for (int i = 0; i < cfg.n_test; ++i) test.subjects.push_back(cfg.n_train + i);
  for (const int id : train.subjects) generate_subject(cfg, id);
  for (const int id : test.subjects) generate_subject(cfg, id);
  check_disjoint(train, test);
  train.save(manifest_path(cfg.root, "train"));
  test.save(manifest_path(cfg.root, "test"));
}

}  // namespace repose::data
