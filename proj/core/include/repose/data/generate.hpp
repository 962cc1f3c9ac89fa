#pragma once

// Synthetic capture rig: every subject is an instance of the procedural body
// template with its own shape coefficients, UV texture, pose sequence, and
// camera ring. Rendering reuses the condition-map rasterizer, so images,
// masks, and analytic normal maps come from one shared z-buffer per view.
// Everything is deterministic in (config, subject id).

#include <string>
#include <vector>

#include "repose/body/condition_maps.hpp"
#include "repose/body/template_body.hpp"

namespace repose::data {

struct GenerateConfig {
  std::string root;
  int n_train = 3;
  int n_test = 2;
  int n_views = 5;   // view 0 faces the subject and serves as the reference
  int n_frames = 6;  // frame 0 is the reference pose
  int image_size = 64;
  int texture_size = 64;
  double camera_distance = 2.6;
  uint64_t seed = 1;

  void validate() const;
};

// Per-subject assets before any rendering: one beta shared by all frames,
// per-frame axis-angle poses (frame 0 at rest), the camera ring (view 0
// front, the rest equally spaced around +y), and a completed UV texture.
struct SubjectSpec {
  std::vector<body::BodyParams> frames;
  std::vector<body::Camera> cameras;
  body::UVTexture texture;
};

SubjectSpec make_subject_spec(const GenerateConfig& cfg, int subject_id);

// In-memory render of one (view, frame) record; the generator writes exactly
// these maps to disk. Exposed so tests can compare pre-quantization pixels.
body::ConditionMaps render_record(const body::MeshTemplate& tpl, const SubjectSpec& spec,
                                  int view, int frame);

// Writes one subject directory (renders, masks, normal maps, cameras.txt,
// body_params.txt); byte-identical for the same (config, id).
void generate_subject(const GenerateConfig& cfg, int subject_id);

// All train + test subjects plus the two manifest files under cfg.root.
// Subject ids are assigned so the split sets are disjoint by construction.
void generate_dataset(const GenerateConfig& cfg);

}  // namespace repose::data
