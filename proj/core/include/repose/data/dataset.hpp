#pragma once

// On-disk dataset ingestion. Layout under the dataset root:
//   subject_XXXX/view_YY/frame_ZZZZ.{img,mask,normal}
//   subject_XXXX/cameras.txt
//   subject_XXXX/body_params.txt
// plus manifest_train.txt / manifest_test.txt at the root. The loader crops
// a square window centered on the mask centroid, resizes to the manifest
// resolution, and remaps the camera intrinsics to match; for an already
// square image at the target size this is an exact identity.

#include <string>
#include <vector>

#include "repose/body/types.hpp"
#include "repose/core/image.hpp"

namespace repose::data {

struct DatasetManifest {
  std::string root;
  std::string split;  // "train" or "test"
  std::vector<int> subjects;
  int resolution = 64;
  uint64_t seed = 1;

  void validate() const;
  void save(const std::string& path) const;
  static DatasetManifest load(const std::string& path);
};

// Train and test subject id sets must never overlap; throws otherwise.
void check_disjoint(const DatasetManifest& train, const DatasetManifest& test);

std::string subject_dir(const std::string& root, int subject);
// kind is "img", "mask", or "normal".
std::string record_path(const std::string& root, int subject, int view, int frame,
                        const std::string& kind);
std::string manifest_path(const std::string& root, const std::string& split);

// Square crop window centered on the mask centroid, clamped to the image;
// side = min(h, w). An empty mask falls back to the geometric center.
struct CropWindow {
  int y0 = 0, x0 = 0, side = 0;
};
CropWindow centroid_window(const core::Image& mask);

// Crop + bilinear resize to out_size. binary re-thresholds at 0.5 so masks
// stay exactly {0,1} after interpolation.
core::Image apply_window(const core::Image& img, const CropWindow& w, int out_size, bool binary);

struct ViewRecord {
  int view = 0, frame = 0;
  core::Image image;   // [res,res,3] in [0,1]
  core::Image mask;    // [res,res,1] exactly {0,1}
  core::Image normal;  // [res,res,3]
  body::Camera camera;
  body::BodyParams body;
};

struct SequenceSample {
  int subject = 0;
  ViewRecord reference;             // view 0 at frame 0
  std::vector<ViewRecord> targets;  // (n_views - 1) x frame_count grid, view-major
  void validate() const;
};

// Assembles the reference plus every non-reference view over frames
// [frame_begin, frame_begin + frame_count). The defaults read a generator
// subject as 1 reference + 4 views x 5 frames = 20 targets.
SequenceSample load_sequence(const DatasetManifest& m, int subject, int frame_begin = 1,
                             int frame_count = 5);

}  // namespace repose::data
