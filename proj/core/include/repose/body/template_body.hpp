#pragma once

// Procedural body template: 8 capsule parts (pelvis, spine, chest, head,
// two arms, two legs), one UV island per part, smooth skin weights, and an
// orthonormalized 10-field shape displacement basis. Construction is fully
// deterministic.

#include <string>

#include "repose/body/types.hpp"

namespace repose::body {

inline constexpr int kJointCount = 8;
inline constexpr int kPartCount = 8;

enum Joint : int {
  kPelvis = 0,
  kSpine = 1,
  kChest = 2,
  kHead = 3,
  kLeftArm = 4,
  kRightArm = 5,
  kLeftLeg = 6,
  kRightLeg = 7,
};

MeshTemplate make_template();

// Named-array archive round trip (entries: vertices, faces, skin_weights,
// uv, part_labels, shape_basis, joints, parents).
void save_template(const std::string& path, const MeshTemplate& tpl);
MeshTemplate load_template(const std::string& path);

}  // namespace repose::body
