#pragma once

// Linear blend skinning, forward and inverse. Inverse skinning borrows the
// blended transform of the nearest posed vertex (nearest-neighbor weight
// borrowing); queries farther than `radius` from every vertex are invalid.

#include <optional>

#include "repose/body/types.hpp"

namespace repose::body {

// Kinematic chain: A_j(theta) chains per-joint rotations about the rest
// joint positions; G_j = A_j(theta) * A_j(0)^-1.
std::vector<Mat4> joint_transforms(const MeshTemplate& tpl, const BodyParams& params);

PosedBody forward_lbs(const MeshTemplate& tpl, const BodyParams& params);

struct CanonicalPoint {
  Vec3 x_canonical = Vec3::Zero();  // rest-space position (shape removed)
  bool valid = false;
  int nearest_vertex = -1;
  double distance = 0.0;  // to the nearest posed vertex
};

// Uniform hash grid over posed vertices; exact nearest-neighbor semantics
// (same answer as a brute-force scan, ties to the lowest vertex index) for
// queries within `radius` (cell size == radius).
class VertexGrid {
 public:
  VertexGrid(const Points& verts, double radius);
  // Nearest vertex within radius, or nullopt. Exact, deterministic.
  std::optional<std::pair<int, double>> nearest(const Vec3& x) const;
  double radius() const { return radius_; }

 private:
  int64_t cell_key(int cx, int cy, int cz) const;
  const Points verts_;
  double radius_;
  Vec3 origin_;
  int nx_ = 0, ny_ = 0, nz_ = 0;
  std::vector<std::vector<int>> cells_;
};

inline constexpr double kDefaultInverseRadius = 0.05;  // meters

// Inverse LBS for a batch of world points under one pose.
// posed must come from forward_lbs(tpl, params).
std::vector<CanonicalPoint> inverse_lbs(const MeshTemplate& tpl, const BodyParams& params,
                                        const PosedBody& posed, const VertexGrid& grid,
                                        const std::vector<Vec3>& x_world);

// Brute-force reference used by tests (identical semantics, O(V) per query).
std::optional<std::pair<int, double>> nearest_vertex_bruteforce(const Points& verts,
                                                                const Vec3& x, double radius);

}  // namespace repose::body
