#include "repose/body/lbs.hpp"

#include <cmath>
#include <stdexcept>

namespace repose::body {

std::vector<Mat4> joint_transforms(const MeshTemplate& tpl, const BodyParams& params) {
  const int j = tpl.joint_count();
  params.validate(j);
  std::vector<Mat4> world(static_cast<size_t>(j));  // A_j(theta)
  for (int k = 0; k < j; ++k) {
    const Vec3 aa(params.theta[static_cast<size_t>(3 * k)],
                  params.theta[static_cast<size_t>(3 * k + 1)],
                  params.theta[static_cast<size_t>(3 * k + 2)]);
    const Mat3 rot = rodrigues(aa);
    const Vec3 pos = tpl.joints.row(k);
    Mat4 local = Mat4::Identity();
    const int parent = tpl.parents[static_cast<size_t>(k)];
    // Local frame sits at the joint's rest position (relative to parent's).
    const Vec3 rel = parent < 0 ? pos : Vec3(pos - Vec3(tpl.joints.row(parent)));
    local.block<3, 3>(0, 0) = rot;
    local.block<3, 1>(0, 3) = rel;
    world[static_cast<size_t>(k)] =
        parent < 0 ? local : Mat4(world[static_cast<size_t>(parent)] * local);
  }
  // G_j = A_j(theta) * A_j(0)^-1 with A_j(0) a pure translation to the rest
  // joint position.
  std::vector<Mat4> g(static_cast<size_t>(j));
  for (int k = 0; k < j; ++k) {
    Mat4 rest_inv = Mat4::Identity();
    rest_inv.block<3, 1>(0, 3) = -Vec3(tpl.joints.row(k));
    g[static_cast<size_t>(k)] = world[static_cast<size_t>(k)] * rest_inv;
  }
  return g;
}

PosedBody forward_lbs(const MeshTemplate& tpl, const BodyParams& params) {
  const int v = tpl.vertex_count();
  const int j = tpl.joint_count();
  PosedBody out;
  out.joint_global = joint_transforms(tpl, params);
  out.vertex_tf.resize(static_cast<size_t>(v));
  out.vertex_tf_inv.resize(static_cast<size_t>(v));
  out.vertices.resize(v, 3);

  for (int i = 0; i < v; ++i) {
    Mat4 m = Mat4::Zero();
    for (int k = 0; k < j; ++k) {
      const double w = tpl.skin_weights(i, k);
      if (w != 0.0) m += w * out.joint_global[static_cast<size_t>(k)];
    }
    out.vertex_tf[static_cast<size_t>(i)] = m;
    out.vertex_tf_inv[static_cast<size_t>(i)] = m.inverse();

    // shaped rest position
    Vec3 rest = tpl.vertices.row(i);
    for (int b = 0; b < kShapeDims; ++b)
      rest += params.beta[static_cast<size_t>(b)] *
              Vec3(tpl.shape_basis[static_cast<size_t>(b)].row(i));
    const Eigen::Vector4d posed = m * rest.homogeneous();
    out.vertices.row(i) = posed.head<3>();
  }
  return out;
}

// ---- nearest vertex ----------------------------------------------------------

VertexGrid::VertexGrid(const Points& verts, double radius)
    : verts_(verts), radius_(radius) {
  if (radius <= 0) throw std::invalid_argument("VertexGrid: radius must be positive");
  if (verts.rows() == 0) throw std::invalid_argument("VertexGrid: no vertices");
  Vec3 lo = verts.colwise().minCoeff();
  Vec3 hi = verts.colwise().maxCoeff();
  origin_ = lo;
  nx_ = static_cast<int>(std::floor((hi.x() - lo.x()) / radius_)) + 1;
  ny_ = static_cast<int>(std::floor((hi.y() - lo.y()) / radius_)) + 1;
  nz_ = static_cast<int>(std::floor((hi.z() - lo.z()) / radius_)) + 1;
  cells_.resize(static_cast<size_t>(nx_) * ny_ * nz_);
  for (int i = 0; i < verts.rows(); ++i) {
    const Vec3 p = verts.row(i);
    const int cx = static_cast<int>(std::floor((p.x() - origin_.x()) / radius_));
    const int cy = static_cast<int>(std::floor((p.y() - origin_.y()) / radius_));
    const int cz = static_cast<int>(std::floor((p.z() - origin_.z()) / radius_));
    cells_[static_cast<size_t>(cell_key(cx, cy, cz))].push_back(i);
  }
}

int64_t VertexGrid::cell_key(int cx, int cy, int cz) const {
  return (static_cast<int64_t>(cz) * ny_ + cy) * nx_ + cx;
}

std::optional<std::pair<int, double>> VertexGrid::nearest(const Vec3& x) const {
  // Cell size equals the query radius, so a ball of that radius only touches
  // the 3x3x3 block around the query's cell.
  const int cx = static_cast<int>(std::floor((x.x() - origin_.x()) / radius_));
  const int cy = static_cast<int>(std::floor((x.y() - origin_.y()) / radius_));
  const int cz = static_cast<int>(std::floor((x.z() - origin_.z()) / radius_));
  const double r2 = radius_ * radius_;
  int best = -1;
  double best_d2 = 0;
  // Lexicographic (d2, index) minimum over all candidates within radius;
  // identical to the brute-force scan (ties resolve to the lowest index).
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int gx = cx + dx, gy = cy + dy, gz = cz + dz;
        if (gx < 0 || gx >= nx_ || gy < 0 || gy >= ny_ || gz < 0 || gz >= nz_) continue;
        for (int i : cells_[static_cast<size_t>(cell_key(gx, gy, gz))]) {
          const double d2 = (Vec3(verts_.row(i)) - x).squaredNorm();
          if (d2 > r2) continue;
          if (best == -1 || d2 < best_d2 || (d2 == best_d2 && i < best)) {
            best = i;
            best_d2 = d2;
          }
        }
      }
  if (best < 0) return std::nullopt;
  return std::make_pair(best, std::sqrt(best_d2));
}

std::optional<std::pair<int, double>> nearest_vertex_bruteforce(const Points& verts,
                                                                const Vec3& x,
                                                                double radius) {
  const double r2 = radius * radius;
  int best = -1;
  double best_d2 = 0;
  for (int i = 0; i < verts.rows(); ++i) {
    const double d2 = (Vec3(verts.row(i)) - x).squaredNorm();
    if (d2 > r2) continue;
    if (best == -1 || d2 < best_d2) {  // ascending i: ties keep the lowest index
      best = i;
      best_d2 = d2;
    }
  }
  if (best < 0) return std::nullopt;
  return std::make_pair(best, std::sqrt(best_d2));
}

std::vector<CanonicalPoint> inverse_lbs(const MeshTemplate& tpl, const BodyParams& params,
                                        const PosedBody& posed, const VertexGrid& grid,
                                        const std::vector<Vec3>& x_world) {
  params.validate(tpl.joint_count());
  std::vector<CanonicalPoint> out(x_world.size());
  for (size_t q = 0; q < x_world.size(); ++q) {
    const auto hit = grid.nearest(x_world[q]);
    if (!hit) continue;  // stays invalid; callers exclude the point downstream
    const int vi = hit->first;
    CanonicalPoint& cp = out[q];
    cp.nearest_vertex = vi;
    cp.distance = hit->second;
    cp.valid = true;
    const Eigen::Vector4d rest =
        posed.vertex_tf_inv[static_cast<size_t>(vi)] * x_world[q].homogeneous();
    // remove the borrowed vertex's shape displacement to reach the canonical
    // (template) space that the NeRF is conditioned in
    Vec3 x_rest = rest.head<3>();
    for (int b = 0; b < kShapeDims; ++b)
      x_rest -= params.beta[static_cast<size_t>(b)] *
                Vec3(tpl.shape_basis[static_cast<size_t>(b)].row(vi));
    cp.x_canonical = x_rest;
  }
  return out;
}

}  // namespace repose::body
