#pragma once

// Articulated body types. World frame is y-up, meters. The skeleton is a
// kinematic chain of J joints; poses are per-joint axis-angle rotations
// (3J values) and shape is a 10-dim coefficient vector over per-vertex
// displacement fields.

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace repose::body {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Mat4 = Eigen::Matrix4d;
// Row layout matches the rest of the codebase (row-major, like images).
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Faces = Eigen::Matrix<int32_t, Eigen::Dynamic, 3, Eigen::RowMajor>;
using UvCoords = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

inline constexpr int kShapeDims = 10;

struct MeshTemplate {
  Points vertices;                     // [V,3] rest positions (canonical)
  Faces faces;                         // [F,3] indices
  Eigen::MatrixXd skin_weights;        // [V,J] rows sum to 1, non-negative
  UvCoords uv;                         // [V,2] atlas coords in [0,1)
  std::vector<int32_t> part_labels;    // [V] in [0,P)
  std::vector<Points> shape_basis;     // kShapeDims fields of [V,3]
  Points joints;                       // [J,3] rest joint positions
  std::vector<int32_t> parents;        // [J], parents[0] == -1
  int part_count = 0;

  int vertex_count() const { return static_cast<int>(vertices.rows()); }
  int face_count() const { return static_cast<int>(faces.rows()); }
  int joint_count() const { return static_cast<int>(joints.rows()); }

  // Throws std::invalid_argument on any violated structural invariant
  // (weight rows, label ranges, face indices, parent ordering).
  void validate() const;
};

struct BodyParams {
  std::vector<double> theta;  // [3J] axis-angle per joint
  std::vector<double> beta;   // [kShapeDims]

  static BodyParams rest(int joint_count);
  void validate(int joint_count) const;
};

struct PosedBody {
  Points vertices;                  // [V,3] posed positions
  std::vector<Mat4> joint_global;   // G_j = A_j(theta) * A_j(0)^-1
  std::vector<Mat4> vertex_tf;      // M_v = sum_j w_vj G_j
  std::vector<Mat4> vertex_tf_inv;  // M_v^-1
};

struct Camera {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  Mat3 R = Mat3::Identity();  // world -> camera rotation
  Vec3 t = Vec3::Zero();      // world -> camera translation

  // Throws if R is not orthonormal (1e-9) or intrinsics are degenerate.
  void validate() const;
  Vec3 to_camera(const Vec3& x_world) const { return R * x_world + t; }
  // Projects a camera-space point (z > 0) to pixel coordinates.
  Eigen::Vector2d project(const Vec3& x_cam) const {
    return {fx * x_cam.x() / x_cam.z() + cx, fy * x_cam.y() / x_cam.z() + cy};
  }
  Vec3 center() const { return -R.transpose() * t; }
};

// Axis-angle (Rodrigues) rotation.
Mat3 rodrigues(const Vec3& axis_angle);

// ---- text serialization (9 significant digits) -------------------------------
// cameras.txt: one line per view:
//   view_id fx fy cx cy width height r00..r22 t0 t1 t2
void save_cameras(const std::string& path, const std::vector<Camera>& cams);
std::vector<Camera> load_cameras(const std::string& path);
// body_params.txt: one line per frame: frame_id theta[3J] beta[10]
void save_body_params(const std::string& path, const std::vector<BodyParams>& frames,
                      int joint_count);
std::vector<BodyParams> load_body_params(const std::string& path, int joint_count);

}  // namespace repose::body
