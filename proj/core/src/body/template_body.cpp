#include "repose/body/template_body.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "repose/core/archive.hpp"

namespace repose::body {

namespace {
constexpr double kPi = std::numbers::pi;

struct PartSpec {
  int joint;        // joint whose rotation owns this part
  int blend_joint;  // joint to blend toward at the proximal end (-1: none)
  Vec3 a, b;        // axis segment, a = proximal end (near joint)
  double radius;
  int rings;    // segments along the axis
  int sides;    // segments around the axis
};

// Builds one capped tube along segment a->b. Vertices are appended; the part
// owns a rectangular UV island. Returns first appended vertex index.
void build_part(const PartSpec& ps, int part_id, double u0, double v0, double du,
                double dv, std::vector<double>& verts, std::vector<int32_t>& faces,
                std::vector<double>& uvs, std::vector<int32_t>& labels,
                std::vector<std::pair<int, double>>& axis_s) {
  const Vec3 axis = ps.b - ps.a;
  const double len = axis.norm();
  if (len <= 0) throw std::logic_error("degenerate part axis");
  const Vec3 n = axis / len;
  // stable orthonormal frame around the axis
  Vec3 ref = std::fabs(n.y()) < 0.9 ? Vec3(0, 1, 0) : Vec3(1, 0, 0);
  const Vec3 e1 = (ref - ref.dot(n) * n).normalized();
  const Vec3 e2 = n.cross(e1);

  const int base = static_cast<int>(verts.size() / 3);
  const int rows = ps.rings + 1 + 4;  // tube rows + 2 cap rows per end
  // rows: cap rows shrink the radius toward the poles (hemispherical caps)
  // s parameter 0..1 along axis used for skinning blends
  auto push_vertex = [&](const Vec3& p, double u, double v, double s) {
    verts.push_back(p.x());
    verts.push_back(p.y());
    verts.push_back(p.z());
    uvs.push_back(u);
    uvs.push_back(v);
    labels.push_back(static_cast<int32_t>(part_id));
    axis_s.emplace_back(ps.joint, 0.0);
    axis_s.back().second = s;
  };

  // Row layout (i = 0..rows-1):
  //  i=0,1: proximal cap rings; i=2..rings+2: tube rings; i=rings+3, rings+4: distal cap
  const int tube0 = 2, tube1 = ps.rings + 2;
  for (int i = 0; i < rows; ++i) {
    double s, r;
    if (i < tube0) {  // proximal cap
      const double cs = (i + 1) / static_cast<double>(tube0 + 1);  // 1/3, 2/3
      r = ps.radius * std::sin(cs * kPi / 2);
      s = -(ps.radius / len) * std::cos(cs * kPi / 2);
    } else if (i <= tube1) {
      s = (i - tube0) / static_cast<double>(ps.rings);
      r = ps.radius;
    } else {  // distal cap
      const double cs = (i - tube1) / static_cast<double>(tube0 + 1);
      r = ps.radius * std::cos(cs * kPi / 2);
      s = 1.0 + (ps.radius / len) * std::sin(cs * kPi / 2);
    }
    const Vec3 c = ps.a + s * len * n;
    for (int j = 0; j < ps.sides; ++j) {
      const double phi = 2 * kPi * j / ps.sides;
      const Vec3 p = c + r * (std::cos(phi) * e1 + std::sin(phi) * e2);
      const double u = u0 + du * (j / static_cast<double>(ps.sides - 1 + 1e-9));
      const double v = v0 + dv * ((i + 0.5) / rows);
      push_vertex(p, u, v, std::clamp(s, 0.0, 1.0));
    }
  }
  // pole vertices
  push_vertex(ps.a - ps.radius * n, u0 + du * 0.5, v0 + dv * 0.02, 0.0);
  push_vertex(ps.b + ps.radius * n, u0 + du * 0.5, v0 + dv * 0.98, 1.0);
  const int pole_a = base + rows * ps.sides;
  const int pole_b = pole_a + 1;

  auto quad = [&](int a, int b, int c, int d) {
    faces.push_back(a);
    faces.push_back(b);
    faces.push_back(c);
    faces.push_back(a);
    faces.push_back(c);
    faces.push_back(d);
  };
  for (int i = 0; i + 1 < rows; ++i)
    for (int j = 0; j < ps.sides; ++j) {
      const int jn = (j + 1) % ps.sides;
      quad(base + i * ps.sides + j, base + i * ps.sides + jn,
           base + (i + 1) * ps.sides + jn, base + (i + 1) * ps.sides + j);
    }
  for (int j = 0; j < ps.sides; ++j) {
    const int jn = (j + 1) % ps.sides;
    faces.push_back(pole_a);
    faces.push_back(base + jn);
    faces.push_back(base + j);
    faces.push_back(pole_b);
    faces.push_back(base + (rows - 1) * ps.sides + j);
    faces.push_back(base + (rows - 1) * ps.sides + jn);
  }
}
}  // namespace

MeshTemplate make_template() {
  MeshTemplate tpl;
  tpl.part_count = kPartCount;
  tpl.parents = {-1, 0, 1, 2, 2, 2, 0, 0};

  tpl.joints.resize(kJointCount, 3);
  tpl.joints.row(kPelvis) << 0.0, 0.0, 0.0;
  tpl.joints.row(kSpine) << 0.0, 0.15, 0.0;
  tpl.joints.row(kChest) << 0.0, 0.33, 0.0;
  tpl.joints.row(kHead) << 0.0, 0.54, 0.0;
  tpl.joints.row(kLeftArm) << 0.17, 0.47, 0.0;
  tpl.joints.row(kRightArm) << -0.17, 0.47, 0.0;
  tpl.joints.row(kLeftLeg) << 0.095, -0.045, 0.0;
  tpl.joints.row(kRightLeg) << -0.095, -0.045, 0.0;

  // part axis segments; proximal end sits at (or near) the owning joint
  const std::vector<PartSpec> parts = {
      {kPelvis, -1, {0.0, -0.03, 0.0}, {0.0, 0.15, 0.0}, 0.093, 4, 10},
      {kSpine, kPelvis, {0.0, 0.15, 0.0}, {0.0, 0.33, 0.0}, 0.088, 4, 10},
      {kChest, kSpine, {0.0, 0.33, 0.0}, {0.0, 0.512, 0.0}, 0.097, 4, 10},
      {kHead, kChest, {0.0, 0.555, 0.0}, {0.0, 0.695, 0.0}, 0.062, 4, 10},
      {kLeftArm, kChest, {0.185, 0.47, 0.0}, {0.50, 0.47, 0.0}, 0.041, 6, 8},
      {kRightArm, kChest, {-0.185, 0.47, 0.0}, {-0.50, 0.47, 0.0}, 0.041, 6, 8},
      {kLeftLeg, kPelvis, {0.095, -0.06, 0.0}, {0.095, -0.72, 0.0}, 0.056, 8, 8},
      {kRightLeg, kPelvis, {-0.095, -0.06, 0.0}, {-0.095, -0.72, 0.0}, 0.056, 8, 8},
  };

  std::vector<double> verts, uvs;
  std::vector<int32_t> faces, labels;
  std::vector<std::pair<int, double>> axis_s;  // (owning joint, s along bone)
  for (int k = 0; k < kPartCount; ++k) {
    // 4x2 atlas of UV islands with a small margin against bleed
    const double margin = 0.012;
    const double u0 = (k % 4) * 0.25 + margin;
    const double v0 = (k / 4) * 0.5 + margin;
    build_part(parts[static_cast<size_t>(k)], k, u0, v0, 0.25 - 2 * margin,
               0.5 - 2 * margin, verts, faces, uvs, labels, axis_s);
  }

  const int v = static_cast<int>(verts.size() / 3);
  const int f = static_cast<int>(faces.size() / 3);
  tpl.vertices = Eigen::Map<Points>(verts.data(), v, 3);
  tpl.faces = Eigen::Map<Faces>(faces.data(), f, 3);
  tpl.uv = Eigen::Map<UvCoords>(uvs.data(), v, 2);
  tpl.part_labels = std::move(labels);

  // Skin weights: each part's vertices weight its owning joint, blending
  // toward the parent-side joint over the proximal quarter of the bone.
  tpl.skin_weights = Eigen::MatrixXd::Zero(v, kJointCount);
  for (int i = 0; i < v; ++i) {
    const int part = tpl.part_labels[static_cast<size_t>(i)];
    const auto& ps = parts[static_cast<size_t>(part)];
    const double s = axis_s[static_cast<size_t>(i)].second;
    if (ps.blend_joint < 0) {
      tpl.skin_weights(i, ps.joint) = 1.0;
      continue;
    }
    // smoothstep from 0.5 (at s=0, shared with neighbor) to 1.0 by s=0.3
    const double t = std::clamp(s / 0.3, 0.0, 1.0);
    const double smooth = t * t * (3 - 2 * t);
    const double w_own = 0.5 + 0.5 * smooth;
    tpl.skin_weights(i, ps.joint) = w_own;
    tpl.skin_weights(i, ps.blend_joint) = 1.0 - w_own;
  }

  // Shape basis: smooth analytic displacement fields, Gram-Schmidt
  // orthogonalized, then scaled to 1 cm RMS per unit coefficient.
  const double y_lo = -0.78, y_hi = 0.76;
  std::vector<Points> raw;
  for (int b = 0; b < kShapeDims; ++b) {
    Points field(v, 3);
    for (int i = 0; i < v; ++i) {
      const Vec3 p = tpl.vertices.row(i);
      const double yn = (p.y() - y_lo) / (y_hi - y_lo);  // 0..1 feet->head
      Vec3 radial(p.x(), 0.0, p.z());
      const double rn = radial.norm();
      Vec3 rhat = rn > 1e-9 ? Vec3(radial / rn) : Vec3(1, 0, 0);
      Vec3 d;
      switch (b) {
        case 0: d = rhat; break;                                      // girth
        case 1: d = Vec3(0, 1, 0) * (yn - 0.5); break;                // height
        case 2: d = rhat * std::cos(2 * kPi * yn); break;             // waist
        case 3: d = rhat * std::sin(2 * kPi * yn); break;
        case 4: d = Vec3(1, 0, 0) * std::sin(kPi * yn); break;        // lean x
        case 5: d = Vec3(0, 0, 1) * std::sin(kPi * yn); break;        // lean z
        case 6: d = rhat * std::cos(4 * kPi * yn); break;
        case 7: d = Vec3(0, 1, 0) * std::sin(3 * kPi * yn); break;
        case 8: d = rhat * yn * yn; break;
        case 9: d = Vec3(std::sin(2 * kPi * yn), 0, std::cos(2 * kPi * yn)); break;
        default: d = Vec3::Zero();
      }
      field.row(i) = d;
    }
    raw.push_back(std::move(field));
  }
  tpl.shape_basis.clear();
  for (int b = 0; b < kShapeDims; ++b) {
    Points f2 = raw[static_cast<size_t>(b)];
    for (const auto& prev : tpl.shape_basis) {
      double num = 0, den = 0;
      for (int i = 0; i < v; ++i) {
        num += f2.row(i).dot(prev.row(i));
        den += prev.row(i).squaredNorm();
      }
      if (den > 0) f2 -= (num / den) * prev;
    }
    double norm2 = 0;
    for (int i = 0; i < v; ++i) norm2 += f2.row(i).squaredNorm();
    const double rms = std::sqrt(norm2 / v);
    if (rms < 1e-9)
      throw std::logic_error("shape basis field " + std::to_string(b) + " degenerate");
    f2 *= 0.01 / rms;  // 1 cm RMS displacement per unit coefficient
    tpl.shape_basis.push_back(std::move(f2));
  }

  tpl.validate();
  return tpl;
}

void save_template(const std::string& path, const MeshTemplate& tpl) {
  core::Archive a;
  const int v = tpl.vertex_count(), f = tpl.face_count(), j = tpl.joint_count();
  a.put_f64("vertices", {v, 3},
            std::vector<double>(tpl.vertices.data(), tpl.vertices.data() + v * 3));
  std::vector<int64_t> faces(static_cast<size_t>(f) * 3);
  for (int i = 0; i < f * 3; ++i) faces[static_cast<size_t>(i)] = tpl.faces.data()[i];
  a.put_i64("faces", {f, 3}, std::move(faces));
  // skin weights are row-major per vertex
  std::vector<double> w(static_cast<size_t>(v) * j);
  for (int i = 0; i < v; ++i)
    for (int k = 0; k < j; ++k) w[static_cast<size_t>(i) * j + k] = tpl.skin_weights(i, k);
  a.put_f64("skin_weights", {v, j}, std::move(w));
  a.put_f64("uv", {v, 2}, std::vector<double>(tpl.uv.data(), tpl.uv.data() + v * 2));
  std::vector<int64_t> labels(tpl.part_labels.begin(), tpl.part_labels.end());
  a.put_i64("part_labels", {v}, std::move(labels));
  std::vector<double> basis(static_cast<size_t>(kShapeDims) * v * 3);
  for (int b = 0; b < kShapeDims; ++b)
    std::copy(tpl.shape_basis[static_cast<size_t>(b)].data(),
              tpl.shape_basis[static_cast<size_t>(b)].data() + v * 3,
              basis.begin() + static_cast<int64_t>(b) * v * 3);
  a.put_f64("shape_basis", {kShapeDims, v, 3}, std::move(basis));
  a.put_f64("joints", {j, 3}, std::vector<double>(tpl.joints.data(), tpl.joints.data() + j * 3));
  std::vector<int64_t> parents(tpl.parents.begin(), tpl.parents.end());
  a.put_i64("parents", {j}, std::move(parents));
  a.put_scalar_i64("part_count", tpl.part_count);
  a.save(path);
}

MeshTemplate load_template(const std::string& path) {
  core::Archive a = core::Archive::load(path);
  MeshTemplate tpl;
  const auto& vd = a.dims("vertices");
  const int v = static_cast<int>(vd[0]);
  tpl.vertices = Eigen::Map<const Points>(a.get_f64("vertices").data(), v, 3);
  const int f = static_cast<int>(a.dims("faces")[0]);
  tpl.faces.resize(f, 3);
  {
    const auto& fd = a.get_i64("faces");
    for (int i = 0; i < f * 3; ++i) tpl.faces.data()[i] = static_cast<int32_t>(fd[static_cast<size_t>(i)]);
  }
  const int j = static_cast<int>(a.dims("skin_weights")[1]);
  tpl.skin_weights.resize(v, j);
  {
    const auto& wd = a.get_f64("skin_weights");
    for (int i = 0; i < v; ++i)
      for (int k = 0; k < j; ++k) tpl.skin_weights(i, k) = wd[static_cast<size_t>(i) * j + k];
  }
  tpl.uv = Eigen::Map<const UvCoords>(
      a.get_f64("uv").data(), v, 2);
  {
    const auto& ld = a.get_i64("part_labels");
    tpl.part_labels.assign(ld.begin(), ld.end());
  }
  {
    const auto& bd = a.get_f64("shape_basis");
    tpl.shape_basis.resize(kShapeDims);
    for (int b = 0; b < kShapeDims; ++b)
      tpl.shape_basis[static_cast<size_t>(b)] =
          Eigen::Map<const Points>(bd.data() + static_cast<int64_t>(b) * v * 3, v, 3);
  }
  tpl.joints = Eigen::Map<const Points>(a.get_f64("joints").data(), j, 3);
  {
    const auto& pd = a.get_i64("parents");
    tpl.parents.assign(pd.begin(), pd.end());
  }
  tpl.part_count = static_cast<int>(a.get_scalar_i64("part_count"));
  tpl.validate();
  return tpl;
}

}  // namespace repose::body
