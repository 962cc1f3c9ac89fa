#include "repose/body/types.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace repose::body {

void MeshTemplate::validate() const {
  const int v = vertex_count(), f = face_count(), j = joint_count();
  if (v == 0 || f == 0 || j == 0)
    throw std::invalid_argument("template: empty mesh or skeleton");
  if (skin_weights.rows() != v || skin_weights.cols() != j)
    throw std::invalid_argument("template: skin_weights shape mismatch");
  for (int i = 0; i < v; ++i) {
    double sum = 0;
    for (int k = 0; k < j; ++k) {
      const double w = skin_weights(i, k);
      if (w < 0 || !std::isfinite(w))
        throw std::invalid_argument("template: negative or non-finite skin weight at vertex " +
                                    std::to_string(i));
      sum += w;
    }
    if (std::fabs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("template: skin weights of vertex " + std::to_string(i) +
                                  " sum to " + std::to_string(sum));
  }
  if (uv.rows() != v) throw std::invalid_argument("template: uv count mismatch");
  for (int i = 0; i < v; ++i)
    if (uv(i, 0) < 0 || uv(i, 0) >= 1 || uv(i, 1) < 0 || uv(i, 1) >= 1)
      throw std::invalid_argument("template: uv out of [0,1) at vertex " + std::to_string(i));
  if (static_cast<int>(part_labels.size()) != v)
    throw std::invalid_argument("template: part label count mismatch");
  for (int i = 0; i < v; ++i)
    if (part_labels[static_cast<size_t>(i)] < 0 || part_labels[static_cast<size_t>(i)] >= part_count)
      throw std::invalid_argument("template: part label out of range at vertex " +
                                  std::to_string(i));
  for (int i = 0; i < f; ++i)
    for (int k = 0; k < 3; ++k)
      if (faces(i, k) < 0 || faces(i, k) >= v)
        throw std::invalid_argument("template: face index out of range at face " +
                                    std::to_string(i));
  if (static_cast<int>(shape_basis.size()) != kShapeDims)
    throw std::invalid_argument("template: expected " + std::to_string(kShapeDims) +
                                " shape basis fields");
  for (const auto& field : shape_basis)
    if (field.rows() != v)
      throw std::invalid_argument("template: shape basis field row mismatch");
  if (static_cast<int>(parents.size()) != j)
    throw std::invalid_argument("template: parent count mismatch");
  if (parents[0] != -1) throw std::invalid_argument("template: joint 0 must be the root");
  for (int k = 1; k < j; ++k)
    if (parents[static_cast<size_t>(k)] < 0 || parents[static_cast<size_t>(k)] >= k)
      throw std::invalid_argument("template: parents must precede children (joint " +
                                  std::to_string(k) + ")");
}

BodyParams BodyParams::rest(int joint_count) {
  BodyParams p;
  p.theta.assign(static_cast<size_t>(3 * joint_count), 0.0);
  p.beta.assign(kShapeDims, 0.0);
  return p;
}

void BodyParams::validate(int joint_count) const {
  if (static_cast<int>(theta.size()) != 3 * joint_count)
    throw std::invalid_argument("body params: theta must have length " +
                                std::to_string(3 * joint_count) + ", got " +
                                std::to_string(theta.size()));
  if (static_cast<int>(beta.size()) != kShapeDims)
    throw std::invalid_argument("body params: beta must have length " +
                                std::to_string(kShapeDims));
  for (double v : theta)
    if (!std::isfinite(v)) throw std::invalid_argument("body params: non-finite theta");
  for (double v : beta)
    if (!std::isfinite(v)) throw std::invalid_argument("body params: non-finite beta");
}

void Camera::validate() const {
  if (width <= 0 || height <= 0 || fx <= 0 || fy <= 0)
    throw std::invalid_argument("camera: degenerate intrinsics");
  const Mat3 err = R * R.transpose() - Mat3::Identity();
  if (err.cwiseAbs().maxCoeff() > 1e-9 || std::fabs(R.determinant() - 1.0) > 1e-9)
    throw std::invalid_argument("camera: rotation is not orthonormal");
}

Mat3 rodrigues(const Vec3& aa) {
  const double angle = aa.norm();
  if (angle < 1e-12) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, aa / angle).toRotationMatrix();
}

namespace {
std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}
}  // namespace

void save_cameras(const std::string& path, const std::vector<Camera>& cams) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# view_id fx fy cx cy width height r00..r22 t0 t1 t2\n";
  for (size_t i = 0; i < cams.size(); ++i) {
    const Camera& c = cams[i];
    out << i << ' ' << fmt9(c.fx) << ' ' << fmt9(c.fy) << ' ' << fmt9(c.cx) << ' '
        << fmt9(c.cy) << ' ' << c.width << ' ' << c.height;
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) out << ' ' << fmt9(c.R(r, k));
    for (int k = 0; k < 3; ++k) out << ' ' << fmt9(c.t(k));
    out << '\n';
  }
}

std::vector<Camera> load_cameras(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<Camera> cams;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    size_t id;
    Camera c;
    ss >> id >> c.fx >> c.fy >> c.cx >> c.cy >> c.width >> c.height;
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) ss >> c.R(r, k);
    for (int k = 0; k < 3; ++k) ss >> c.t(k);
    if (!ss) throw std::runtime_error("cameras: malformed line '" + line + "'");
    if (id != cams.size())
      throw std::runtime_error("cameras: view ids must be dense and ordered");
    c.validate();
    cams.push_back(c);
  }
  return cams;
}

void save_body_params(const std::string& path, const std::vector<BodyParams>& frames,
                      int joint_count) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# frame_id theta[" << 3 * joint_count << "] beta[" << kShapeDims << "]\n";
  for (size_t i = 0; i < frames.size(); ++i) {
    frames[i].validate(joint_count);
    out << i;
    for (double v : frames[i].theta) out << ' ' << fmt9(v);
    for (double v : frames[i].beta) out << ' ' << fmt9(v);
    out << '\n';
  }
}

std::vector<BodyParams> load_body_params(const std::string& path, int joint_count) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<BodyParams> frames;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    size_t id;
    ss >> id;
    BodyParams p;
    p.theta.resize(static_cast<size_t>(3 * joint_count));
    p.beta.resize(kShapeDims);
    for (auto& v : p.theta) ss >> v;
    for (auto& v : p.beta) ss >> v;
    if (!ss) throw std::runtime_error("body params: malformed line '" + line + "'");
    if (id != frames.size())
      throw std::runtime_error("body params: frame ids must be dense and ordered");
    frames.push_back(std::move(p));
  }
  return frames;
}

}  // namespace repose::body
