#include "repose/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include "repose/body/template_body.hpp"
#include "repose/core/config.hpp"

namespace repose::data {

namespace {

std::string pad(int v, int width) {
  std::ostringstream os;
  os << std::setw(width) << std::setfill('0') << v;
  return os.str();
}

std::vector<int> parse_id_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

body::Camera remap_camera(body::Camera cam, const CropWindow& w, int out_size) {
  const double scale = static_cast<double>(out_size) / w.side;
  cam.fx *= scale;
  cam.fy *= scale;
  cam.cx = (cam.cx - w.x0) * scale;
  cam.cy = (cam.cy - w.y0) * scale;
  cam.width = cam.height = out_size;
  return cam;
}

}  // namespace

void DatasetManifest::validate() const {
  if (root.empty()) throw std::invalid_argument("manifest: empty root");
  if (split != "train" && split != "test")
    throw std::invalid_argument("manifest: split must be train or test, got '" + split + "'");
  if (subjects.empty()) throw std::invalid_argument("manifest: no subjects");
  std::set<int> dedup(subjects.begin(), subjects.end());
  if (dedup.size() != subjects.size())
    throw std::invalid_argument("manifest: duplicate subject ids");
  if (*dedup.begin() < 0) throw std::invalid_argument("manifest: negative subject id");
  if (resolution < 8) throw std::invalid_argument("manifest: resolution too small");
}

void DatasetManifest::save(const std::string& path) const {
  validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << "dataset.root = " << root << "\n";
  out << "dataset.split = " << split << "\n";
  out << "dataset.resolution = " << resolution << "\n";
  out << "dataset.seed = " << seed << "\n";
  out << "dataset.subjects = ";
  for (size_t i = 0; i < subjects.size(); ++i) out << (i ? "," : "") << subjects[i];
  out << "\n";
  if (!out) throw std::runtime_error("short write: " + path);
}

DatasetManifest DatasetManifest::load(const std::string& path) {
  const core::Config cfg = core::Config::parse_file(path);
  DatasetManifest m;
  m.root = cfg.get_str("dataset.root");
  m.split = cfg.get_str("dataset.split");
  m.resolution = cfg.get_int("dataset.resolution", m.resolution);
  m.seed = static_cast<uint64_t>(cfg.get_i64("dataset.seed", static_cast<int64_t>(m.seed)));
  m.subjects = parse_id_list(cfg.get_str("dataset.subjects"));
  m.validate();
  return m;
}

void check_disjoint(const DatasetManifest& train, const DatasetManifest& test) {
  const std::set<int> seen(train.subjects.begin(), train.subjects.end());
  for (const int s : test.subjects)
    if (seen.count(s))
      throw std::invalid_argument("train/test subject sets overlap at subject " +
                                  std::to_string(s));
}

std::string subject_dir(const std::string& root, int subject) {
  return root + "/subject_" + pad(subject, 4);
}

std::string record_path(const std::string& root, int subject, int view, int frame,
                        const std::string& kind) {
  return subject_dir(root, subject) + "/view_" + pad(view, 2) + "/frame_" + pad(frame, 4) + "." +
         kind;
}

std::string manifest_path(const std::string& root, const std::string& split) {
  return root + "/manifest_" + split + ".txt";
}

CropWindow centroid_window(const core::Image& mask) {
  if (mask.c != 1 || mask.empty())
    throw std::invalid_argument("centroid_window: want a non-empty single-channel mask");
  CropWindow w;
  w.side = std::min(mask.h, mask.w);
  double cy = (mask.h - 1) / 2.0, cx = (mask.w - 1) / 2.0;
  double sy = 0, sx = 0;
  int64_t n = 0;
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x)
      if (mask.at(y, x) > 0.5) {
        sy += y;
        sx += x;
        ++n;
      }
  if (n > 0) {
    cy = sy / static_cast<double>(n);
    cx = sx / static_cast<double>(n);
  }
  w.y0 = std::clamp(static_cast<int>(std::lround(cy - w.side / 2.0)), 0, mask.h - w.side);
  w.x0 = std::clamp(static_cast<int>(std::lround(cx - w.side / 2.0)), 0, mask.w - w.side);
  return w;
}

core::Image apply_window(const core::Image& img, const CropWindow& w, int out_size, bool binary) {
  core::Image out =
      core::resize_bilinear(core::crop(img, w.y0, w.x0, w.side, w.side), out_size, out_size);
  if (binary)
    for (auto& p : out.px) p = p > 0.5 ? 1.0 : 0.0;
  return out;
}

void SequenceSample::validate() const {
  if (targets.empty()) throw std::invalid_argument("sequence: no target records");
  const int res = reference.image.h;
  std::set<int> views, frames;
  std::set<std::pair<int, int>> grid;
  const auto check_record = [res](const ViewRecord& r, const char* who) {
    if (r.image.h != res || r.image.w != res || r.image.c != 3)
      throw std::invalid_argument(std::string("sequence: ") + who + " image resolution mismatch");
    if (r.mask.h != res || r.mask.w != res || r.mask.c != 1)
      throw std::invalid_argument(std::string("sequence: ") + who + " mask resolution mismatch");
    if (r.normal.h != res || r.normal.w != res || r.normal.c != 3)
      throw std::invalid_argument(std::string("sequence: ") + who +
                                  " normal resolution mismatch");
    for (const double p : r.mask.px)
      if (p != 0.0 && p != 1.0)
        throw std::invalid_argument(std::string("sequence: ") + who + " mask is not binary");
  };
  check_record(reference, "reference");
  for (const auto& r : targets) {
    check_record(r, "target");
    views.insert(r.view);
    frames.insert(r.frame);
    if (!grid.insert({r.view, r.frame}).second)
      throw std::invalid_argument("sequence: duplicate (view, frame) target");
  }
  if (grid.size() != views.size() * frames.size())
    throw std::invalid_argument("sequence: targets do not cover the full view x frame grid");
}

SequenceSample load_sequence(const DatasetManifest& m, int subject, int frame_begin,
                             int frame_count) {
  m.validate();
  if (std::find(m.subjects.begin(), m.subjects.end(), subject) == m.subjects.end())
    throw std::invalid_argument("subject " + std::to_string(subject) + " is not in the " +
                                m.split + " manifest");
  if (frame_begin < 0 || frame_count < 1)
    throw std::invalid_argument("load_sequence: bad frame window");

  const std::string dir = subject_dir(m.root, subject);
  const auto cameras = body::load_cameras(dir + "/cameras.txt");
  const auto bodies = body::load_body_params(dir + "/body_params.txt", body::kJointCount);
  if (cameras.size() < 2)
    throw std::runtime_error(dir + ": need the reference view plus at least one target view");
  if (static_cast<size_t>(frame_begin + frame_count) > bodies.size())
    throw std::invalid_argument("load_sequence: frame window [" + std::to_string(frame_begin) +
                                ", " + std::to_string(frame_begin + frame_count) + ") exceeds " +
                                std::to_string(bodies.size()) + " frames on disk");

  const auto load_record = [&](int v, int f) {
    ViewRecord r;
    r.view = v;
    r.frame = f;
    const core::Image img = core::read_image(record_path(m.root, subject, v, f, "img"));
    const core::Image msk = core::read_image(record_path(m.root, subject, v, f, "mask"));
    const core::Image nrm = core::read_image(record_path(m.root, subject, v, f, "normal"));
    const CropWindow w = centroid_window(msk);
    r.image = apply_window(img, w, m.resolution, false);
    r.mask = apply_window(msk, w, m.resolution, true);
    r.normal = apply_window(nrm, w, m.resolution, false);
    r.camera = remap_camera(cameras[static_cast<size_t>(v)], w, m.resolution);
    r.body = bodies[static_cast<size_t>(f)];
    return r;
  };

  SequenceSample s;
  s.subject = subject;
  s.reference = load_record(0, 0);
  for (int v = 1; v < static_cast<int>(cameras.size()); ++v)
    for (int f = frame_begin; f < frame_begin + frame_count; ++f)
      s.targets.push_back(load_record(v, f));
  s.validate();
  return s;
}

}  // namespace repose::data
