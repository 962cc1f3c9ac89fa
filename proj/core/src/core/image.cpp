#include "repose/core/image.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace repose::core {

namespace {
// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  if (tok.empty()) throw std::runtime_error("pnm: truncated header");
  return tok;
}
}  // namespace

Image read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image: " + path);
  const std::string magic = next_token(in);
  int c;
  if (magic == "P6")
    c = 3;
  else if (magic == "P5")
    c = 1;
  else
    throw std::runtime_error("unsupported pnm magic '" + magic + "' in " + path);
  const int w = std::stoi(next_token(in));
  const int h = std::stoi(next_token(in));
  const int maxval = std::stoi(next_token(in));
  if (w <= 0 || h <= 0) throw std::runtime_error("bad pnm dimensions in " + path);
  if (maxval != 255) throw std::runtime_error("pnm maxval must be 255 in " + path);
  // Exactly one whitespace byte separates header from payload; next_token
  // already consumed it.
  Image img(h, w, c);
  std::vector<unsigned char> raw(static_cast<size_t>(h) * w * c);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<size_t>(in.gcount()) != raw.size())
    throw std::runtime_error("pnm payload truncated in " + path);
  for (size_t i = 0; i < raw.size(); ++i) img.px[i] = raw[i] / 255.0;
  return img;
}

uint8_t quantize8(double v) {
  if (v < 0) v = 0;
  if (v > 1) v = 1;
  return static_cast<uint8_t>(std::lround(v * 255.0));
}

void write_image(const std::string& path, const Image& img) {
  if (img.c != 1 && img.c != 3)
    throw std::invalid_argument("write_image: only 1- or 3-channel images");
  if (img.h <= 0 || img.w <= 0) throw std::invalid_argument("write_image: empty image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write image: " + path);
  out << (img.c == 3 ? "P6" : "P5") << "\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> raw(img.px.size());
  for (size_t i = 0; i < img.px.size(); ++i) raw[i] = quantize8(img.px[i]);
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw std::runtime_error("short write: " + path);
}

Image crop(const Image& img, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || h <= 0 || w <= 0 || y0 + h > img.h || x0 + w > img.w)
    throw std::invalid_argument("crop: rectangle out of bounds");
  if (y0 == 0 && x0 == 0 && h == img.h && w == img.w) return img;
  Image out(h, w, img.c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < img.c; ++ch) out.at(y, x, ch) = img.at(y0 + y, x0 + x, ch);
  return out;
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("resize: bad size");
  if (out_h == img.h && out_w == img.w) return img;
  Image out(out_h, out_w, img.c);
  const double sy = static_cast<double>(img.h) / out_h;
  const double sx = static_cast<double>(img.w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    // Pixel-center alignment: output center maps to input center.
    double fy = (y + 0.5) * sy - 0.5;
    if (fy < 0) fy = 0;
    if (fy > img.h - 1) fy = img.h - 1;
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, img.h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      if (fx < 0) fx = 0;
      if (fx > img.w - 1) fx = img.w - 1;
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, img.w - 1);
      const double wx = fx - x0;
      for (int ch = 0; ch < img.c; ++ch) {
        const double a = img.at(y0, x0, ch) * (1 - wx) + img.at(y0, x1, ch) * wx;
        const double b = img.at(y1, x0, ch) * (1 - wx) + img.at(y1, x1, ch) * wx;
        out.at(y, x, ch) = a * (1 - wy) + b * wy;
      }
    }
  }
  return out;
}

}  // namespace repose::core
