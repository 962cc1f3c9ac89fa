#include "repose/core/archive.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace repose::core {

namespace {
constexpr char kMagic[8] = {'R', 'P', 'A', 'R', 'C', 'H', '0', '1'};

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("archive: truncated file");
  return v;
}

int64_t dims_count(const std::vector<int64_t>& dims) {
  int64_t n = 1;
  for (int64_t d : dims) {
    if (d < 0) throw std::invalid_argument("archive: negative dim");
    n *= d;
  }
  return n;
}
}  // namespace

int64_t Archive::Entry::count() const { return dims_count(dims); }

void Archive::put_f64(const std::string& name, std::vector<int64_t> dims,
                      std::vector<double> data) {
  if (dims_count(dims) != static_cast<int64_t>(data.size()))
    throw std::invalid_argument("archive: dims/data mismatch for " + name);
  Entry e;
  e.dtype = DType::F64;
  e.dims = std::move(dims);
  e.f64 = std::move(data);
  entries_[name] = std::move(e);
}

void Archive::put_i64(const std::string& name, std::vector<int64_t> dims,
                      std::vector<int64_t> data) {
  if (dims_count(dims) != static_cast<int64_t>(data.size()))
    throw std::invalid_argument("archive: dims/data mismatch for " + name);
  Entry e;
  e.dtype = DType::I64;
  e.dims = std::move(dims);
  e.i64 = std::move(data);
  entries_[name] = std::move(e);
}

void Archive::put_u8(const std::string& name, std::vector<int64_t> dims,
                     std::vector<uint8_t> data) {
  if (dims_count(dims) != static_cast<int64_t>(data.size()))
    throw std::invalid_argument("archive: dims/data mismatch for " + name);
  Entry e;
  e.dtype = DType::U8;
  e.dims = std::move(dims);
  e.u8 = std::move(data);
  entries_[name] = std::move(e);
}

void Archive::put_string(const std::string& name, const std::string& s) {
  std::vector<uint8_t> bytes(s.begin(), s.end());
  const auto n = static_cast<int64_t>(bytes.size());
  put_u8(name, {n}, std::move(bytes));
}

const Archive::Entry& Archive::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::runtime_error("archive: no entry '" + name + "'");
  return it->second;
}

const std::vector<double>& Archive::get_f64(const std::string& name) const {
  const Entry& e = get(name);
  if (e.dtype != DType::F64) throw std::runtime_error("archive: '" + name + "' is not f64");
  return e.f64;
}

const std::vector<int64_t>& Archive::get_i64(const std::string& name) const {
  const Entry& e = get(name);
  if (e.dtype != DType::I64) throw std::runtime_error("archive: '" + name + "' is not i64");
  return e.i64;
}

std::string Archive::get_string(const std::string& name) const {
  const Entry& e = get(name);
  if (e.dtype != DType::U8) throw std::runtime_error("archive: '" + name + "' is not u8");
  return std::string(e.u8.begin(), e.u8.end());
}

double Archive::get_scalar(const std::string& name) const {
  const auto& v = get_f64(name);
  if (v.size() != 1) throw std::runtime_error("archive: '" + name + "' is not scalar");
  return v[0];
}

int64_t Archive::get_scalar_i64(const std::string& name) const {
  const auto& v = get_i64(name);
  if (v.size() != 1) throw std::runtime_error("archive: '" + name + "' is not scalar");
  return v[0];
}

const std::vector<int64_t>& Archive::dims(const std::string& name) const {
  return get(name).dims;
}

std::vector<std::string> Archive::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [k, _] : entries_) out.push_back(k);
  return out;
}

void Archive::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("archive: cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod<uint64_t>(out, entries_.size());
  for (const auto& [name, e] : entries_) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<uint8_t>(out, static_cast<uint8_t>(e.dtype));
    write_pod<uint8_t>(out, static_cast<uint8_t>(e.dims.size()));
    for (int64_t d : e.dims) write_pod<int64_t>(out, d);
    switch (e.dtype) {
      case DType::F64:
        out.write(reinterpret_cast<const char*>(e.f64.data()),
                  static_cast<std::streamsize>(e.f64.size() * sizeof(double)));
        break;
      case DType::I64:
        out.write(reinterpret_cast<const char*>(e.i64.data()),
                  static_cast<std::streamsize>(e.i64.size() * sizeof(int64_t)));
        break;
      case DType::U8:
        out.write(reinterpret_cast<const char*>(e.u8.data()),
                  static_cast<std::streamsize>(e.u8.size()));
        break;
    }
  }
  if (!out) throw std::runtime_error("archive: short write " + path);
}

Archive Archive::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("archive: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("archive: bad magic in " + path);
  const uint64_t count = read_pod<uint64_t>(in);
  Archive a;
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_pod<uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw std::runtime_error("archive: truncated name in " + path);
    const auto dtype = static_cast<DType>(read_pod<uint8_t>(in));
    const uint8_t ndim = read_pod<uint8_t>(in);
    std::vector<int64_t> dims(ndim);
    for (auto& d : dims) d = read_pod<int64_t>(in);
    const int64_t n = dims_count(dims);
    switch (dtype) {
      case DType::F64: {
        std::vector<double> data(static_cast<size_t>(n));
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(double)));
        if (!in) throw std::runtime_error("archive: truncated payload in " + path);
        a.put_f64(name, std::move(dims), std::move(data));
        break;
      }
      case DType::I64: {
        std::vector<int64_t> data(static_cast<size_t>(n));
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(int64_t)));
        if (!in) throw std::runtime_error("archive: truncated payload in " + path);
        a.put_i64(name, std::move(dims), std::move(data));
        break;
      }
      case DType::U8: {
        std::vector<uint8_t> data(static_cast<size_t>(n));
        in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
        if (!in) throw std::runtime_error("archive: truncated payload in " + path);
        a.put_u8(name, std::move(dims), std::move(data));
        break;
      }
      default:
        throw std::runtime_error("archive: unknown dtype in " + path);
    }
  }
  return a;
}

}  // namespace repose::core
