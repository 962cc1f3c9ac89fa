#pragma once

// Named-array binary container used for the mesh template and checkpoints.
// Layout (little-endian):
//   magic "RPARCH01"
//   u64 entry_count
//   entries, sorted by name:
//     u32 name_len, name bytes
//     u8  dtype (0=f64, 1=i64, 2=u8)
//     u8  ndim, u64 dims[ndim]
//     raw payload

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace repose::core {

class Archive {
 public:
  enum class DType : uint8_t { F64 = 0, I64 = 1, U8 = 2 };

  struct Entry {
    DType dtype = DType::F64;
    std::vector<int64_t> dims;
    std::vector<double> f64;
    std::vector<int64_t> i64;
    std::vector<uint8_t> u8;
    int64_t count() const;
  };

  void put_f64(const std::string& name, std::vector<int64_t> dims, std::vector<double> data);
  void put_i64(const std::string& name, std::vector<int64_t> dims, std::vector<int64_t> data);
  void put_u8(const std::string& name, std::vector<int64_t> dims, std::vector<uint8_t> data);
  void put_string(const std::string& name, const std::string& s);
  void put_scalar(const std::string& name, double v) { put_f64(name, {1}, {v}); }
  void put_scalar_i64(const std::string& name, int64_t v) { put_i64(name, {1}, {v}); }

  bool has(const std::string& name) const { return entries_.count(name) > 0; }
  const Entry& get(const std::string& name) const;
  const std::vector<double>& get_f64(const std::string& name) const;
  const std::vector<int64_t>& get_i64(const std::string& name) const;
  std::string get_string(const std::string& name) const;
  double get_scalar(const std::string& name) const;
  int64_t get_scalar_i64(const std::string& name) const;
  const std::vector<int64_t>& dims(const std::string& name) const;
  std::vector<std::string> names() const;
  size_t size() const { return entries_.size(); }

  void save(const std::string& path) const;
  static Archive load(const std::string& path);

 private:
  std::map<std::string, Entry> entries_;  // sorted => deterministic bytes
};

}  // namespace repose::core
