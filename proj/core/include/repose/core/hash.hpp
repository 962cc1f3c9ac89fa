#pragma once

#include <cstdint>
#include <cstring>
#include <string>

namespace repose::core {

// Incremental 64-bit FNV-1a.
class Fnv1a {
 public:
  void update(const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void update(const std::string& s) { update(s.data(), s.size()); }
  uint64_t digest() const { return h_; }

 private:
  uint64_t h_ = 0xcbf29ce484222325ULL;
};

uint64_t fnv1a(const void* data, size_t n);
uint64_t fnv1a(const std::string& s);
std::string hex64(uint64_t v);

// splitmix64, used to derive independent RNG streams from one master seed.
uint64_t splitmix64(uint64_t x);

}  // namespace repose::core
