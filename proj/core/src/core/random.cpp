#include "repose/core/random.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "repose/core/hash.hpp"

namespace repose::core {

uint64_t Rng::uniform_int(uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
  const uint64_t bound = UINT64_MAX - UINT64_MAX % n;
  uint64_t r;
  do {
    r = gen_();
  } while (r >= bound);
  return r % n;
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // u1 in (0,1]: guard the log.
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double th = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(th);
  have_spare_ = true;
  return r * std::cos(th);
}

Rng Rng::fork(uint64_t stream_id) const {
  return Rng(splitmix64(seed_ ^ splitmix64(stream_id)));
}

}  // namespace repose::core
