#pragma once

// Parameter initializers. All draws come from the caller's Rng so model
// construction is reproducible from a single seed.

#include <cmath>

#include "repose/ad/tensor.hpp"
#include "repose/core/random.hpp"

namespace repose::ad {

// He-style uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline Tensor init_uniform(const Shape& shape, int64_t fan_in, core::Rng& rng) {
  const double k = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(static_cast<size_t>(numel(shape)));
  for (auto& x : v) x = rng.uniform(-k, k);
  return Tensor::from_data(shape, std::move(v), true);
}

// w:[out,in] for linear layers.
inline Tensor init_linear_weight(int out, int in, core::Rng& rng) {
  return init_uniform({out, in}, in, rng);
}

// w:[O,C,kh,kw] (or [O,C,kd,kh,kw]); fan_in = C * prod(kernel).
inline Tensor init_conv_weight(const Shape& shape, core::Rng& rng) {
  int64_t fan_in = 1;
  for (size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
  return init_uniform(shape, fan_in, rng);
}

inline Tensor init_zeros(const Shape& shape) { return Tensor::zeros(shape, true); }

}  // namespace repose::ad
