#pragma once

// Named parameter registry and Adam. Parameter order is the registration
// order, which is fixed by construction order, so updates are deterministic.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "repose/ad/tensor.hpp"

namespace repose::ad {

class ParamSet {
 public:
  void add(const std::string& name, const Tensor& t);
  // Merge another set under a prefix ("unet." + name).
  void merge(const ParamSet& other, const std::string& prefix);

  bool has(const std::string& name) const { return index_.count(name) > 0; }
  Tensor get(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  size_t size() const { return items_.size(); }
  int64_t total_elems() const;

  void zero_grad();
  // FNV-1a over the raw little-endian bytes of every value, in registration
  // order with names mixed in. Used to prove frozen groups never move.
  uint64_t value_hash() const;

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, size_t> index_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0.0;  // global L2 norm cap; 0 disables
};

class Adam {
 public:
  Adam(const ParamSet& params, AdamConfig cfg);

  void zero_grad();
  void step();
  int64_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

  // Moment vectors keyed by parameter name, for checkpoint resume.
  const std::vector<double>& moment1(size_t i) const { return m_[i]; }
  const std::vector<double>& moment2(size_t i) const { return v_[i]; }
  const ParamSet& params() const { return params_; }
  void load_state(const std::string& name, const std::vector<double>& m,
                  const std::vector<double>& v);
  void set_steps_taken(int64_t t) { t_ = t; }

 private:
  AdamConfig cfg_;
  ParamSet params_;
  std::vector<std::vector<double>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace repose::ad
