#include "repose/ad/optim.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "repose/core/hash.hpp"

namespace repose::ad {

void ParamSet::add(const std::string& name, const Tensor& t) {
  if (name.empty()) throw std::invalid_argument("ParamSet: empty name");
  if (index_.count(name)) throw std::invalid_argument("ParamSet: duplicate name " + name);
  if (!t.defined()) throw std::invalid_argument("ParamSet: undefined tensor for " + name);
  index_[name] = items_.size();
  items_.emplace_back(name, t);
}

void ParamSet::merge(const ParamSet& other, const std::string& prefix) {
  for (const auto& [name, t] : other.items_) add(prefix + name, t);
}

Tensor ParamSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("ParamSet: no parameter " + name);
  return items_[it->second].second;
}

int64_t ParamSet::total_elems() const {
  int64_t n = 0;
  for (const auto& [_, t] : items_) n += t.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& [_, t] : items_) t.zero_grad();
}

uint64_t ParamSet::value_hash() const {
  core::Fnv1a h;
  for (const auto& [name, t] : items_) {
    h.update(name.data(), name.size());
    h.update(t.value().data(), t.value().size() * sizeof(double));
  }
  return h.digest();
}

Adam::Adam(const ParamSet& params, AdamConfig cfg) : cfg_(cfg), params_(params) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    const size_t n = params_.items()[i].second.value().size();
    m_[i].assign(n, 0.0);
    v_[i].assign(n, 0.0);
  }
}

void Adam::zero_grad() { params_.zero_grad(); }

void Adam::step() {
  ++t_;
  double clip_scale = 1.0;
  if (cfg_.grad_clip > 0) {
    double sq = 0;
    for (const auto& [_, t] : params_.items()) {
      const auto& g = t.node().grad;
      for (double v : g) sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (norm > cfg_.grad_clip) clip_scale = cfg_.grad_clip / norm;
  }
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor t = params_.items()[i].second;
    Node& node = t.node();
    if (node.grad.size() != node.value.size()) node.ensure_grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t k = 0; k < node.value.size(); ++k) {
      const double g = node.grad[k] * clip_scale;
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g;
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g * g;
      const double mh = m[k] / bc1;
      const double vh = v[k] / bc2;
      node.value[k] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
    }
  }
}

void Adam::load_state(const std::string& name, const std::vector<double>& m,
                      const std::vector<double>& v) {
  for (size_t i = 0; i < params_.size(); ++i) {
    if (params_.items()[i].first != name) continue;
    if (m.size() != m_[i].size() || v.size() != v_[i].size())
      throw std::invalid_argument("Adam::load_state: size mismatch for " + name);
    m_[i] = m;
    v_[i] = v;
    return;
  }
  throw std::invalid_argument("Adam::load_state: unknown parameter " + name);
}

}  // namespace repose::ad
