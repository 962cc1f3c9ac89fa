#include "repose/diffusion/schedule.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace repose::diffusion {
namespace {

void check_t(int t, const DiffusionSchedule& sched) {
  if (t < 1 || t > sched.T)
    throw std::invalid_argument("schedule: t=" + std::to_string(t) + " outside [1, " +
                                std::to_string(sched.T) + "]");
}

void check_len(const std::vector<double>& a, const std::vector<double>& b, const char* who) {
  if (a.size() != b.size()) throw std::invalid_argument(std::string(who) + ": length mismatch");
}

}  // namespace

double DiffusionSchedule::alpha_at(int t) const {
  if (t == 0) return 1.0;
  check_t(t, *this);
  return alpha[t - 1];
}

double DiffusionSchedule::sigma_at(int t) const {
  if (t == 0) return 0.0;
  check_t(t, *this);
  return sigma[t - 1];
}

void DiffusionSchedule::validate() const {
  if (T < 2 || alpha.size() != static_cast<size_t>(T) || sigma.size() != static_cast<size_t>(T))
    throw std::logic_error("schedule: bad sizes");
  for (int t = 1; t <= T; ++t) {
    const double a = alpha[t - 1], s = sigma[t - 1];
    if (std::abs(a * a + s * s - 1.0) > 1e-6)
      throw std::logic_error("schedule: alpha^2+sigma^2 != 1 at t=" + std::to_string(t));
    if (t > 1 && !(a < alpha[t - 2] && s > sigma[t - 2]))
      throw std::logic_error("schedule: not strictly monotone at t=" + std::to_string(t));
  }
}

DiffusionSchedule make_schedule(int T) {
  if (T < 2) throw std::invalid_argument("make_schedule: T must be >= 2");
  DiffusionSchedule sched;
  sched.T = T;
  sched.alpha.resize(T);
  sched.sigma.resize(T);
  for (int t = 1; t <= T; ++t) {
    const double phase = 0.5 * std::numbers::pi * t / T;
    sched.alpha[t - 1] = std::cos(phase);
    sched.sigma[t - 1] = std::sin(phase);
  }
  sched.validate();
  return sched;
}

std::vector<double> add_noise(const std::vector<double>& x, const std::vector<double>& eps, int t,
                              const DiffusionSchedule& sched) {
  check_len(x, eps, "add_noise");
  check_t(t, sched);
  const double a = sched.alpha[t - 1], s = sched.sigma[t - 1];
  std::vector<double> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + s * eps[i];
  return out;
}

std::vector<double> v_target(const std::vector<double>& x, const std::vector<double>& eps, int t,
                             const DiffusionSchedule& sched) {
  check_len(x, eps, "v_target");
  check_t(t, sched);
  const double a = sched.alpha[t - 1], s = sched.sigma[t - 1];
  std::vector<double> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = a * eps[i] - s * x[i];
  return out;
}

std::vector<double> ddim_step(const std::vector<double>& x_t, const std::vector<double>& v, int t,
                              int t_next, const DiffusionSchedule& sched) {
  check_len(x_t, v, "ddim_step");
  check_t(t, sched);
  if (t_next < 0 || t_next >= t)
    throw std::invalid_argument("ddim_step: need t > t_next >= 0");
  const double a = sched.alpha_at(t), s = sched.sigma_at(t);
  const double an = sched.alpha_at(t_next), sn = sched.sigma_at(t_next);
  std::vector<double> out(x_t.size());
  for (size_t i = 0; i < x_t.size(); ++i) {
    const double x_hat = a * x_t[i] - s * v[i];
    const double eps_hat = s * x_t[i] + a * v[i];
    out[i] = an * x_hat + sn * eps_hat;
  }
  return out;
}

}  // namespace repose::diffusion
