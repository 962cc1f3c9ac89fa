#pragma once

#include <vector>

namespace repose::diffusion {

// Variance-preserving cosine noise schedule over integer timesteps 1..T.
// alpha[t-1] and sigma[t-1] hold the coefficients for timestep t, and
// alpha_t^2 + sigma_t^2 == 1 by construction.
struct DiffusionSchedule {
  int T = 0;
  std::vector<double> alpha;
  std::vector<double> sigma;

  // Coefficients with the t=0 boundary (alpha=1, sigma=0) included, so
  // samplers can step onto the clean endpoint.
  double alpha_at(int t) const;
  double sigma_at(int t) const;

  // Enforces the construction invariants; throws std::logic_error.
  void validate() const;
};

// alpha_t = cos(pi/2 * t/T). T < 2 -> std::invalid_argument.
DiffusionSchedule make_schedule(int T);

// x_t = alpha_t * x + sigma_t * eps, elementwise over same-length buffers.
// t outside [1, T] or length mismatch -> std::invalid_argument.
std::vector<double> add_noise(const std::vector<double>& x, const std::vector<double>& eps, int t,
                              const DiffusionSchedule& sched);

// v = alpha_t * eps - sigma_t * x (velocity target for v-prediction).
std::vector<double> v_target(const std::vector<double>& x, const std::vector<double>& eps, int t,
                             const DiffusionSchedule& sched);

// One deterministic DDIM-style update under the v parameterization:
//   x_hat = alpha_t x_t - sigma_t v,  eps_hat = sigma_t x_t + alpha_t v,
//   returns alpha_{t_next} x_hat + sigma_{t_next} eps_hat.
// Requires T >= t > t_next >= 0.
std::vector<double> ddim_step(const std::vector<double>& x_t, const std::vector<double>& v, int t,
                              int t_next, const DiffusionSchedule& sched);

}  // namespace repose::diffusion
