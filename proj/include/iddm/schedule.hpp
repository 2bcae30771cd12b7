#pragma once

#include <vector>

#include "iddm/tensor.hpp"

namespace iddm {

// Per-timestep noise tables. Timesteps are 1-based: beta(1) is the first step
// and alpha_bar(t) is the cumulative product up to and including t.
struct NoiseSchedule {
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;

  int steps() const { return static_cast<int>(betas.size()); }
  double beta(int t) const;
  double alpha(int t) const;
  double alpha_bar(int t) const;
};

// Linear beta ramp from beta_start to beta_end over `steps` timesteps.
// Requires steps >= 1 and 0 < beta_start <= beta_end < 1.
NoiseSchedule make_schedule(int steps, double beta_start, double beta_end);

// x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.
Tensor forward_noise(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched);

}  // namespace iddm
