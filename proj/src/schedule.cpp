#include "iddm/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace iddm {

namespace {

void check_t(const NoiseSchedule& sched, int t) {
  if (t < 1 || t > sched.steps()) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside schedule range [1, " +
                            std::to_string(sched.steps()) + "]");
  }
}

}  // namespace

double NoiseSchedule::beta(int t) const {
  check_t(*this, t);
  return betas[t - 1];
}

double NoiseSchedule::alpha(int t) const {
  check_t(*this, t);
  return alphas[t - 1];
}

double NoiseSchedule::alpha_bar(int t) const {
  check_t(*this, t);
  return alpha_bars[t - 1];
}

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) {
    throw std::invalid_argument("make_schedule: steps must be >= 1");
  }
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
    throw std::invalid_argument("make_schedule: need 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.betas.resize(steps);
  s.alphas.resize(steps);
  s.alpha_bars.resize(steps);
  double bar = 1.0;
  for (int i = 0; i < steps; ++i) {
    double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    s.betas[i] = beta_start + (beta_end - beta_start) * frac;
    s.alphas[i] = 1.0 - s.betas[i];
    bar *= s.alphas[i];
    s.alpha_bars[i] = bar;
  }
  return s;
}

Tensor forward_noise(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched) {
  require_same_shape(x0, eps, "forward_noise");
  double ab = sched.alpha_bar(t);
  double s0 = std::sqrt(ab);
  double s1 = std::sqrt(1.0 - ab);
  Tensor out = x0;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = s0 * x0.data[i] + s1 * eps.data[i];
  }
  return out;
}

}  // namespace iddm
