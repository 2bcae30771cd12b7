#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "iddm/denoiser.hpp"
#include "iddm/schedule.hpp"
#include "iddm/tensor.hpp"

namespace iddm {

// Subject-driven fine-tuning knobs. The learning rate pairs with the summed
// squared-error denoising objective; see the README section on scales.
struct FineTuneConfig {
  int steps = 50;
  double learning_rate = 1e-5;
  double lambda_prior = 1.0;
  int batch_size = 2;
  int prior_set_size = 4;
};

using LabeledImage = std::pair<Tensor, std::string>;

// Samples `n` images from the frozen model under the prior label via
// ancestral reverse diffusion. Deterministic given the rng state.
std::vector<LabeledImage> build_prior_set(const DenoiserState& state, int n,
                                          const NoiseSchedule& sched, Rng& rng);

// DreamBooth-style fine-tuning: cfg.steps SGD steps on
//   L = ||eps - eps_theta(z, t, c)||^2 + lambda * ||eps' - eps_theta(z', t', c_pr)||^2,
// averaged over the batch. Returns a new state; the input is untouched.
// Raises on non-finite loss (divergence guard). When lambda_prior == 0 or the
// prior set is empty the prior term is skipped entirely, including its rng
// draws, so the run matches plain conditional fine-tuning step for step.
DenoiserState ft(const DenoiserState& state, const std::vector<LabeledImage>& dataset,
                 const FineTuneConfig& cfg, const std::vector<LabeledImage>& prior_set,
                 const NoiseSchedule& sched, Rng& rng);

// Standard ancestral sampling from Gaussian noise under label `c`; outputs
// are clamped to [0,1].
std::vector<Tensor> sample(const DenoiserState& state, const std::string& label, int n,
                           const NoiseSchedule& sched, Rng& rng);

}  // namespace iddm
