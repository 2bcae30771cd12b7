#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "iddm/denoiser.hpp"
#include "iddm/fr.hpp"
#include "iddm/schedule.hpp"
#include "iddm/tensor.hpp"

namespace iddm {

// T_rec = floor(rho * T); steps with 1-based index <= T_rec run Stage I
// (denoising-consistency), the rest Stage II (identity-decoupling).
int stage_split(int total_steps, double rho);

// Allocation of the PGD budget between the two stages.
struct StageSchedule {
  int total_steps = 8;
  double rho = 0.1;
  double alpha_step = 0.008;

  int t_rec() const { return stage_split(total_steps, rho); }
};

// One projected sign-gradient step anchored at x_orig:
//   project(x_orig, (x_cur - alpha * sign(grad)) - x_orig, eta)
// with sign(0) = 0.
Tensor pgd_step(const Tensor& x_orig, const Tensor& x_cur, const Tensor& grad, double eta,
                double alpha_step);

struct PgdTraceRow {
  int image_index = 0;
  int global_step = 0;  // 1-based across the whole budget
  int stage = 0;        // 1 or 2
  double loss = 0.0;
  double max_delta = 0.0;  // L-inf deviation from the anchor after the step
};

using TraceSink = std::function<void(const PgdTraceRow&)>;

struct PgdOptions {
  double eta = 0.08;
  double alpha_step = 0.008;
  int steps_this_call = 8;    // how many PGD steps to run now
  int first_global_step = 0;  // 0-based offset of the first step in the budget
  int t_rec_global = 0;       // global Stage I cutoff
  double tau = 0.03;
  std::string cond_label = kInstanceLabel;
  // Stage II clean-prediction timesteps are drawn from this band of the
  // schedule (fractions of the step count).
  double stage2_band_lo = 1.0 / 3.0;
  double stage2_band_hi = 2.0 / 3.0;
};

// Two-stage projected sign-gradient update of the protection set against a
// frozen model. x_anchor holds the budget anchors (the original images);
// x_start the current iterates (equal to x_anchor on the first outer
// iteration). Per-image rng streams derive from (seed, image, global step),
// so results are independent of image order and call batching. Throws on
// non-finite gradients, naming the image and step.
std::vector<Tensor> update_protection_set(
    const std::vector<Tensor>& x_anchor, const std::vector<Tensor>& x_start,
    const DenoiserState& frozen, const std::vector<const FREncoder*>& encoders,
    const std::vector<IdentityPrototype>& protos, const AlignerSpec& aspec,
    const PgdOptions& opt, const NoiseSchedule& sched, std::uint64_t seed,
    const TraceSink& trace = {}, const BackendAdapter& adapter = identity_adapter());

// Stage II objective and its image gradient for a single image: id_loss of
// the clean prediction recovered from a freshly noised latent. Exposed for
// gradient checks and the acceptance suite.
double stage2_loss_grad(const DenoiserState& frozen, const Tensor& x, int t, const Tensor& eps,
                        const std::vector<const FREncoder*>& encoders,
                        const std::vector<IdentityPrototype>& protos, const AlignerSpec& aspec,
                        double tau, const NoiseSchedule& sched, Tensor& grad_x,
                        const std::string& label = kInstanceLabel,
                        const BackendAdapter& adapter = identity_adapter());

}  // namespace iddm
