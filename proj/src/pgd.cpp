#include "iddm/pgd.hpp"

#include <cmath>
#include <stdexcept>

#include "iddm/project.hpp"

namespace iddm {

int stage_split(int total_steps, double rho) {
  if (total_steps < 1) {
    throw std::invalid_argument("stage_split: total_steps must be >= 1");
  }
  if (!(rho > 0.0 && rho < 1.0)) {
    throw std::invalid_argument("stage_split: rho must lie in (0, 1)");
  }
  return static_cast<int>(std::floor(rho * total_steps));
}

Tensor pgd_step(const Tensor& x_orig, const Tensor& x_cur, const Tensor& grad, double eta,
                double alpha_step) {
  require_same_shape(x_orig, x_cur, "pgd_step");
  require_same_shape(x_orig, grad, "pgd_step");
  Tensor delta = x_cur;
  for (std::size_t i = 0; i < delta.data.size(); ++i) {
    double g = grad.data[i];
    double s = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
    delta.data[i] = (x_cur.data[i] - alpha_step * s) - x_orig.data[i];
  }
  return project_linf_and_box(x_orig, delta, eta);
}

double stage2_loss_grad(const DenoiserState& frozen, const Tensor& x, int t, const Tensor& eps,
                        const std::vector<const FREncoder*>& encoders,
                        const std::vector<IdentityPrototype>& protos, const AlignerSpec& aspec,
                        double tau, const NoiseSchedule& sched, Tensor& grad_x,
                        const std::string& label, const BackendAdapter& adapter) {
  Tensor z0 = adapter.encode ? adapter.encode(x) : x;
  Tensor z_t = forward_noise(z0, t, eps, sched);
  CleanPrediction cp = predict_clean_cached(frozen, z_t, t, label, sched, adapter);
  Tensor grad_xhat;
  double loss = id_loss_grad(encoders, protos, cp.x_hat, tau, aspec, grad_xhat);
  Tensor grad_zt = predict_clean_vjp_to_zt(frozen, cp, grad_xhat, adapter);
  double s0 = std::sqrt(sched.alpha_bar(t));
  for (double& g : grad_zt.data) g *= s0;
  grad_x = adapter.encode_vjp ? adapter.encode_vjp(grad_zt) : std::move(grad_zt);
  return loss;
}

std::vector<Tensor> update_protection_set(
    const std::vector<Tensor>& x_anchor, const std::vector<Tensor>& x_start,
    const DenoiserState& frozen, const std::vector<const FREncoder*>& encoders,
    const std::vector<IdentityPrototype>& protos, const AlignerSpec& aspec,
    const PgdOptions& opt, const NoiseSchedule& sched, std::uint64_t seed,
    const TraceSink& trace, const BackendAdapter& adapter) {
  if (x_anchor.empty() || x_anchor.size() != x_start.size()) {
    throw std::invalid_argument("update_protection_set: empty or mismatched image lists");
  }
  if (opt.steps_this_call < 0 || opt.eta < 0.0) {
    throw std::invalid_argument("update_protection_set: invalid options");
  }

  const int steps = sched.steps();
  int band_lo = std::max(1, static_cast<int>(std::floor(opt.stage2_band_lo * steps)) + 1);
  int band_hi = std::min(steps, static_cast<int>(std::floor(opt.stage2_band_hi * steps)));
  if (band_hi < band_lo) band_hi = band_lo;

  std::vector<Tensor> result(x_start.size());
  for (std::size_t img = 0; img < x_start.size(); ++img) {
    Tensor cur = x_start[img];
    for (int s = 0; s < opt.steps_this_call; ++s) {
      const int global_step = opt.first_global_step + s + 1;  // 1-based
      const bool stage1 = global_step <= opt.t_rec_global;
      Rng rng = Rng::derive(seed, {0x504744ULL, img, static_cast<std::uint64_t>(global_step)});

      double loss;
      Tensor grad;
      if (stage1) {
        loss = denoising_loss_input_grad(frozen, cur, opt.cond_label, sched, rng, grad, adapter);
      } else {
        int t = band_lo + rng.uniform_int(band_hi - band_lo + 1);
        Tensor eps = Tensor::gaussian(cur.height, cur.width, cur.channels, rng);
        loss = stage2_loss_grad(frozen, cur, t, eps, encoders, protos, aspec, opt.tau, sched,
                                grad, opt.cond_label, adapter);
      }
      if (!all_finite(grad) || !std::isfinite(loss)) {
        throw std::runtime_error("update_protection_set: non-finite gradient at image " +
                                 std::to_string(img) + ", step " + std::to_string(global_step));
      }
      cur = pgd_step(x_anchor[img], cur, grad, opt.eta, opt.alpha_step);
      if (trace) {
        PgdTraceRow row;
        row.image_index = static_cast<int>(img);
        row.global_step = global_step;
        row.stage = stage1 ? 1 : 2;
        row.loss = loss;
        row.max_delta = max_abs_diff(cur, x_anchor[img]);
        trace(row);
      }
    }
    result[img] = std::move(cur);
  }
  return result;
}

}  // namespace iddm
