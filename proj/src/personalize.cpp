#include "iddm/personalize.hpp"

#include <cmath>
#include <stdexcept>

namespace iddm {

namespace {

Tensor sample_one(const DenoiserState& state, const std::string& label,
                  const NoiseSchedule& sched, Rng& rng) {
  const ArchDescriptor& a = state.arch;
  Tensor x = Tensor::gaussian(a.height, a.width, a.channels, rng);
  for (int t = sched.steps(); t >= 1; --t) {
    Tensor eps_hat = predict_noise(state, x, t, label);
    double alpha = sched.alpha(t);
    double ab = sched.alpha_bar(t);
    double coef = sched.beta(t) / std::sqrt(1.0 - ab);
    double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
    double sigma = t > 1 ? std::sqrt(sched.beta(t)) : 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      double mean = inv_sqrt_alpha * (x.data[i] - coef * eps_hat.data[i]);
      x.data[i] = mean + (sigma > 0.0 ? sigma * rng.normal() : 0.0);
    }
  }
  return clamp01(x);
}

}  // namespace

std::vector<LabeledImage> build_prior_set(const DenoiserState& state, int n,
                                          const NoiseSchedule& sched, Rng& rng) {
  if (n < 1) {
    throw std::invalid_argument("build_prior_set: n must be >= 1");
  }
  std::vector<LabeledImage> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    out.emplace_back(sample_one(state, kPriorLabel, sched, rng), kPriorLabel);
  }
  return out;
}

DenoiserState ft(const DenoiserState& state, const std::vector<LabeledImage>& dataset,
                 const FineTuneConfig& cfg, const std::vector<LabeledImage>& prior_set,
                 const NoiseSchedule& sched, Rng& rng) {
  if (dataset.empty()) {
    throw std::invalid_argument("ft: dataset is empty");
  }
  if (cfg.steps < 0 || !(cfg.learning_rate > 0.0) || cfg.batch_size < 1 ||
      cfg.lambda_prior < 0.0) {
    throw std::invalid_argument("ft: invalid fine-tune config");
  }
  const bool use_prior = cfg.lambda_prior > 0.0 && !prior_set.empty();

  DenoiserState out = state;
  std::vector<double> grad(out.params.size());
  for (int step = 0; step < cfg.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const LabeledImage& item = dataset[rng.uniform_int(static_cast<int>(dataset.size()))];
      loss += denoising_loss_param_grad(out, item.first, item.second, sched, rng, 1.0, grad);
      if (use_prior) {
        const LabeledImage& pr = prior_set[rng.uniform_int(static_cast<int>(prior_set.size()))];
        loss += cfg.lambda_prior *
                denoising_loss_param_grad(out, pr.first, pr.second, sched, rng,
                                          cfg.lambda_prior, grad);
      }
    }
    if (!std::isfinite(loss)) {
      throw std::runtime_error("ft: non-finite loss at step " + std::to_string(step));
    }
    double scale = cfg.learning_rate / cfg.batch_size;
    for (std::size_t i = 0; i < out.params.size(); ++i) out.params[i] -= scale * grad[i];
  }
  return out;
}

std::vector<Tensor> sample(const DenoiserState& state, const std::string& label, int n,
                           const NoiseSchedule& sched, Rng& rng) {
  if (n < 1) {
    throw std::invalid_argument("sample: n must be >= 1");
  }
  label_index(state, label);  // validate up front
  std::vector<Tensor> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    out.push_back(sample_one(state, label, sched, rng));
  }
  return out;
}

}  // namespace iddm
