#include "iddm/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace iddm {

void validate(const ProtectionConfig& cfg) {
  // eta == 0 is the degenerate no-op budget (protection disabled).
  if (!(cfg.eta >= 0.0)) throw std::invalid_argument("config: eta must be >= 0");
  if (!(cfg.alpha_step > 0.0)) throw std::invalid_argument("config: alpha_step must be > 0");
  if (cfg.pgd_steps < 1) throw std::invalid_argument("config: pgd_steps must be >= 1");
  if (!(cfg.rho > 0.0 && cfg.rho < 1.0)) throw std::invalid_argument("config: rho must be in (0,1)");
  if (!(cfg.tau > 0.0)) throw std::invalid_argument("config: tau must be > 0");
  if (cfg.iterations < 1) throw std::invalid_argument("config: iterations must be >= 1");
  if (cfg.lambda_prior < 0.0) throw std::invalid_argument("config: lambda_prior must be >= 0");
  if (cfg.total_ft_steps < 0) throw std::invalid_argument("config: total_ft_steps must be >= 0");
  if (!(cfg.ft_learning_rate > 0.0)) {
    throw std::invalid_argument("config: ft_learning_rate must be > 0");
  }
  if (cfg.ft_batch_size < 1) throw std::invalid_argument("config: ft_batch_size must be >= 1");
  if (cfg.prior_set_size < 0) throw std::invalid_argument("config: prior_set_size must be >= 0");
  if (!(cfg.stage2_band_lo >= 0.0 && cfg.stage2_band_lo <= cfg.stage2_band_hi &&
        cfg.stage2_band_hi <= 1.0)) {
    throw std::invalid_argument("config: stage2 band must satisfy 0 <= lo <= hi <= 1");
  }
}

DatasetSplit split_dataset(const std::vector<Tensor>& images, const SplitSizes& sizes, Rng& rng) {
  if (sizes.reference < 1 || sizes.protect_n < 1 || sizes.eval_n < 0) {
    throw std::invalid_argument("split_dataset: sizes must be positive");
  }
  const std::size_t need =
      static_cast<std::size_t>(sizes.reference) + sizes.protect_n + sizes.eval_n;
  if (images.size() < need) {
    throw std::invalid_argument("split_dataset: need " + std::to_string(need) + " images, have " +
                                std::to_string(images.size()));
  }
  std::vector<int> idx(images.size());
  std::iota(idx.begin(), idx.end(), 0);
  // Fisher-Yates with the deterministic stream.
  for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i) {
    std::swap(idx[i], idx[rng.uniform_int(i + 1)]);
  }
  DatasetSplit out;
  int p = 0;
  for (int i = 0; i < sizes.reference; ++i) out.reference.push_back(images[idx[p++]]);
  for (int i = 0; i < sizes.protect_n; ++i) out.protect.push_back(images[idx[p++]]);
  for (int i = 0; i < sizes.eval_n; ++i) out.eval.push_back(images[idx[p++]]);
  return out;
}

namespace {

FineTuneConfig ft_config(const ProtectionConfig& cfg) {
  FineTuneConfig f;
  f.steps = cfg.iterations > 0 ? cfg.total_ft_steps / (2 * cfg.iterations) : 0;
  f.learning_rate = cfg.ft_learning_rate;
  f.lambda_prior = cfg.lambda_prior;
  f.batch_size = cfg.ft_batch_size;
  f.prior_set_size = cfg.prior_set_size;
  return f;
}

std::vector<LabeledImage> with_label(const std::vector<Tensor>& images, const char* label) {
  std::vector<LabeledImage> out;
  out.reserve(images.size());
  for (const Tensor& t : images) out.emplace_back(t, label);
  return out;
}

}  // namespace

IddmResult run_iddm(const DatasetSplit& split, const DenoiserState& init_state,
                    const ProtectionConfig& cfg, const std::vector<const FREncoder*>& encoders,
                    const AlignerSpec& aspec, const NoiseSchedule& sched, const RunHooks& hooks) {
  validate(cfg);
  if (split.reference.empty() || split.protect.empty()) {
    throw std::invalid_argument("run_iddm: reference and protection sets must be non-empty");
  }

  // Prototypes come from the clean reference set, once, before iteration 1.
  std::vector<IdentityPrototype> protos;
  protos.reserve(encoders.size());
  for (const FREncoder* enc : encoders) {
    protos.push_back(prototype(*enc, split.reference, aspec));
  }

  // Prior set is generated once from the frozen pre-personalization model.
  std::vector<LabeledImage> prior_set;
  if (cfg.prior_set_size > 0 && cfg.lambda_prior > 0.0) {
    Rng prior_rng = Rng::derive(cfg.seed, {kSaltPrior});
    prior_set = build_prior_set(init_state, cfg.prior_set_size, sched, prior_rng);
  }

  const FineTuneConfig fcfg = ft_config(cfg);
  const std::vector<LabeledImage> ref_data = with_label(split.reference, kInstanceLabel);

  const int K = cfg.iterations;
  const bool cumulative = cfg.interpretation == BudgetInterpretation::Cumulative;
  // floor(rho * T); T is the whole budget in cumulative mode and the
  // per-iteration count otherwise.
  const int t_rec = stage_split(cfg.pgd_steps, cfg.rho);

  DenoiserState theta = init_state;
  std::vector<Tensor> x_prime = split.protect;  // carried forward
  int steps_done = 0;

  for (int k = 1; k <= K; ++k) {
    // Step 1: short fine-tuning on the fixed reference set.
    Rng ft1_rng = Rng::derive(cfg.seed, {kSaltFt, static_cast<std::uint64_t>(2 * k - 1)});
    DenoiserState theta_temp = ft(theta, ref_data, fcfg, prior_set, sched, ft1_rng);
    if (hooks.on_temp_state) hooks.on_temp_state(k, theta_temp);

    // Step 2: identity-decoupled data update against the frozen temp model.
    PgdOptions opt;
    opt.eta = cfg.eta;
    opt.alpha_step = cfg.alpha_step;
    opt.tau = cfg.tau;
    opt.cond_label = kInstanceLabel;
    opt.stage2_band_lo = cfg.stage2_band_lo;
    opt.stage2_band_hi = cfg.stage2_band_hi;
    if (cumulative) {
      int base = cfg.pgd_steps / K, rem = cfg.pgd_steps % K;
      opt.steps_this_call = base + (k <= rem ? 1 : 0);
      opt.first_global_step = steps_done;
      opt.t_rec_global = t_rec;
    } else {
      opt.steps_this_call = cfg.pgd_steps;
      opt.first_global_step = (k - 1) * cfg.pgd_steps;
      // Stage assignment restarts every iteration under the literal reading.
      opt.t_rec_global = opt.first_global_step + t_rec;
    }

    std::uint64_t before = param_checksum(theta_temp);
    x_prime = update_protection_set(split.protect, x_prime, theta_temp, encoders, protos, aspec,
                                    opt, sched, Rng::derive(cfg.seed, {kSaltPgd}).next_u64(),
                                    hooks.trace);
    if (param_checksum(theta_temp) != before) {
      throw std::logic_error("run_iddm: frozen model was mutated during the data update");
    }
    steps_done += opt.steps_this_call;
    if (hooks.on_protected) hooks.on_protected(k, x_prime);

    // Step 3: fine-tuning on the updated protection set.
    Rng ft2_rng = Rng::derive(cfg.seed, {kSaltFt, static_cast<std::uint64_t>(2 * k)});
    theta = ft(theta_temp, with_label(x_prime, kInstanceLabel), fcfg, prior_set, sched, ft2_rng);
    if (hooks.on_state) hooks.on_state(k, theta);
  }
  return IddmResult{std::move(theta), std::move(x_prime)};
}

DenoiserState no_defense_baseline(const DatasetSplit& split, const DenoiserState& init_state,
                                  const ProtectionConfig& cfg, const NoiseSchedule& sched) {
  validate(cfg);
  std::vector<LabeledImage> data = with_label(split.reference, kInstanceLabel);
  for (const Tensor& t : split.protect) data.emplace_back(t, kInstanceLabel);

  std::vector<LabeledImage> prior_set;
  if (cfg.prior_set_size > 0 && cfg.lambda_prior > 0.0) {
    Rng prior_rng = Rng::derive(cfg.seed, {kSaltPrior});
    prior_set = build_prior_set(init_state, cfg.prior_set_size, sched, prior_rng);
  }

  FineTuneConfig fcfg = ft_config(cfg);
  fcfg.steps = cfg.total_ft_steps;  // same total budget, one phase
  if (fcfg.steps == 0) return init_state;
  Rng rng = Rng::derive(cfg.seed, {kSaltFt, 0});
  return ft(init_state, data, fcfg, prior_set, sched, rng);
}

}  // namespace iddm
