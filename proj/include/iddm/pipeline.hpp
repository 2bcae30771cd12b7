#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "iddm/denoiser.hpp"
#include "iddm/fr.hpp"
#include "iddm/personalize.hpp"
#include "iddm/pgd.hpp"
#include "iddm/schedule.hpp"

namespace iddm {

// How the PGD step budget T is read: per outer iteration (each of the K
// iterations runs T steps, the literal reading) or as a cumulative budget
// spread across the K iterations.
enum class BudgetInterpretation { PerIteration, Cumulative };

// The full protection hyperparameter record. Defaults follow the reference
// setting: eta 0.08, step size 0.008, T = 8 PGD steps, rho 0.1, tau 0.03 and
// K = 10 outer iterations.
struct ProtectionConfig {
  double eta = 0.08;
  double alpha_step = 0.008;
  int pgd_steps = 8;  // T
  double rho = 0.1;
  double tau = 0.03;
  int iterations = 10;  // K
  double lambda_prior = 1.0;
  std::uint64_t seed = 0;
  BudgetInterpretation interpretation = BudgetInterpretation::PerIteration;

  // Fine-tuning budget, split evenly across Steps 1 and 3 of each iteration.
  int total_ft_steps = 1000;
  double ft_learning_rate = 1e-5;
  int ft_batch_size = 2;
  int prior_set_size = 4;

  double stage2_band_lo = 1.0 / 3.0;
  double stage2_band_hi = 2.0 / 3.0;
};

void validate(const ProtectionConfig& cfg);

// Disjoint partition of one identity's photos: fixed reference set (short
// fine-tuning + prototypes), protection set (optimized under the budget) and
// held-out clean images for evaluation.
struct DatasetSplit {
  std::vector<Tensor> reference;  // X_c
  std::vector<Tensor> protect;    // X_0
  std::vector<Tensor> eval;       // X_eval
};

struct SplitSizes {
  int reference = 4;
  int protect_n = 4;
  int eval_n = 4;
};

// Deterministic disjoint split. Throws when images run short.
DatasetSplit split_dataset(const std::vector<Tensor>& images, const SplitSizes& sizes, Rng& rng);

struct RunHooks {
  std::function<void(int k, const DenoiserState&)> on_temp_state;          // theta'_k
  std::function<void(int k, const DenoiserState&)> on_state;               // theta_k
  std::function<void(int k, const std::vector<Tensor>&)> on_protected;     // X' after k
  TraceSink trace;
};

struct IddmResult {
  DenoiserState final_state;
  std::vector<Tensor> protected_set;
};

// Rng stream derivation salts. Every stream is derived from cfg.seed with
// these salts so full runs are bit-reproducible and independently
// replayable: prior set uses {kSaltPrior}, the i-th ft call (1-based, two
// per iteration) uses {kSaltFt, i}, PGD streams use {kSaltPgd} plus the
// per-image/step path documented in pgd.hpp.
inline constexpr std::uint64_t kSaltPrior = 0x7072696fULL;
inline constexpr std::uint64_t kSaltFt = 0xf7ULL;
inline constexpr std::uint64_t kSaltPgd = 0x706764ULL;
inline constexpr std::uint64_t kSaltSample = 0x73616d70ULL;
inline constexpr std::uint64_t kSaltSplit = 0x73706c69ULL;
inline constexpr std::uint64_t kSaltInit = 0x696e6974ULL;

// The alternating loop: for k = 1..K short fine-tuning on the reference set,
// a frozen-model data update of the protection set, then fine-tuning on the
// updated set, which is carried into the next iteration. The L-inf ball
// stays anchored at the ORIGINAL protection set for all K iterations, so the
// final deviation never exceeds eta.
IddmResult run_iddm(const DatasetSplit& split, const DenoiserState& init_state,
                    const ProtectionConfig& cfg, const std::vector<const FREncoder*>& encoders,
                    const AlignerSpec& aspec, const NoiseSchedule& sched,
                    const RunHooks& hooks = {});

// Plain personalization on reference + protection images with the same total
// fine-tuning budget and no data optimization.
DenoiserState no_defense_baseline(const DatasetSplit& split, const DenoiserState& init_state,
                                  const ProtectionConfig& cfg, const NoiseSchedule& sched);

}  // namespace iddm
