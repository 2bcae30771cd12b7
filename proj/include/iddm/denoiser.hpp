#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "iddm/rng.hpp"
#include "iddm/schedule.hpp"
#include "iddm/tensor.hpp"

namespace iddm {

// Layer-shape record for the convolutional noise predictor: a 3x3 conv stem,
// `hidden_layers` hidden 3x3 convs, a 3x3 conv head, SiLU activations, and a
// sinusoidal-timestep + label embedding added channelwise after the stem.
struct ArchDescriptor {
  int height = 32;
  int width = 32;
  int channels = 3;
  int hidden = 48;
  int hidden_layers = 3;
  int time_dim = 32;  // sinusoidal feature size; must be even

  bool operator==(const ArchDescriptor&) const = default;
};

inline constexpr const char* kInstanceLabel = "sks-person";
inline constexpr const char* kPriorLabel = "person";

// Noise-prediction network parameters plus its conditioning vocabulary.
// Snapshot semantics: operations that train return a new state and never
// mutate their input.
struct DenoiserState {
  ArchDescriptor arch;
  std::vector<std::string> cond_vocab;
  std::vector<double> params;
};

std::size_t denoiser_param_count(const ArchDescriptor& arch, std::size_t vocab_size);

// Seeded He-style initialization. The vocabulary must contain the instance
// and prior labels.
DenoiserState init_denoiser(const ArchDescriptor& arch, const std::vector<std::string>& cond_vocab,
                            std::uint64_t seed);

// Index of a conditioning label; throws std::invalid_argument when unknown.
int label_index(const DenoiserState& state, const std::string& label);

// Saved activations from one forward pass, consumed by denoiser_backward.
struct DenoiserTape {
  Tensor input;
  std::vector<double> time_feat;
  std::vector<double> emb_pre;        // pre-SiLU time projection
  std::vector<double> emb;            // SiLU(time) + label embedding
  int label = -1;
  std::vector<Tensor> pre_act;        // pre-SiLU activation per conv stage
  std::vector<Tensor> post_act;       // SiLU outputs feeding the next conv
};

// eps_theta(z_t, t, c). Deterministic; fills `tape` when non-null.
Tensor denoiser_forward(const DenoiserState& state, const Tensor& z_t, int t,
                        const std::string& label, DenoiserTape* tape = nullptr);

inline Tensor predict_noise(const DenoiserState& state, const Tensor& z_t, int t,
                            const std::string& label) {
  return denoiser_forward(state, z_t, t, label);
}

// Pullback of denoiser_forward. grad_params (same length as state.params) is
// accumulated into when non-null; grad_input is overwritten when non-null.
void denoiser_backward(const DenoiserState& state, const DenoiserTape& tape,
                       const Tensor& grad_eps, std::vector<double>* grad_params,
                       Tensor* grad_input);

// Pixel <-> latent seam. The shipped adapter is the exact identity; a real
// latent model plugs in encode/decode plus their pullbacks.
struct BackendAdapter {
  std::function<Tensor(const Tensor&)> encode;
  std::function<Tensor(const Tensor&)> decode;
  std::function<Tensor(const Tensor&)> encode_vjp;  // pullback of encode
  std::function<Tensor(const Tensor&)> decode_vjp;  // pullback of decode
};

const BackendAdapter& identity_adapter();

// One Monte-Carlo draw for the denoising objective: t ~ U{1..steps} and a
// Gaussian noise field.
struct LossDraw {
  int t = 0;
  Tensor eps;
};

LossDraw draw_loss_sample(const NoiseSchedule& sched, int h, int w, int c, Rng& rng);

using PredictFn = std::function<Tensor(const Tensor& z_t, int t, const std::string& label)>;

// ||eps - predictor(z_t, t, c)||^2 for one draw; z_t is formed from
// encode(x0). The squared L2 norm is summed over all entries.
double denoising_loss_sample(const PredictFn& predictor, const Tensor& x0,
                             const std::string& label, const NoiseSchedule& sched, Rng& rng,
                             const BackendAdapter& adapter = identity_adapter());

// Same draw protocol against the network itself.
double denoising_loss(const DenoiserState& state, const Tensor& x0, const std::string& label,
                      const NoiseSchedule& sched, Rng& rng,
                      const BackendAdapter& adapter = identity_adapter());

// Loss plus `scale` times its parameter gradient accumulated into grad_params.
double denoising_loss_param_grad(const DenoiserState& state, const Tensor& x0,
                                 const std::string& label, const NoiseSchedule& sched, Rng& rng,
                                 double scale, std::vector<double>& grad_params,
                                 const BackendAdapter& adapter = identity_adapter());

// Loss plus its gradient w.r.t. the input image (Stage I objective).
double denoising_loss_input_grad(const DenoiserState& state, const Tensor& x0,
                                 const std::string& label, const NoiseSchedule& sched, Rng& rng,
                                 Tensor& grad_image,
                                 const BackendAdapter& adapter = identity_adapter());

// Smallest alpha_bar predict_clean accepts; below it the 1/sqrt(alpha_bar)
// recovery is considered ill-conditioned and an error is raised.
inline constexpr double kAlphaBarFloor = 1e-4;

// One-step clean recovery: zhat0 = (z_t - sqrt(1-ab)*eps_hat)/sqrt(ab),
// decoded and clamped to [0,1].
Tensor predict_clean(const DenoiserState& state, const Tensor& z_t, int t,
                     const std::string& label, const NoiseSchedule& sched,
                     const BackendAdapter& adapter = identity_adapter());

// Cached variant for backprop through the recovery.
struct CleanPrediction {
  Tensor x_hat;      // clamped image
  Tensor x_raw;      // decode output before clamping (gradient mask)
  DenoiserTape tape;
  int t = 0;
  double alpha_bar = 0.0;
};

CleanPrediction predict_clean_cached(const DenoiserState& state, const Tensor& z_t, int t,
                                     const std::string& label, const NoiseSchedule& sched,
                                     const BackendAdapter& adapter = identity_adapter());

// Pullback of predict_clean to the noised latent z_t. Clamped pixels pass no
// gradient.
Tensor predict_clean_vjp_to_zt(const DenoiserState& state, const CleanPrediction& cp,
                               const Tensor& grad_xhat,
                               const BackendAdapter& adapter = identity_adapter());

// Versioned JSON checkpoint with a CRC-32 over the parameter bytes;
// round-trips bit-exactly.
void save_checkpoint(const DenoiserState& state, const std::string& path);
DenoiserState load_checkpoint(const std::string& path);

// FNV-1a over the raw parameter bytes; used to assert that frozen states
// really stay frozen.
std::uint64_t param_checksum(const DenoiserState& state);

}  // namespace iddm
