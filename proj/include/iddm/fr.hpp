#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "iddm/rng.hpp"
#include "iddm/tensor.hpp"

namespace iddm {

// Face pre-processing seam. At desk scale the synthetic faces are already
// aligned, so the default is a differentiable crop + bilinear resize
// ("oracle-crop"); real pipelines plug an external detector/aligner in.
struct AlignerSpec {
  enum class Mode { OracleCrop, Pluggable };
  Mode mode = Mode::OracleCrop;
  // Crop rectangle; crop_h == 0 means the full image.
  int crop_y = 0, crop_x = 0, crop_h = 0, crop_w = 0;
  std::function<Tensor(const Tensor&, int target_resolution)> external;
};

Tensor align(const Tensor& img, const AlignerSpec& spec, int target_resolution);

// Pullback of align; only defined for oracle-crop mode.
Tensor align_vjp(const Tensor& img, const AlignerSpec& spec, int target_resolution,
                 const Tensor& grad_aligned);

// A face-embedding encoder: aligned image in, unit-norm vector out.
class FREncoder {
 public:
  virtual ~FREncoder() = default;
  virtual const std::string& name() const = 0;
  virtual int input_resolution() const = 0;
  virtual int embed_dim() const = 0;
  // L2-normalized embedding; deterministic for fixed input.
  virtual std::vector<double> embed(const Tensor& aligned) const = 0;
  // Pullback of embed: gradient w.r.t. the aligned image of <grad_embed, embed(x)>.
  virtual Tensor embed_vjp(const Tensor& aligned, const std::vector<double>& grad_embed) const = 0;
  virtual bool differentiable() const { return true; }
};

// Renormalized mean embedding of a reference set under one encoder.
struct IdentityPrototype {
  std::string encoder_name;
  std::vector<double> e;
  int source_count = 0;
};

// refs must be non-empty; throws if the mean embedding has (numerically)
// zero norm.
IdentityPrototype prototype(const FREncoder& encoder, const std::vector<Tensor>& refs,
                            const AlignerSpec& spec);

// Cosine similarity of embed(align(img)) against the prototype. Both are
// unit-norm so this is their dot product.
double linkability(const FREncoder& encoder, const Tensor& img, const IdentityPrototype& proto,
                   const AlignerSpec& spec);

// w_m = exp(s_m / tau) / sum_j exp(s_j / tau), computed with max subtraction.
std::vector<double> ensemble_weights(const std::vector<double>& sims, double tau);

// Softmax-weighted aggregate S = sum_m w_m s_m.
double ensemble_aggregate(const std::vector<double>& sims, double tau);

// Identity-decoupling objective 1 + S(img) in [0, 2].
double id_loss(const std::vector<const FREncoder*>& encoders,
               const std::vector<IdentityPrototype>& protos, const Tensor& img, double tau,
               const AlignerSpec& spec);

// id_loss plus its gradient w.r.t. the (unaligned) image; also returns the
// per-encoder similarities when `sims_out` is non-null.
double id_loss_grad(const std::vector<const FREncoder*>& encoders,
                    const std::vector<IdentityPrototype>& protos, const Tensor& img, double tau,
                    const AlignerSpec& spec, Tensor& grad_img,
                    std::vector<double>* sims_out = nullptr);

// --- shipped toy encoders -------------------------------------------------

struct EncoderArch {
  int input_res = 16;
  int channels = 3;
  int hidden = 12;
  int embed_dim = 32;  // two conv+pool blocks, then a dense head
};

// Small convolutional embedding net with hand-written backprop, used both as
// surrogate (optimization) and evaluation encoders.
class ConvEncoder : public FREncoder {
 public:
  ConvEncoder(std::string name, EncoderArch arch, std::vector<double> params);
  static ConvEncoder random_init(std::string name, EncoderArch arch, std::uint64_t seed);
  static std::size_t param_count(const EncoderArch& arch);

  const std::string& name() const override { return name_; }
  int input_resolution() const override { return arch_.input_res; }
  int embed_dim() const override { return arch_.embed_dim; }
  std::vector<double> embed(const Tensor& aligned) const override;
  Tensor embed_vjp(const Tensor& aligned, const std::vector<double>& grad_embed) const override;

  const EncoderArch& arch() const { return arch_; }
  const std::vector<double>& params() const { return params_; }
  std::vector<double>& mutable_params() { return params_; }

  struct Tape {
    Tensor input;
    std::vector<Tensor> pre, post, pooled;
    std::vector<double> flat;
    std::vector<double> raw;  // pre-normalization embedding
  };
  std::vector<double> embed_raw(const Tensor& aligned, Tape* tape) const;
  // Pullback from a gradient on the raw embedding.
  void backward_raw(const Tape& tape, const std::vector<double>& grad_raw,
                    std::vector<double>* grad_params, Tensor* grad_input) const;

 private:
  std::string name_;
  EncoderArch arch_;
  std::vector<double> params_;
};

// Named encoder set. Surrogates (used inside the optimization loss) live
// under "surrogate/", evaluation encoders under "eval/"; the namespaces are
// disjoint by construction and evaluation code enforces the split.
struct EncoderRegistry {
  std::vector<std::unique_ptr<ConvEncoder>> encoders;

  std::vector<const FREncoder*> surrogates() const;
  std::vector<const FREncoder*> evaluators() const;
  const ConvEncoder* find(const std::string& name) const;
};

inline constexpr const char* kSurrogatePrefix = "surrogate/";
inline constexpr const char* kEvalPrefix = "eval/";

// The shipped 4 surrogate + 3 evaluation architectures, freshly initialized.
EncoderRegistry make_default_registry(std::uint64_t seed);

void save_registry(const EncoderRegistry& reg, const std::string& path);
EncoderRegistry load_registry(const std::string& path);

// Prototype store: JSON map encoder_name -> {base64 vector, source_count}.
void save_prototypes(const std::vector<IdentityPrototype>& protos, const std::string& path);
std::vector<IdentityPrototype> load_prototypes(const std::string& path);

// Contrastive identity-discrimination pre-training on an identity-grouped
// image set (one inner vector per identity).
struct ContrastiveConfig {
  int steps = 4000;
  double learning_rate = 0.03;
  double margin = 0.2;
};

void train_encoder_contrastive(ConvEncoder& enc,
                               const std::vector<std::vector<Tensor>>& identities,
                               const AlignerSpec& spec, const ContrastiveConfig& cfg, Rng& rng);

// Mean within-identity minus mean cross-identity prototype similarity under
// one encoder; positive means the identities separate.
double separability_gap(const FREncoder& enc, const std::vector<std::vector<Tensor>>& identities,
                        const AlignerSpec& spec);

}  // namespace iddm
