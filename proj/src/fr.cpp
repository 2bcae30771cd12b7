#include "iddm/fr.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "iddm/nn.hpp"

namespace iddm {

namespace {

struct CropRect {
  int y, x, h, w;
};

CropRect resolve_crop(const Tensor& img, const AlignerSpec& spec) {
  CropRect r{spec.crop_y, spec.crop_x, spec.crop_h, spec.crop_w};
  if (r.h == 0) {
    r = {0, 0, img.height, img.width};
  }
  if (r.y < 0 || r.x < 0 || r.h < 1 || r.w < 1 || r.y + r.h > img.height ||
      r.x + r.w > img.width) {
    throw std::out_of_range("align: crop rectangle outside image bounds");
  }
  return r;
}

Tensor crop(const Tensor& img, const CropRect& r) {
  Tensor out(r.h, r.w, img.channels);
  for (int y = 0; y < r.h; ++y) {
    for (int x = 0; x < r.w; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        out.at(y, x, c) = img.at(r.y + y, r.x + x, c);
      }
    }
  }
  return out;
}

}  // namespace

Tensor align(const Tensor& img, const AlignerSpec& spec, int target_resolution) {
  if (spec.mode == AlignerSpec::Mode::Pluggable) {
    if (!spec.external) {
      throw std::invalid_argument("align: pluggable mode without an external aligner");
    }
    return spec.external(img, target_resolution);
  }
  CropRect r = resolve_crop(img, spec);
  Tensor cropped = crop(img, r);
  if (cropped.height == target_resolution && cropped.width == target_resolution) {
    return cropped;
  }
  return nn::bilinear_resize(cropped, target_resolution, target_resolution);
}

Tensor align_vjp(const Tensor& img, const AlignerSpec& spec, int target_resolution,
                 const Tensor& grad_aligned) {
  if (spec.mode != AlignerSpec::Mode::OracleCrop) {
    throw std::invalid_argument("align_vjp: external aligners are not differentiable");
  }
  CropRect r = resolve_crop(img, spec);
  Tensor grad_crop;
  if (r.h == target_resolution && r.w == target_resolution) {
    grad_crop = grad_aligned;
  } else {
    grad_crop = nn::bilinear_resize_vjp(r.h, r.w, img.channels, grad_aligned);
  }
  Tensor grad_img(img.height, img.width, img.channels);
  for (int y = 0; y < r.h; ++y) {
    for (int x = 0; x < r.w; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        grad_img.at(r.y + y, r.x + x, c) = grad_crop.at(y, x, c);
      }
    }
  }
  return grad_img;
}

IdentityPrototype prototype(const FREncoder& encoder, const std::vector<Tensor>& refs,
                            const AlignerSpec& spec) {
  if (refs.empty()) {
    throw std::invalid_argument("prototype: reference set is empty");
  }
  std::vector<double> mean(encoder.embed_dim(), 0.0);
  for (const Tensor& r : refs) {
    std::vector<double> e = encoder.embed(align(r, spec, encoder.input_resolution()));
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += e[i];
  }
  for (double& v : mean) v /= static_cast<double>(refs.size());
  double norm = std::sqrt(nn::dot(mean, mean));
  if (norm < 1e-9) {
    throw std::runtime_error("prototype: mean embedding has zero norm for encoder " +
                             encoder.name());
  }
  IdentityPrototype p;
  p.encoder_name = encoder.name();
  p.source_count = static_cast<int>(refs.size());
  p.e.resize(mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i) p.e[i] = mean[i] / norm;
  return p;
}

double linkability(const FREncoder& encoder, const Tensor& img, const IdentityPrototype& proto,
                   const AlignerSpec& spec) {
  if (proto.encoder_name != encoder.name()) {
    throw std::invalid_argument("linkability: prototype built for encoder '" +
                                proto.encoder_name + "' used with '" + encoder.name() + "'");
  }
  std::vector<double> e = encoder.embed(align(img, spec, encoder.input_resolution()));
  return nn::dot(e, proto.e);
}

std::vector<double> ensemble_weights(const std::vector<double>& sims, double tau) {
  if (!(tau > 0.0)) {
    throw std::invalid_argument("ensemble_weights: tau must be positive");
  }
  if (sims.empty()) {
    throw std::invalid_argument("ensemble_weights: need at least one similarity");
  }
  double mx = *std::max_element(sims.begin(), sims.end());
  std::vector<double> w(sims.size());
  double total = 0.0;
  for (std::size_t i = 0; i < sims.size(); ++i) {
    w[i] = std::exp((sims[i] - mx) / tau);
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

double ensemble_aggregate(const std::vector<double>& sims, double tau) {
  std::vector<double> w = ensemble_weights(sims, tau);
  double s = 0.0;
  for (std::size_t i = 0; i < sims.size(); ++i) s += w[i] * sims[i];
  return s;
}

namespace {

void check_pairing(const std::vector<const FREncoder*>& encoders,
                   const std::vector<IdentityPrototype>& protos) {
  if (encoders.empty() || encoders.size() != protos.size()) {
    throw std::invalid_argument("id_loss: need one prototype per encoder");
  }
  for (std::size_t m = 0; m < encoders.size(); ++m) {
    if (encoders[m]->name() != protos[m].encoder_name) {
      throw std::invalid_argument("id_loss: prototype/encoder name mismatch at index " +
                                  std::to_string(m));
    }
  }
}

}  // namespace

double id_loss(const std::vector<const FREncoder*>& encoders,
               const std::vector<IdentityPrototype>& protos, const Tensor& img, double tau,
               const AlignerSpec& spec) {
  check_pairing(encoders, protos);
  std::vector<double> sims(encoders.size());
  for (std::size_t m = 0; m < encoders.size(); ++m) {
    sims[m] = linkability(*encoders[m], img, protos[m], spec);
  }
  return 1.0 + ensemble_aggregate(sims, tau);
}

double id_loss_grad(const std::vector<const FREncoder*>& encoders,
                    const std::vector<IdentityPrototype>& protos, const Tensor& img, double tau,
                    const AlignerSpec& spec, Tensor& grad_img, std::vector<double>* sims_out) {
  check_pairing(encoders, protos);
  const std::size_t M = encoders.size();
  std::vector<Tensor> aligned(M);
  std::vector<double> sims(M);
  for (std::size_t m = 0; m < M; ++m) {
    if (!encoders[m]->differentiable()) {
      throw std::invalid_argument("id_loss_grad: encoder '" + encoders[m]->name() +
                                  "' is not differentiable");
    }
    aligned[m] = align(img, spec, encoders[m]->input_resolution());
    sims[m] = nn::dot(encoders[m]->embed(aligned[m]), protos[m].e);
  }
  std::vector<double> w = ensemble_weights(sims, tau);
  double S = 0.0;
  for (std::size_t m = 0; m < M; ++m) S += w[m] * sims[m];

  // dS/ds_m = w_m (1 + (s_m - S)/tau); the weights themselves depend on s.
  grad_img = Tensor(img.height, img.width, img.channels);
  for (std::size_t m = 0; m < M; ++m) {
    double coef = w[m] * (1.0 + (sims[m] - S) / tau);
    std::vector<double> g_embed(protos[m].e.size());
    for (std::size_t i = 0; i < g_embed.size(); ++i) g_embed[i] = coef * protos[m].e[i];
    Tensor g_aligned = encoders[m]->embed_vjp(aligned[m], g_embed);
    Tensor g_img = align_vjp(img, spec, encoders[m]->input_resolution(), g_aligned);
    for (std::size_t i = 0; i < grad_img.data.size(); ++i) grad_img.data[i] += g_img.data[i];
  }
  if (sims_out) *sims_out = std::move(sims);
  return 1.0 + S;
}

// --- ConvEncoder ------------------------------------------------------------

namespace {

struct EncLayout {
  std::size_t c1_w, c1_b, c2_w, c2_b, fc_w, fc_b;
  std::size_t total;
  int flat_dim;
};

EncLayout enc_layout(const EncoderArch& a) {
  EncLayout L;
  std::size_t off = 0;
  L.c1_w = off;
  off += nn::conv3x3_weight_count(a.channels, a.hidden);
  L.c1_b = off;
  off += a.hidden;
  L.c2_w = off;
  off += nn::conv3x3_weight_count(a.hidden, a.hidden);
  L.c2_b = off;
  off += a.hidden;
  int r = a.input_res / 4;
  L.flat_dim = r * r * a.hidden;
  L.fc_w = off;
  off += static_cast<std::size_t>(a.embed_dim) * L.flat_dim;
  L.fc_b = off;
  off += a.embed_dim;
  L.total = off;
  return L;
}

}  // namespace

std::size_t ConvEncoder::param_count(const EncoderArch& arch) { return enc_layout(arch).total; }

ConvEncoder::ConvEncoder(std::string name, EncoderArch arch, std::vector<double> params)
    : name_(std::move(name)), arch_(arch), params_(std::move(params)) {
  if (arch_.input_res % 4 != 0 && arch_.input_res % 2 != 0) {
    throw std::invalid_argument("ConvEncoder: input_res must be divisible by 4");
  }
  if (params_.size() != param_count(arch_)) {
    throw std::invalid_argument("ConvEncoder: parameter count mismatch for " + name_);
  }
}

ConvEncoder ConvEncoder::random_init(std::string name, EncoderArch arch, std::uint64_t seed) {
  EncLayout L = enc_layout(arch);
  std::vector<double> p(L.total, 0.0);
  Rng rng = Rng::derive(seed, {0x656e636f646572ULL});
  double s1 = std::sqrt(2.0 / (9.0 * arch.channels));
  for (std::size_t i = 0; i < nn::conv3x3_weight_count(arch.channels, arch.hidden); ++i) {
    p[L.c1_w + i] = rng.normal() * s1;
  }
  double s2 = std::sqrt(2.0 / (9.0 * arch.hidden));
  for (std::size_t i = 0; i < nn::conv3x3_weight_count(arch.hidden, arch.hidden); ++i) {
    p[L.c2_w + i] = rng.normal() * s2;
  }
  double s3 = std::sqrt(1.0 / L.flat_dim);
  for (std::size_t i = 0; i < static_cast<std::size_t>(arch.embed_dim) * L.flat_dim; ++i) {
    p[L.fc_w + i] = rng.normal() * s3;
  }
  return ConvEncoder(std::move(name), arch, std::move(p));
}

std::vector<double> ConvEncoder::embed_raw(const Tensor& aligned, Tape* tape) const {
  const EncoderArch& a = arch_;
  if (aligned.height != a.input_res || aligned.width != a.input_res ||
      aligned.channels != a.channels) {
    throw std::invalid_argument("ConvEncoder " + name_ + ": expected aligned input " +
                                std::to_string(a.input_res) + "x" + std::to_string(a.input_res));
  }
  EncLayout L = enc_layout(a);
  const double* P = params_.data();
  int r0 = a.input_res;

  Tensor pre1(r0, r0, a.hidden);
  nn::conv3x3_forward(aligned.data.data(), r0, r0, a.channels, P + L.c1_w, P + L.c1_b, a.hidden,
                      pre1.data.data());
  Tensor post1(r0, r0, a.hidden);
  nn::silu_forward(pre1.data.data(), pre1.data.size(), post1.data.data());
  int r1 = r0 / 2;
  Tensor pool1(r1, r1, a.hidden);
  nn::avgpool2_forward(post1.data.data(), r0, r0, a.hidden, pool1.data.data());

  Tensor pre2(r1, r1, a.hidden);
  nn::conv3x3_forward(pool1.data.data(), r1, r1, a.hidden, P + L.c2_w, P + L.c2_b, a.hidden,
                      pre2.data.data());
  Tensor post2(r1, r1, a.hidden);
  nn::silu_forward(pre2.data.data(), pre2.data.size(), post2.data.data());
  int r2 = r1 / 2;
  Tensor pool2(r2, r2, a.hidden);
  nn::avgpool2_forward(post2.data.data(), r1, r1, a.hidden, pool2.data.data());

  std::vector<double> raw(a.embed_dim);
  nn::linear_forward(pool2.data.data(), L.flat_dim, P + L.fc_w, P + L.fc_b, a.embed_dim,
                     raw.data());

  if (tape) {
    tape->input = aligned;
    tape->pre = {std::move(pre1), std::move(pre2)};
    tape->post = {std::move(post1), std::move(post2)};
    tape->flat = pool2.data;
    tape->pooled = {std::move(pool1), std::move(pool2)};
    tape->raw = raw;
  }
  return raw;
}

void ConvEncoder::backward_raw(const Tape& tape, const std::vector<double>& grad_raw,
                               std::vector<double>* grad_params, Tensor* grad_input) const {
  const EncoderArch& a = arch_;
  EncLayout L = enc_layout(a);
  const double* P = params_.data();
  double* G = nullptr;
  if (grad_params) {
    if (grad_params->size() != params_.size()) {
      throw std::invalid_argument("ConvEncoder::backward_raw: grad size mismatch");
    }
    G = grad_params->data();
  }
  int r0 = a.input_res, r1 = r0 / 2, r2 = r1 / 2;

  std::vector<double> g_flat(L.flat_dim);
  nn::linear_backward(tape.flat.data(), L.flat_dim, P + L.fc_w, a.embed_dim, grad_raw.data(),
                      g_flat.data(), G ? G + L.fc_w : nullptr, G ? G + L.fc_b : nullptr);

  Tensor g_post2(r1, r1, a.hidden);
  {
    Tensor g_pool2(r2, r2, a.hidden);
    g_pool2.data = g_flat;
    nn::avgpool2_backward(r1, r1, a.hidden, g_pool2.data.data(), g_post2.data.data());
  }
  Tensor g_pre2(r1, r1, a.hidden);
  nn::silu_backward(tape.pre[1].data.data(), g_pre2.data.size(), g_post2.data.data(),
                    g_pre2.data.data());
  Tensor g_pool1(r1, r1, a.hidden);
  nn::conv3x3_backward(tape.pooled[0].data.data(), r1, r1, a.hidden, P + L.c2_w, a.hidden,
                       g_pre2.data.data(), g_pool1.data.data(), G ? G + L.c2_w : nullptr,
                       G ? G + L.c2_b : nullptr);

  Tensor g_post1(r0, r0, a.hidden);
  nn::avgpool2_backward(r0, r0, a.hidden, g_pool1.data.data(), g_post1.data.data());
  Tensor g_pre1(r0, r0, a.hidden);
  nn::silu_backward(tape.pre[0].data.data(), g_pre1.data.size(), g_post1.data.data(),
                    g_pre1.data.data());
  if (grad_input) {
    *grad_input = Tensor(r0, r0, a.channels);
    nn::conv3x3_backward(tape.input.data.data(), r0, r0, a.channels, P + L.c1_w, a.hidden,
                         g_pre1.data.data(), grad_input->data.data(), G ? G + L.c1_w : nullptr,
                         G ? G + L.c1_b : nullptr);
  } else if (G) {
    nn::conv3x3_backward(tape.input.data.data(), r0, r0, a.channels, P + L.c1_w, a.hidden,
                         g_pre1.data.data(), nullptr, G + L.c1_w, G + L.c1_b);
  }
}

std::vector<double> ConvEncoder::embed(const Tensor& aligned) const {
  return nn::l2_normalize(embed_raw(aligned, nullptr));
}

Tensor ConvEncoder::embed_vjp(const Tensor& aligned, const std::vector<double>& grad_embed) const {
  Tape tape;
  embed_raw(aligned, &tape);
  std::vector<double> g_raw = nn::l2_normalize_vjp(tape.raw, grad_embed);
  Tensor g_in;
  backward_raw(tape, g_raw, nullptr, &g_in);
  return g_in;
}

// --- registry ----------------------------------------------------------------

std::vector<const FREncoder*> EncoderRegistry::surrogates() const {
  std::vector<const FREncoder*> out;
  for (const auto& e : encoders) {
    if (e->name().rfind(kSurrogatePrefix, 0) == 0) out.push_back(e.get());
  }
  return out;
}

std::vector<const FREncoder*> EncoderRegistry::evaluators() const {
  std::vector<const FREncoder*> out;
  for (const auto& e : encoders) {
    if (e->name().rfind(kEvalPrefix, 0) == 0) out.push_back(e.get());
  }
  return out;
}

const ConvEncoder* EncoderRegistry::find(const std::string& name) const {
  for (const auto& e : encoders) {
    if (e->name() == name) return e.get();
  }
  return nullptr;
}

EncoderRegistry make_default_registry(std::uint64_t seed) {
  struct Spec {
    const char* name;
    EncoderArch arch;
  };
  // Mirrors the 4-surrogate / 3-evaluation split; evaluation encoders use
  // different seeds and shapes and never enter the optimization loss.
  const Spec specs[] = {
      {"surrogate/cnn16a", {16, 3, 10, 24}}, {"surrogate/cnn16b", {16, 3, 14, 32}},
      {"surrogate/cnn24a", {24, 3, 8, 24}},  {"surrogate/cnn24b", {24, 3, 12, 32}},
      {"eval/cnn16x", {16, 3, 12, 28}},      {"eval/cnn20x", {20, 3, 10, 32}},
      {"eval/cnn24x", {24, 3, 14, 24}},
  };
  EncoderRegistry reg;
  std::uint64_t i = 0;
  for (const Spec& s : specs) {
    reg.encoders.push_back(std::make_unique<ConvEncoder>(
        ConvEncoder::random_init(s.name, s.arch, Rng::derive(seed, {0xf4, i}).next_u64())));
    ++i;
  }
  return reg;
}

void train_encoder_contrastive(ConvEncoder& enc,
                               const std::vector<std::vector<Tensor>>& identities,
                               const AlignerSpec& spec, const ContrastiveConfig& cfg, Rng& rng) {
  if (identities.size() < 2) {
    throw std::invalid_argument("train_encoder_contrastive: need at least two identities");
  }
  const int res = enc.input_resolution();
  std::vector<double> grad(enc.params().size());

  auto embed_unit = [&](const Tensor& img, ConvEncoder::Tape& tape) {
    return nn::l2_normalize(enc.embed_raw(align(img, spec, res), &tape));
  };
  auto backprop_unit = [&](const ConvEncoder::Tape& tape, const std::vector<double>& g_unit) {
    std::vector<double> g_raw = nn::l2_normalize_vjp(tape.raw, g_unit);
    enc.backward_raw(tape, g_raw, &grad, nullptr);
  };

  for (int step = 0; step < cfg.steps; ++step) {
    int ia = rng.uniform_int(static_cast<int>(identities.size()));
    int ib = rng.uniform_int(static_cast<int>(identities.size()) - 1);
    if (ib >= ia) ++ib;
    const auto& pos = identities[ia];
    const auto& neg = identities[ib];
    const Tensor& anchor = pos[rng.uniform_int(static_cast<int>(pos.size()))];
    const Tensor& positive = pos[rng.uniform_int(static_cast<int>(pos.size()))];
    const Tensor& negative = neg[rng.uniform_int(static_cast<int>(neg.size()))];

    ConvEncoder::Tape ta, tp, tn;
    std::vector<double> ea = embed_unit(anchor, ta);
    std::vector<double> ep = embed_unit(positive, tp);
    std::vector<double> en = embed_unit(negative, tn);
    double cos_neg = nn::dot(ea, en);

    // L = (1 - cos_pos) + max(0, cos_neg - margin)
    std::fill(grad.begin(), grad.end(), 0.0);
    std::vector<double> ga(ea.size(), 0.0), gp(ea.size(), 0.0), gn(ea.size(), 0.0);
    for (std::size_t i = 0; i < ea.size(); ++i) {
      ga[i] -= ep[i];
      gp[i] -= ea[i];
    }
    if (cos_neg > cfg.margin) {
      for (std::size_t i = 0; i < ea.size(); ++i) {
        ga[i] += en[i];
        gn[i] += ea[i];
      }
    }
    backprop_unit(ta, ga);
    backprop_unit(tp, gp);
    backprop_unit(tn, gn);

    double lr = cfg.learning_rate;
    std::vector<double>& P = enc.mutable_params();
    for (std::size_t i = 0; i < P.size(); ++i) P[i] -= lr * grad[i];
  }
}

double separability_gap(const FREncoder& enc, const std::vector<std::vector<Tensor>>& identities,
                        const AlignerSpec& spec) {
  const int n = static_cast<int>(identities.size());
  std::vector<std::vector<std::vector<double>>> embeds(n);
  std::vector<IdentityPrototype> protos;
  for (int i = 0; i < n; ++i) {
    protos.push_back(prototype(enc, identities[i], spec));
    for (const Tensor& img : identities[i]) {
      embeds[i].push_back(enc.embed(align(img, spec, enc.input_resolution())));
    }
  }
  double within = 0.0, cross = 0.0;
  int n_within = 0, n_cross = 0;
  for (int i = 0; i < n; ++i) {
    for (const auto& e : embeds[i]) {
      for (int j = 0; j < n; ++j) {
        double s = nn::dot(e, protos[j].e);
        if (j == i) {
          within += s;
          ++n_within;
        } else {
          cross += s;
          ++n_cross;
        }
      }
    }
  }
  return within / n_within - cross / n_cross;
}

}  // namespace iddm
