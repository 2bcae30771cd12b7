#include "iddm/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "iddm/nn.hpp"

namespace iddm {

namespace {

// Offsets of each parameter block inside the flat vector.
struct ParamLayout {
  std::size_t conv_in_w, conv_in_b;
  std::size_t time_w, time_b;
  std::size_t label_embed;
  std::vector<std::size_t> hidden_w, hidden_b;
  std::size_t conv_out_w, conv_out_b;
  std::size_t total;
};

ParamLayout make_layout(const ArchDescriptor& a, std::size_t vocab) {
  ParamLayout L;
  std::size_t off = 0;
  L.conv_in_w = off;
  off += nn::conv3x3_weight_count(a.channels, a.hidden);
  L.conv_in_b = off;
  off += a.hidden;
  L.time_w = off;
  off += static_cast<std::size_t>(a.hidden) * a.time_dim;
  L.time_b = off;
  off += a.hidden;
  L.label_embed = off;
  off += vocab * a.hidden;
  for (int i = 0; i < a.hidden_layers; ++i) {
    L.hidden_w.push_back(off);
    off += nn::conv3x3_weight_count(a.hidden, a.hidden);
    L.hidden_b.push_back(off);
    off += a.hidden;
  }
  L.conv_out_w = off;
  off += nn::conv3x3_weight_count(a.hidden, a.channels);
  L.conv_out_b = off;
  off += a.channels;
  L.total = off;
  return L;
}

std::vector<double> time_features(int t, int time_dim) {
  int half = time_dim / 2;
  std::vector<double> feat(time_dim);
  for (int i = 0; i < half; ++i) {
    double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
    feat[2 * i] = std::sin(t * freq);
    feat[2 * i + 1] = std::cos(t * freq);
  }
  return feat;
}

void check_arch(const ArchDescriptor& a) {
  if (a.height < 1 || a.width < 1 || a.channels < 1 || a.hidden < 1 || a.hidden_layers < 0 ||
      a.time_dim < 2 || a.time_dim % 2 != 0) {
    throw std::invalid_argument("invalid arch descriptor");
  }
}

Tensor apply_adapter(const std::function<Tensor(const Tensor&)>& fn, const Tensor& x) {
  return fn ? fn(x) : x;
}

}  // namespace

std::size_t denoiser_param_count(const ArchDescriptor& arch, std::size_t vocab_size) {
  return make_layout(arch, vocab_size).total;
}

DenoiserState init_denoiser(const ArchDescriptor& arch, const std::vector<std::string>& cond_vocab,
                            std::uint64_t seed) {
  check_arch(arch);
  if (std::find(cond_vocab.begin(), cond_vocab.end(), kInstanceLabel) == cond_vocab.end() ||
      std::find(cond_vocab.begin(), cond_vocab.end(), kPriorLabel) == cond_vocab.end()) {
    throw std::invalid_argument("cond_vocab must contain both the instance and prior labels");
  }
  DenoiserState s;
  s.arch = arch;
  s.cond_vocab = cond_vocab;
  ParamLayout L = make_layout(arch, cond_vocab.size());
  s.params.assign(L.total, 0.0);
  Rng rng = Rng::derive(seed, {0x64656e6f69736572ULL});

  auto fill_conv = [&](std::size_t w_off, int in_ch, int out_ch) {
    double scale = std::sqrt(2.0 / (9.0 * in_ch));
    std::size_t n = nn::conv3x3_weight_count(in_ch, out_ch);
    for (std::size_t i = 0; i < n; ++i) s.params[w_off + i] = rng.normal() * scale;
  };
  fill_conv(L.conv_in_w, arch.channels, arch.hidden);
  double tscale = std::sqrt(1.0 / arch.time_dim);
  for (std::size_t i = 0; i < static_cast<std::size_t>(arch.hidden) * arch.time_dim; ++i) {
    s.params[L.time_w + i] = rng.normal() * tscale;
  }
  for (std::size_t i = 0; i < cond_vocab.size() * arch.hidden; ++i) {
    s.params[L.label_embed + i] = rng.normal() * 0.1;
  }
  for (int l = 0; l < arch.hidden_layers; ++l) {
    fill_conv(L.hidden_w[l], arch.hidden, arch.hidden);
  }
  fill_conv(L.conv_out_w, arch.hidden, arch.channels);
  return s;
}

int label_index(const DenoiserState& state, const std::string& label) {
  auto it = std::find(state.cond_vocab.begin(), state.cond_vocab.end(), label);
  if (it == state.cond_vocab.end()) {
    throw std::invalid_argument("unknown conditioning label: " + label);
  }
  return static_cast<int>(it - state.cond_vocab.begin());
}

Tensor denoiser_forward(const DenoiserState& state, const Tensor& z_t, int t,
                        const std::string& label, DenoiserTape* tape) {
  const ArchDescriptor& a = state.arch;
  if (z_t.channels != a.channels) {
    throw std::invalid_argument("denoiser_forward: channel mismatch");
  }
  if (t < 1) {
    throw std::out_of_range("denoiser_forward: timestep must be >= 1");
  }
  int li = label_index(state, label);
  ParamLayout L = make_layout(a, state.cond_vocab.size());
  const double* P = state.params.data();
  const int h = z_t.height, w = z_t.width;

  std::vector<double> feat = time_features(t, a.time_dim);
  std::vector<double> emb_pre(a.hidden);
  nn::linear_forward(feat.data(), a.time_dim, P + L.time_w, P + L.time_b, a.hidden,
                     emb_pre.data());
  std::vector<double> emb(a.hidden);
  nn::silu_forward(emb_pre.data(), emb_pre.size(), emb.data());
  const double* lab = P + L.label_embed + static_cast<std::size_t>(li) * a.hidden;
  for (int i = 0; i < a.hidden; ++i) emb[i] += lab[i];

  Tensor pre(h, w, a.hidden);
  nn::conv3x3_forward(z_t.data.data(), h, w, a.channels, P + L.conv_in_w, P + L.conv_in_b,
                      a.hidden, pre.data.data());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double* px = &pre.at(y, x, 0);
      for (int cck = 0; cck < a.hidden; ++cck) px[cck] += emb[cck];
    }
  }

  std::vector<Tensor> pre_act, post_act;
  pre_act.push_back(std::move(pre));
  Tensor post(h, w, a.hidden);
  nn::silu_forward(pre_act[0].data.data(), pre_act[0].data.size(), post.data.data());
  post_act.push_back(std::move(post));

  for (int l = 0; l < a.hidden_layers; ++l) {
    Tensor p(h, w, a.hidden);
    nn::conv3x3_forward(post_act.back().data.data(), h, w, a.hidden, P + L.hidden_w[l],
                        P + L.hidden_b[l], a.hidden, p.data.data());
    Tensor q(h, w, a.hidden);
    nn::silu_forward(p.data.data(), p.data.size(), q.data.data());
    pre_act.push_back(std::move(p));
    post_act.push_back(std::move(q));
  }

  Tensor eps(h, w, a.channels);
  nn::conv3x3_forward(post_act.back().data.data(), h, w, a.hidden, P + L.conv_out_w,
                      P + L.conv_out_b, a.channels, eps.data.data());

  if (tape) {
    tape->input = z_t;
    tape->time_feat = std::move(feat);
    tape->emb_pre = std::move(emb_pre);
    tape->emb = std::move(emb);
    tape->label = li;
    tape->pre_act = std::move(pre_act);
    tape->post_act = std::move(post_act);
  }
  return eps;
}

void denoiser_backward(const DenoiserState& state, const DenoiserTape& tape,
                       const Tensor& grad_eps, std::vector<double>* grad_params,
                       Tensor* grad_input) {
  const ArchDescriptor& a = state.arch;
  ParamLayout L = make_layout(a, state.cond_vocab.size());
  const double* P = state.params.data();
  double* G = nullptr;
  if (grad_params) {
    if (grad_params->size() != state.params.size()) {
      throw std::invalid_argument("denoiser_backward: grad_params size mismatch");
    }
    G = grad_params->data();
  }
  const int h = tape.input.height, w = tape.input.width;

  // Head.
  Tensor g_post(h, w, a.hidden);
  nn::conv3x3_backward(tape.post_act.back().data.data(), h, w, a.hidden, P + L.conv_out_w,
                       a.channels, grad_eps.data.data(), g_post.data.data(),
                       G ? G + L.conv_out_w : nullptr, G ? G + L.conv_out_b : nullptr);

  // Hidden stack in reverse.
  for (int l = a.hidden_layers - 1; l >= 0; --l) {
    Tensor g_pre(h, w, a.hidden);
    nn::silu_backward(tape.pre_act[l + 1].data.data(), g_pre.data.size(), g_post.data.data(),
                      g_pre.data.data());
    Tensor g_prev(h, w, a.hidden);
    nn::conv3x3_backward(tape.post_act[l].data.data(), h, w, a.hidden, P + L.hidden_w[l],
                         a.hidden, g_pre.data.data(), g_prev.data.data(),
                         G ? G + L.hidden_w[l] : nullptr, G ? G + L.hidden_b[l] : nullptr);
    g_post = std::move(g_prev);
  }

  // Stem: SiLU over (conv_in + emb).
  Tensor g_stem(h, w, a.hidden);
  nn::silu_backward(tape.pre_act[0].data.data(), g_stem.data.size(), g_post.data.data(),
                    g_stem.data.data());

  if (G) {
    // Embedding gradient is the channelwise sum over pixels.
    std::vector<double> g_emb(a.hidden, 0.0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double* px = &g_stem.at(y, x, 0);
        for (int cck = 0; cck < a.hidden; ++cck) g_emb[cck] += px[cck];
      }
    }
    double* g_lab = G + L.label_embed + static_cast<std::size_t>(tape.label) * a.hidden;
    for (int i = 0; i < a.hidden; ++i) g_lab[i] += g_emb[i];
    std::vector<double> g_emb_pre(a.hidden);
    nn::silu_backward(tape.emb_pre.data(), a.hidden, g_emb.data(), g_emb_pre.data());
    nn::linear_backward(tape.time_feat.data(), a.time_dim, P + L.time_w, a.hidden,
                        g_emb_pre.data(), nullptr, G + L.time_w, G + L.time_b);
  }

  if (grad_input) {
    *grad_input = Tensor(h, w, a.channels);
    nn::conv3x3_backward(tape.input.data.data(), h, w, a.channels, P + L.conv_in_w, a.hidden,
                         g_stem.data.data(), grad_input->data.data(),
                         G ? G + L.conv_in_w : nullptr, G ? G + L.conv_in_b : nullptr);
  } else if (G) {
    nn::conv3x3_backward(tape.input.data.data(), h, w, a.channels, P + L.conv_in_w, a.hidden,
                         g_stem.data.data(), nullptr, G + L.conv_in_w, G + L.conv_in_b);
  }
}

const BackendAdapter& identity_adapter() {
  static const BackendAdapter kIdentity{};
  return kIdentity;
}

LossDraw draw_loss_sample(const NoiseSchedule& sched, int h, int w, int c, Rng& rng) {
  LossDraw d;
  d.t = rng.uniform_int(sched.steps()) + 1;
  d.eps = Tensor::gaussian(h, w, c, rng);
  return d;
}

double denoising_loss_sample(const PredictFn& predictor, const Tensor& x0,
                             const std::string& label, const NoiseSchedule& sched, Rng& rng,
                             const BackendAdapter& adapter) {
  Tensor z0 = apply_adapter(adapter.encode, x0);
  LossDraw d = draw_loss_sample(sched, z0.height, z0.width, z0.channels, rng);
  Tensor z_t = forward_noise(z0, d.t, d.eps, sched);
  Tensor eps_hat = predictor(z_t, d.t, label);
  require_same_shape(eps_hat, d.eps, "denoising_loss");
  double loss = 0.0;
  for (std::size_t i = 0; i < d.eps.data.size(); ++i) {
    double r = d.eps.data[i] - eps_hat.data[i];
    loss += r * r;
  }
  return loss;
}

double denoising_loss(const DenoiserState& state, const Tensor& x0, const std::string& label,
                      const NoiseSchedule& sched, Rng& rng, const BackendAdapter& adapter) {
  return denoising_loss_sample(
      [&](const Tensor& z, int t, const std::string& c) { return predict_noise(state, z, t, c); },
      x0, label, sched, rng, adapter);
}

namespace {

struct LossBack {
  double loss;
  Tensor grad_eps;  // dLoss/d eps_hat
  DenoiserTape tape;
  int t;
};

LossBack loss_forward(const DenoiserState& state, const Tensor& x0, const std::string& label,
                      const NoiseSchedule& sched, Rng& rng, const BackendAdapter& adapter) {
  Tensor z0 = apply_adapter(adapter.encode, x0);
  LossDraw d = draw_loss_sample(sched, z0.height, z0.width, z0.channels, rng);
  Tensor z_t = forward_noise(z0, d.t, d.eps, sched);
  LossBack out;
  out.t = d.t;
  Tensor eps_hat = denoiser_forward(state, z_t, d.t, label, &out.tape);
  out.loss = 0.0;
  out.grad_eps = Tensor(eps_hat.height, eps_hat.width, eps_hat.channels);
  for (std::size_t i = 0; i < d.eps.data.size(); ++i) {
    double r = eps_hat.data[i] - d.eps.data[i];
    out.loss += r * r;
    out.grad_eps.data[i] = 2.0 * r;
  }
  return out;
}

}  // namespace

double denoising_loss_param_grad(const DenoiserState& state, const Tensor& x0,
                                 const std::string& label, const NoiseSchedule& sched, Rng& rng,
                                 double scale, std::vector<double>& grad_params,
                                 const BackendAdapter& adapter) {
  LossBack lb = loss_forward(state, x0, label, sched, rng, adapter);
  if (scale != 1.0) {
    for (double& g : lb.grad_eps.data) g *= scale;
  }
  denoiser_backward(state, lb.tape, lb.grad_eps, &grad_params, nullptr);
  return lb.loss;
}

double denoising_loss_input_grad(const DenoiserState& state, const Tensor& x0,
                                 const std::string& label, const NoiseSchedule& sched, Rng& rng,
                                 Tensor& grad_image, const BackendAdapter& adapter) {
  LossBack lb = loss_forward(state, x0, label, sched, rng, adapter);
  Tensor grad_zt;
  denoiser_backward(state, lb.tape, lb.grad_eps, nullptr, &grad_zt);
  double s0 = std::sqrt(sched.alpha_bar(lb.t));
  for (double& g : grad_zt.data) g *= s0;
  grad_image = adapter.encode_vjp ? adapter.encode_vjp(grad_zt) : std::move(grad_zt);
  return lb.loss;
}

Tensor predict_clean(const DenoiserState& state, const Tensor& z_t, int t,
                     const std::string& label, const NoiseSchedule& sched,
                     const BackendAdapter& adapter) {
  return predict_clean_cached(state, z_t, t, label, sched, adapter).x_hat;
}

CleanPrediction predict_clean_cached(const DenoiserState& state, const Tensor& z_t, int t,
                                     const std::string& label, const NoiseSchedule& sched,
                                     const BackendAdapter& adapter) {
  double ab = sched.alpha_bar(t);
  if (ab < kAlphaBarFloor) {
    throw std::domain_error("predict_clean: alpha_bar below floor at t=" + std::to_string(t));
  }
  CleanPrediction cp;
  cp.t = t;
  cp.alpha_bar = ab;
  Tensor eps_hat = denoiser_forward(state, z_t, t, label, &cp.tape);
  double s1 = std::sqrt(1.0 - ab);
  double inv = 1.0 / std::sqrt(ab);
  Tensor zhat0 = z_t;
  for (std::size_t i = 0; i < zhat0.data.size(); ++i) {
    zhat0.data[i] = (z_t.data[i] - s1 * eps_hat.data[i]) * inv;
  }
  cp.x_raw = apply_adapter(adapter.decode, zhat0);
  cp.x_hat = clamp01(cp.x_raw);
  return cp;
}

Tensor predict_clean_vjp_to_zt(const DenoiserState& state, const CleanPrediction& cp,
                               const Tensor& grad_xhat, const BackendAdapter& adapter) {
  Tensor g_raw = grad_xhat;
  for (std::size_t i = 0; i < g_raw.data.size(); ++i) {
    if (cp.x_raw.data[i] <= 0.0 || cp.x_raw.data[i] >= 1.0) g_raw.data[i] = 0.0;
  }
  Tensor g_zhat0 = adapter.decode_vjp ? adapter.decode_vjp(g_raw) : std::move(g_raw);
  double s1 = std::sqrt(1.0 - cp.alpha_bar);
  double inv = 1.0 / std::sqrt(cp.alpha_bar);
  // zhat0 = (z_t - s1 * eps_hat(z_t)) * inv: direct term plus the network path.
  Tensor g_eps = g_zhat0;
  for (double& g : g_eps.data) g *= -s1 * inv;
  Tensor g_zt_net;
  denoiser_backward(state, cp.tape, g_eps, nullptr, &g_zt_net);
  Tensor g_zt = std::move(g_zt_net);
  for (std::size_t i = 0; i < g_zt.data.size(); ++i) {
    g_zt.data[i] += g_zhat0.data[i] * inv;
  }
  return g_zt;
}

std::uint64_t param_checksum(const DenoiserState& state) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (double v : state.params) feed(&v, sizeof(v));
  return h;
}

}  // namespace iddm
