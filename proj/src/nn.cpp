#include "iddm/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace iddm::nn {

void conv3x3_forward(const double* in, int h, int wd, int in_ch, const double* w,
                     const double* b, int out_ch, double* out) {
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < wd; ++x) {
      double* o = out + (static_cast<std::size_t>(y) * wd + x) * out_ch;
      for (int oc = 0; oc < out_ch; ++oc) o[oc] = b[oc];
      for (int ky = 0; ky < 3; ++ky) {
        int sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          int sx = x + kx - 1;
          if (sx < 0 || sx >= wd) continue;
          const double* src = in + (static_cast<std::size_t>(sy) * wd + sx) * in_ch;
          for (int oc = 0; oc < out_ch; ++oc) {
            const double* wk = w + ((static_cast<std::size_t>(oc) * 3 + ky) * 3 + kx) * in_ch;
            double acc = 0.0;
            for (int ic = 0; ic < in_ch; ++ic) acc += wk[ic] * src[ic];
            o[oc] += acc;
          }
        }
      }
    }
  }
}

void conv3x3_backward(const double* in, int h, int wd, int in_ch, const double* w, int out_ch,
                      const double* grad_out, double* grad_in, double* grad_w, double* grad_b) {
  if (grad_in) {
    std::fill(grad_in, grad_in + static_cast<std::size_t>(h) * wd * in_ch, 0.0);
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < wd; ++x) {
      const double* go = grad_out + (static_cast<std::size_t>(y) * wd + x) * out_ch;
      if (grad_b) {
        for (int oc = 0; oc < out_ch; ++oc) grad_b[oc] += go[oc];
      }
      for (int ky = 0; ky < 3; ++ky) {
        int sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          int sx = x + kx - 1;
          if (sx < 0 || sx >= wd) continue;
          std::size_t src_off = (static_cast<std::size_t>(sy) * wd + sx) * in_ch;
          const double* src = in + src_off;
          for (int oc = 0; oc < out_ch; ++oc) {
            double g = go[oc];
            if (g == 0.0) continue;
            std::size_t w_off = ((static_cast<std::size_t>(oc) * 3 + ky) * 3 + kx) * in_ch;
            if (grad_w) {
              double* gw = grad_w + w_off;
              for (int ic = 0; ic < in_ch; ++ic) gw[ic] += g * src[ic];
            }
            if (grad_in) {
              const double* wk = w + w_off;
              double* gi = grad_in + src_off;
              for (int ic = 0; ic < in_ch; ++ic) gi[ic] += g * wk[ic];
            }
          }
        }
      }
    }
  }
}

void silu_forward(const double* in, std::size_t n, double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    double s = 1.0 / (1.0 + std::exp(-in[i]));
    out[i] = in[i] * s;
  }
}

void silu_backward(const double* in, std::size_t n, const double* grad_out, double* grad_in) {
  for (std::size_t i = 0; i < n; ++i) {
    double s = 1.0 / (1.0 + std::exp(-in[i]));
    grad_in[i] = grad_out[i] * (s + in[i] * s * (1.0 - s));
  }
}

void linear_forward(const double* in, int in_dim, const double* w, const double* b, int out_dim,
                    double* out) {
  for (int j = 0; j < out_dim; ++j) {
    const double* wr = w + static_cast<std::size_t>(j) * in_dim;
    double acc = b[j];
    for (int i = 0; i < in_dim; ++i) acc += wr[i] * in[i];
    out[j] = acc;
  }
}

void linear_backward(const double* in, int in_dim, const double* w, int out_dim,
                     const double* grad_out, double* grad_in, double* grad_w, double* grad_b) {
  if (grad_in) std::fill(grad_in, grad_in + in_dim, 0.0);
  for (int j = 0; j < out_dim; ++j) {
    double g = grad_out[j];
    if (grad_b) grad_b[j] += g;
    const double* wr = w + static_cast<std::size_t>(j) * in_dim;
    if (grad_w) {
      double* gw = grad_w + static_cast<std::size_t>(j) * in_dim;
      for (int i = 0; i < in_dim; ++i) gw[i] += g * in[i];
    }
    if (grad_in) {
      for (int i = 0; i < in_dim; ++i) grad_in[i] += g * wr[i];
    }
  }
}

void avgpool2_forward(const double* in, int h, int wd, int ch, double* out) {
  if (h % 2 != 0 || wd % 2 != 0) {
    throw std::invalid_argument("avgpool2: height and width must be even");
  }
  int oh = h / 2, ow = wd / 2;
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double* o = out + (static_cast<std::size_t>(y) * ow + x) * ch;
      const double* r0 = in + (static_cast<std::size_t>(2 * y) * wd + 2 * x) * ch;
      const double* r1 = in + (static_cast<std::size_t>(2 * y + 1) * wd + 2 * x) * ch;
      for (int c = 0; c < ch; ++c) {
        o[c] = 0.25 * (r0[c] + r0[ch + c] + r1[c] + r1[ch + c]);
      }
    }
  }
}

void avgpool2_backward(int h, int wd, int ch, const double* grad_out, double* grad_in) {
  int oh = h / 2, ow = wd / 2;
  std::fill(grad_in, grad_in + static_cast<std::size_t>(h) * wd * ch, 0.0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      const double* go = grad_out + (static_cast<std::size_t>(y) * ow + x) * ch;
      double* r0 = grad_in + (static_cast<std::size_t>(2 * y) * wd + 2 * x) * ch;
      double* r1 = grad_in + (static_cast<std::size_t>(2 * y + 1) * wd + 2 * x) * ch;
      for (int c = 0; c < ch; ++c) {
        double g = 0.25 * go[c];
        r0[c] += g;
        r0[ch + c] += g;
        r1[c] += g;
        r1[ch + c] += g;
      }
    }
  }
}

namespace {

struct Lerp {
  int lo, hi;
  double w_hi;  // weight of hi; lo gets 1 - w_hi
};

Lerp sample_coord(int out_i, int out_n, int in_n) {
  double src = (out_i + 0.5) * static_cast<double>(in_n) / out_n - 0.5;
  src = std::clamp(src, 0.0, static_cast<double>(in_n - 1));
  int lo = static_cast<int>(std::floor(src));
  int hi = std::min(lo + 1, in_n - 1);
  return {lo, hi, src - lo};
}

}  // namespace

Tensor bilinear_resize(const Tensor& in, int out_h, int out_w) {
  Tensor out(out_h, out_w, in.channels);
  for (int y = 0; y < out_h; ++y) {
    Lerp ly = sample_coord(y, out_h, in.height);
    for (int x = 0; x < out_w; ++x) {
      Lerp lx = sample_coord(x, out_w, in.width);
      for (int c = 0; c < in.channels; ++c) {
        double top = (1.0 - lx.w_hi) * in.at(ly.lo, lx.lo, c) + lx.w_hi * in.at(ly.lo, lx.hi, c);
        double bot = (1.0 - lx.w_hi) * in.at(ly.hi, lx.lo, c) + lx.w_hi * in.at(ly.hi, lx.hi, c);
        out.at(y, x, c) = (1.0 - ly.w_hi) * top + ly.w_hi * bot;
      }
    }
  }
  return out;
}

Tensor bilinear_resize_vjp(int in_h, int in_w, int ch, const Tensor& grad_out) {
  Tensor grad_in(in_h, in_w, ch);
  for (int y = 0; y < grad_out.height; ++y) {
    Lerp ly = sample_coord(y, grad_out.height, in_h);
    for (int x = 0; x < grad_out.width; ++x) {
      Lerp lx = sample_coord(x, grad_out.width, in_w);
      for (int c = 0; c < ch; ++c) {
        double g = grad_out.at(y, x, c);
        grad_in.at(ly.lo, lx.lo, c) += (1.0 - ly.w_hi) * (1.0 - lx.w_hi) * g;
        grad_in.at(ly.lo, lx.hi, c) += (1.0 - ly.w_hi) * lx.w_hi * g;
        grad_in.at(ly.hi, lx.lo, c) += ly.w_hi * (1.0 - lx.w_hi) * g;
        grad_in.at(ly.hi, lx.hi, c) += ly.w_hi * lx.w_hi * g;
      }
    }
  }
  return grad_in;
}

std::vector<double> l2_normalize(const std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  double norm = std::sqrt(sq);
  if (norm < 1e-12) {
    throw std::runtime_error("l2_normalize: zero-norm vector");
  }
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
  return out;
}

std::vector<double> l2_normalize_vjp(const std::vector<double>& v, const std::vector<double>& g) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  double norm = std::sqrt(sq);
  if (norm < 1e-12) {
    throw std::runtime_error("l2_normalize_vjp: zero-norm vector");
  }
  double yg = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) yg += (v[i] / norm) * g[i];
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = (g[i] - (v[i] / norm) * yg) / norm;
  }
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace iddm::nn
