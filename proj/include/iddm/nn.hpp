#pragma once

#include <cstddef>
#include <vector>

#include "iddm/tensor.hpp"

// Minimal layer kit shared by the denoiser and the toy face encoders.
// Activations live in HWC layout like Tensor; weights for the 3x3 convolution
// are [out_ch][ky][kx][in_ch] so the innermost loop runs over contiguous
// input channels. Every forward has a matching backward that propagates an
// upstream gradient to the input and, where applicable, accumulates into
// parameter gradients.
namespace iddm::nn {

inline std::size_t conv3x3_weight_count(int in_ch, int out_ch) {
  return static_cast<std::size_t>(out_ch) * 9 * in_ch;
}
inline std::size_t conv3x3_param_count(int in_ch, int out_ch) {
  return conv3x3_weight_count(in_ch, out_ch) + out_ch;
}

// Same-padding 3x3 convolution. `w` holds conv3x3_weight_count doubles,
// followed elsewhere by `out_ch` biases in `b`.
void conv3x3_forward(const double* in, int h, int wd, int in_ch, const double* w,
                     const double* b, int out_ch, double* out);

// grad_in, grad_w, grad_b may each be null to skip that output.
// grad_w/grad_b are accumulated into (not overwritten).
void conv3x3_backward(const double* in, int h, int wd, int in_ch, const double* w, int out_ch,
                      const double* grad_out, double* grad_in, double* grad_w, double* grad_b);

// y = x * sigmoid(x), applied elementwise.
void silu_forward(const double* in, std::size_t n, double* out);
void silu_backward(const double* in, std::size_t n, const double* grad_out, double* grad_in);

// Dense layer: out[j] = sum_i w[j*in_dim + i] * in[i] + b[j].
void linear_forward(const double* in, int in_dim, const double* w, const double* b, int out_dim,
                    double* out);
void linear_backward(const double* in, int in_dim, const double* w, int out_dim,
                     const double* grad_out, double* grad_in, double* grad_w, double* grad_b);

// 2x2 average pooling; height and width must be even.
void avgpool2_forward(const double* in, int h, int wd, int ch, double* out);
void avgpool2_backward(int h, int wd, int ch, const double* grad_out, double* grad_in);

// Bilinear resize with half-pixel centers, differentiable w.r.t. the input.
Tensor bilinear_resize(const Tensor& in, int out_h, int out_w);
Tensor bilinear_resize_vjp(int in_h, int in_w, int ch, const Tensor& grad_out);

// v / ||v||_2. Throws on (numerically) zero norm.
std::vector<double> l2_normalize(const std::vector<double>& v);
// Pullback of l2_normalize: given y = v/||v|| and upstream g, returns
// (g - y * <y, g>) / ||v||.
std::vector<double> l2_normalize_vjp(const std::vector<double>& v, const std::vector<double>& g);

double dot(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace iddm::nn
