#pragma once

#include "iddm/tensor.hpp"

namespace iddm {

// Stabilization constants and window for SSIM, fixed here rather than buried
// in call sites. Peak signal value is 1.0 (images live in [0,1]).
struct SsimOptions {
  int window = 7;              // uniform square window, slid over valid positions
  double c1 = 0.01 * 0.01;     // (k1 * L)^2 with k1 = 0.01, L = 1
  double c2 = 0.03 * 0.03;     // (k2 * L)^2 with k2 = 0.03, L = 1
};

// 10 * log10(1 / MSE) with peak 1.0. Identical inputs give +infinity, the
// "identical" sentinel; report writers render it as the string "identical".
double psnr(const Tensor& a, const Tensor& b);

bool psnr_is_identical_sentinel(double value);

// Mean SSIM over all fully-contained windows and channels.
// Throws when the window does not fit inside the image.
double ssim(const Tensor& a, const Tensor& b, const SsimOptions& opt = {});

}  // namespace iddm
