#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "iddm/rng.hpp"

namespace iddm {

// Dense row-major H x W x C array of doubles. Images keep every value in
// [0, 1]; noise fields, latents and gradients reuse the same container
// without the range invariant.
struct Tensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int h, int w, int c)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, 0.0) {}

  static Tensor full(int h, int w, int c, double value);
  static Tensor gaussian(int h, int w, int c, Rng& rng);

  double& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Tensor& other) const {
    return height == other.height && width == other.width && channels == other.channels;
  }
  std::string shape_str() const;
};

// Throws std::invalid_argument when shapes differ; `what` names the operands.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

// True when every entry lies in [0, 1].
bool in_unit_range(const Tensor& t);

bool all_finite(const Tensor& t);

double max_abs_diff(const Tensor& a, const Tensor& b);

Tensor clamp01(const Tensor& t);

}  // namespace iddm
