#include "iddm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace iddm {

Tensor Tensor::full(int h, int w, int c, double value) {
  Tensor t(h, w, c);
  std::fill(t.data.begin(), t.data.end(), value);
  return t;
}

Tensor Tensor::gaussian(int h, int w, int c, Rng& rng) {
  Tensor t(h, w, c);
  for (double& v : t.data) v = rng.normal();
  return t;
}

std::string Tensor::shape_str() const {
  return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_str() +
                                " vs " + b.shape_str());
  }
}

bool in_unit_range(const Tensor& t) {
  for (double v : t.data) {
    if (!(v >= 0.0 && v <= 1.0)) return false;
  }
  return true;
}

bool all_finite(const Tensor& t) {
  for (double v : t.data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  }
  return m;
}

Tensor clamp01(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
  return out;
}

}  // namespace iddm
