#include "iddm/project.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace iddm {

namespace {

// Per-entry projection. The represented difference out - x must satisfy
// |out - x| <= eta bit-exactly, and re-projecting the result must reproduce
// it, so after the clamps the value is nudged onto the nearest fixed point of
// the projection map (the naive x + clamp(delta) can overshoot by one ulp).
double project_entry(double x, double delta, double eta) {
  auto once = [x, eta](double d) {
    d = std::clamp(d, -eta, eta);
    double v = std::clamp(x + d, 0.0, 1.0);
    while (v - x > eta || x - v > eta) v = std::nextafter(v, x);
    return v;
  };
  double v = once(delta);
  for (int i = 0; i < 4; ++i) {
    double u = once(v - x);
    if (u == v) break;
    v = u;
  }
  return v;
}

}  // namespace

Tensor project_linf_and_box(const Tensor& x, const Tensor& delta, double eta) {
  require_same_shape(x, delta, "project_linf_and_box");
  if (!(eta >= 0.0)) {
    throw std::invalid_argument("project_linf_and_box: eta must be non-negative");
  }
  Tensor out = x;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = project_entry(x.data[i], delta.data[i], eta);
  }
  return out;
}

}  // namespace iddm
