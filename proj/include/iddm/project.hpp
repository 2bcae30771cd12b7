#pragma once

#include "iddm/tensor.hpp"

namespace iddm {

// L-infinity ball projection followed by the [0,1] box projection:
// delta is clamped entrywise to [-eta, eta], then x + delta is clamped to
// [0, 1]. The result always satisfies max|out - x| <= eta exactly.
Tensor project_linf_and_box(const Tensor& x, const Tensor& delta, double eta);

}  // namespace iddm
