#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "iddm/tensor.hpp"

namespace iddm::testing {

// Central finite differences of a scalar function over a flat buffer.
inline std::vector<double> fd_gradient(const std::function<double()>& f, double* x, std::size_t n,
                                       double h = 1e-5) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) {
    double orig = x[i];
    x[i] = orig + h;
    double up = f();
    x[i] = orig - h;
    double down = f();
    x[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double l2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double relative_error(const std::vector<double>& got, const std::vector<double>& want) {
  double num = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    double d = got[i] - want[i];
    num += d * d;
  }
  double den = l2(want);
  return std::sqrt(num) / (den > 1e-12 ? den : 1.0);
}

}  // namespace iddm::testing
