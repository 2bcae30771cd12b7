#include "iddm/quality.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace iddm {

double psnr(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "psnr");
  double sq = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    double d = a.data[i] - b.data[i];
    sq += d * d;
  }
  double mse = sq / static_cast<double>(a.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

bool psnr_is_identical_sentinel(double value) { return std::isinf(value) && value > 0.0; }

double ssim(const Tensor& a, const Tensor& b, const SsimOptions& opt) {
  require_same_shape(a, b, "ssim");
  const int w = opt.window;
  if (w < 1 || a.height < w || a.width < w) {
    throw std::invalid_argument("ssim: image smaller than window");
  }
  const double n = static_cast<double>(w) * w;
  double total = 0.0;
  std::size_t count = 0;
  for (int c = 0; c < a.channels; ++c) {
    for (int y = 0; y + w <= a.height; ++y) {
      for (int x = 0; x + w <= a.width; ++x) {
        double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
        for (int dy = 0; dy < w; ++dy) {
          for (int dx = 0; dx < w; ++dx) {
            double va = a.at(y + dy, x + dx, c);
            double vb = b.at(y + dy, x + dx, c);
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
          }
        }
        double mu_a = sa / n;
        double mu_b = sb / n;
        double var_a = saa / n - mu_a * mu_a;
        double var_b = sbb / n - mu_b * mu_b;
        double cov = sab / n - mu_a * mu_b;
        double num = (2.0 * mu_a * mu_b + opt.c1) * (2.0 * cov + opt.c2);
        double den = (mu_a * mu_a + mu_b * mu_b + opt.c1) * (var_a + var_b + opt.c2);
        total += num / den;
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace iddm
