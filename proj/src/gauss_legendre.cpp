#include "confield/gauss_legendre.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace confield::quad {

Rule gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: need n >= 1");
  Rule r;
  r.x.resize(n);
  r.w.resize(n);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    // Tricomi-style initial guess, then Newton on P_n
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) {
        // one more polish step, then stop
        if (std::abs(dx) == 0.0 || iter > 0) break;
      }
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    r.x[i] = -x;
    r.w[i] = w;
    r.x[n - 1 - i] = x;
    r.w[n - 1 - i] = w;
  }
  if (n % 2 == 1) r.x[n / 2] = 0.0;
  return r;
}

Rule gauss_chebyshev_second(int n) {
  if (n < 1) throw std::invalid_argument("gauss_chebyshev_second: need n >= 1");
  Rule r;
  r.x.resize(n);
  r.w.resize(n);
  for (int i = 0; i < n; ++i) {
    const double th = std::numbers::pi * (i + 1.0) / (n + 1.0);
    const double s = std::sin(th);
    r.x[n - 1 - i] = std::cos(th);
    r.w[n - 1 - i] = std::numbers::pi / (n + 1.0) * s * s;
  }
  return r;
}

}  // namespace confield::quad
