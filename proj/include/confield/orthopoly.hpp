#pragma once

#include <cmath>
#include <numbers>

namespace confield::poly {

inline double legendre_p(int l, double x) {
  if (l == 0) return 1.0;
  double pm = 1.0, p = x;
  for (int k = 2; k <= l; ++k) {
    double pn = ((2.0 * k - 1.0) * x * p - (k - 1.0) * pm) / k;
    pm = p;
    p = pn;
  }
  return p;
}

inline double gegenbauer_c(int j, double alpha, double x) {
  if (j == 0) return 1.0;
  double cm = 1.0, c = 2.0 * alpha * x;
  for (int k = 1; k < j; ++k) {
    double cn = (2.0 * (k + alpha) * x * c - (k + 2.0 * alpha - 1.0) * cm) /
                (k + 1.0);
    cm = c;
    c = cn;
  }
  return c;
}

// int_{-1}^{1} (1-x^2)^{alpha-1/2} C_j^{(alpha)}(x)^2 dx
inline double gegenbauer_norm(int j, double alpha) {
  double h = std::numbers::pi *
             std::exp((1.0 - 2.0 * alpha) * std::numbers::ln2 +
                      std::lgamma(2.0 * alpha) - 2.0 * std::lgamma(alpha)) /
             alpha;
  for (int i = 0; i < j; ++i)
    h *= (i + 2.0 * alpha) * (i + alpha) / ((i + 1.0) * (i + 1.0 + alpha));
  return h;
}

}  // namespace confield::poly
