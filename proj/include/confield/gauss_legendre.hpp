#pragma once

#include <vector>

namespace confield::quad {

// Nodes and weights on (-1, 1); exact for polynomials of degree <= 2n-1.
struct Rule {
  std::vector<double> x;
  std::vector<double> w;
};

Rule gauss_legendre(int n);

// Chebyshev rule for the weight sqrt(1-t^2) on (-1, 1); exact for polynomial
// integrands of degree <= 2n-1 against that weight.
Rule gauss_chebyshev_second(int n);

}  // namespace confield::quad
