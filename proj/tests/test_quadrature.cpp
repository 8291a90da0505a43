#include <doctest.h>

#include <cmath>
#include <numbers>

#include "confield/gauss_legendre.hpp"

using confield::quad::gauss_chebyshev_second;
using confield::quad::gauss_legendre;

TEST_SUITE("quadrature") {
  TEST_CASE("closed-form nodes for small orders") {
    auto r2 = gauss_legendre(2);
    CHECK(r2.x[0] == doctest::Approx(-1.0 / std::sqrt(3.0)).epsilon(1e-15));
    CHECK(r2.x[1] == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-15));
    CHECK(r2.w[0] == doctest::Approx(1.0).epsilon(1e-15));

    auto r3 = gauss_legendre(3);
    CHECK(r3.x[1] == 0.0);
    CHECK(r3.x[2] == doctest::Approx(std::sqrt(0.6)).epsilon(1e-14));
    CHECK(r3.w[1] == doctest::Approx(8.0 / 9.0).epsilon(1e-14));
    CHECK(r3.w[2] == doctest::Approx(5.0 / 9.0).epsilon(1e-14));

    auto r5 = gauss_legendre(5);
    const double s70 = std::sqrt(70.0);
    CHECK(r5.x[3] ==
          doctest::Approx(std::sqrt(5.0 - 2.0 * std::sqrt(10.0 / 7.0)) / 3.0)
              .epsilon(1e-14));
    CHECK(r5.x[4] ==
          doctest::Approx(std::sqrt(5.0 + 2.0 * std::sqrt(10.0 / 7.0)) / 3.0)
              .epsilon(1e-14));
    CHECK(r5.w[2] == doctest::Approx(128.0 / 225.0).epsilon(1e-14));
    CHECK(r5.w[3] == doctest::Approx((322.0 + 13.0 * s70) / 900.0).epsilon(1e-14));
    CHECK(r5.w[4] == doctest::Approx((322.0 - 13.0 * s70) / 900.0).epsilon(1e-14));
  }

  TEST_CASE("moments are exact up to degree 2n-1") {
    for (int n : {4, 9, 16, 33, 64}) {
      auto r = gauss_legendre(n);
      for (int k = 0; k <= 2 * n - 1; ++k) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += r.w[i] * std::pow(r.x[i], k);
        const double exact = (k % 2 == 0) ? 2.0 / (k + 1) : 0.0;
        CHECK(std::abs(s - exact) < 2e-13);
      }
    }
  }

  TEST_CASE("chebyshev second kind integrates sqrt-weight moments") {
    for (int n : {5, 12, 31}) {
      auto r = gauss_chebyshev_second(n);
      for (int k = 0; k <= 2 * n - 1; ++k) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += r.w[i] * std::pow(r.x[i], k);
        // int_{-1}^{1} t^k sqrt(1-t^2) dt
        double exact = 0.0;
        if (k % 2 == 0) {
          // pi/2 * (k-1)!! / (k+2)!!  with the double-factorial convention
          exact = std::numbers::pi / 2.0;
          for (int j = 2; j <= k; j += 2)
            exact *= static_cast<double>(j - 1) / static_cast<double>(j + 2);
        }
        CHECK(std::abs(s - exact) < 2e-13);
      }
    }
  }
}
