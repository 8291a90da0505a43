#include <doctest.h>

#include <cmath>
#include <vector>

#include "confield/parallel.hpp"
#include "confield/rng.hpp"

namespace par = confield::par;

TEST_SUITE("parallel") {
  TEST_CASE("pairwise sum matches exact rationals") {
    std::vector<double> x(1000, 0.125);
    CHECK(par::sum_pairwise(x) == 125.0);
    std::vector<double> y;
    for (int i = 1; i <= 100; ++i) y.push_back(static_cast<double>(i));
    CHECK(par::sum_pairwise(y) == 5050.0);
    CHECK(par::sum_pairwise(y.data(), 0) == 0.0);
    CHECK(par::sum_pairwise(y.data(), 1) == 1.0);
  }

  TEST_CASE("map and reduce are identical across thread counts") {
    const std::size_t n = 40000;
    confield::rng::Stream s(99, 0);
    auto work = [&](std::size_t i) {
      const double z = s.normal(i);
      return std::exp(0.3 * z) * std::cos(0.01 * static_cast<double>(i));
    };

    const double serial = par::sum_indexed_serial(n, work);
    std::vector<double> totals;
    for (int threads : {1, 3, 4, 8}) {
      par::set_threads(threads);
      totals.push_back(par::sum_indexed(n, work));
    }
    par::set_threads(0);
    for (double t : totals) CHECK(t == serial);
  }

  TEST_CASE("pairwise tree is insensitive to summation-order traps") {
    // alternating large/small magnitudes: naive running sums differ between
    // foldings, fixing the tree makes the value reproducible
    std::vector<double> x;
    for (int i = 0; i < 4096; ++i) x.push_back((i % 2 == 0) ? 1e16 : 1.0);
    const double a = par::sum_pairwise(x);
    const double b = par::sum_pairwise(x);
    CHECK(a == b);
  }
}
