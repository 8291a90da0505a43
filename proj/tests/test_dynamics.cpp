#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "confield/dynamics.hpp"
#include "confield/field.hpp"
#include "confield/geometry.hpp"
#include "confield/measure.hpp"
#include "confield/parallel.hpp"
#include "confield/rng.hpp"
#include "confield/spectral.hpp"

using namespace confield;
using dynamics::AdditiveFunctional;
using dynamics::BrownianPath;
using dynamics::RandomGjmsOperator;
using field::FieldSample;
using field::FieldSampler;
using geom::build_manifold;
using geom::ManifoldDescriptor;
using geom::ManifoldKind;
using geom::Point;
using measure::Flavor;
using measure::GmcBuilder;
using measure::Scheme;

namespace {

constexpr double kPi = std::numbers::pi;

ManifoldDescriptor sphere2_desc(double r = 1.0) {
  ManifoldDescriptor d;
  d.kind = ManifoldKind::Sphere;
  d.dimension = 2;
  d.radius = r;
  return d;
}

ManifoldDescriptor sphere4_desc(double r = 1.0) {
  ManifoldDescriptor d;
  d.kind = ManifoldKind::Sphere;
  d.dimension = 4;
  d.radius = r;
  return d;
}

ManifoldDescriptor torus2_desc(double l0, double l1) {
  ManifoldDescriptor d;
  d.kind = ManifoldKind::FlatTorus;
  d.dimension = 2;
  d.side_lengths = {l0, l1};
  return d;
}

Point torus_point(double a, double b) {
  Point p;
  p.dim = 2;
  p.c[0] = a;
  p.c[1] = b;
  return p;
}

Point sphere_point(double theta, double phi) {
  Point p;
  p.dim = 2;
  p.c[0] = theta;
  p.c[1] = phi;
  return p;
}

// Independent oracle for the time-integrated torus heat kernel: each
// Gaussian image integrates in closed form, int_0^t e^{-r^2/4s}/(4 pi s) ds
// = E1(r^2/4t)/(4 pi), and the lattice sum converges absolutely for any t.
// E1 comes from the standard library here (expint is Ei, E1(x) = -Ei(-x)).
double torus_kernel_oracle(const geom::ManifoldModel& m, const Point& x,
                           const Point& y, double t) {
  const auto sides = m.descriptor().side_lengths;
  const double d0 = std::remainder(x.c[0] - y.c[0], sides[0]);
  const double d1 = std::remainder(x.c[1] - y.c[1], sides[1]);
  const double reach = std::sqrt(4.0 * t * 45.0);
  const int m0 = int(std::ceil(reach / sides[0])) + 1;
  const int m1 = int(std::ceil(reach / sides[1])) + 1;
  double acc = 0.0;
  for (int i = -m0; i <= m0; ++i)
    for (int j = -m1; j <= m1; ++j) {
      const double rx = d0 + i * sides[0];
      const double ry = d1 + j * sides[1];
      const double arg = (rx * rx + ry * ry) / (4.0 * t);
      if (arg > 700.0) continue;
      acc += -std::expint(-arg) / (4.0 * kPi);
    }
  return acc;
}

}  // namespace

TEST_SUITE("dynamics") {
  TEST_CASE("torus increments carry the generator-delta variance") {
    auto t2 = build_manifold(torus2_desc(1.0, 1.3));
    const Point x0 = torus_point(0.2, 0.7);
    const double horizon = 0.25, dt = 0.05;

    const int n_paths = 4000;
    std::vector<double> sq(n_paths);
    par::map_index(sq.size(), [&](std::size_t i) {
      const auto path = dynamics::simulate_bm(*t2, x0, horizon, dt, 42, i);
      const auto& last = path.unwrapped.back();
      const double a = last.c[0] - x0.c[0];
      const double b = last.c[1] - x0.c[1];
      sq[i] = a * a + b * b;
    });
    const double mean = par::sum_pairwise(sq) / n_paths;
    // |X_t - X_0|^2 has mean 4t and standard error 4t sqrt(2/N) per axis pair
    CHECK(std::abs(mean - 4.0 * horizon) < 0.05 * 4.0 * horizon);

    const auto path = dynamics::simulate_bm(*t2, x0, horizon, dt, 42, 7);
    CHECK(path.steps() == 5);
    CHECK(path.positions.size() == 6);
    CHECK(path.unwrapped.size() == 6);
    for (const auto& p : path.positions) {
      CHECK(p.c[0] >= 0.0);
      CHECK(p.c[0] < 1.0);
      CHECK(p.c[1] >= 0.0);
      CHECK(p.c[1] < 1.3);
    }
    const auto again = dynamics::simulate_bm(*t2, x0, horizon, dt, 42, 7);
    for (std::size_t i = 0; i < path.positions.size(); ++i) {
      CHECK(path.positions[i].c[0] == again.positions[i].c[0]);
      CHECK(path.positions[i].c[1] == again.positions[i].c[1]);
    }

    CHECK_THROWS_AS(dynamics::simulate_bm(*t2, x0, 0.25, 0.051, 1, 0),
                    std::invalid_argument);
  }

  TEST_CASE("sphere walk takes geodesic steps of the sampled length") {
    auto s2 = build_manifold(sphere2_desc());
    const Point x0 = sphere_point(1.1, 0.4);
    const double dt = 0.01;
    const auto path = dynamics::simulate_bm(*s2, x0, 20.0, dt, 5, 3);

    // every step length^2 / (4 dt) averages to 1 (chi-square with 2 dof
    // halved); the geodesic step keeps lengths exact, so this is sharp
    std::vector<double> ratios(path.steps());
    for (std::size_t i = 0; i < path.steps(); ++i) {
      const double d = s2->distance(path.positions[i], path.positions[i + 1]);
      ratios[i] = d * d / (4.0 * dt);
    }
    const double mean = par::sum_pairwise(ratios) / double(ratios.size());
    CHECK(std::abs(mean - 1.0) < 3.0 / std::sqrt(double(ratios.size())));
    for (const auto& p : path.positions) {
      CHECK(p.c[0] >= 0.0);
      CHECK(p.c[0] <= kPi);
    }
  }

  TEST_CASE("sphere occupation spreads uniformly over long runs") {
    auto s2 = build_manifold(sphere2_desc());
    const Point x0 = sphere_point(0.3, 0.0);
    const auto path = dynamics::simulate_bm(*s2, x0, 200.0, 0.01, 99, 0);

    // thin to roughly independent samples, bin by equal-area bands in
    // cos(colatitude), and compare against the uniform law
    const std::size_t thin = 50;
    std::array<int, 8> counts{};
    int total = 0;
    for (std::size_t i = thin; i < path.positions.size(); i += thin) {
      const double z = std::cos(path.positions[i].c[0]);
      auto bin = static_cast<std::size_t>((z + 1.0) / 0.25);
      if (bin > 7) bin = 7;
      ++counts[bin];
      ++total;
    }
    const double expected = double(total) / 8.0;
    double chi2 = 0.0;
    for (const int c : counts)
      chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < 35.0);
  }

  TEST_CASE("sphere walk matches the exact semigroup under step halving") {
    auto s2 = build_manifold(sphere2_desc());
    const Point x0 = sphere_point(0.8, 0.3);
    const double horizon = 0.5;
    // E[Y(B_t)] = e^{-2t} Y(x0) for a degree-one harmonic under generator
    // Delta; estimate at two step sizes and compare both to the closed form
    const auto estimate = [&](double dt, std::uint64_t seed) {
      const int n = 3000;
      std::vector<double> vals(n);
      par::map_index(vals.size(), [&](std::size_t i) {
        const auto path = dynamics::simulate_bm(*s2, x0, horizon, dt, seed, i);
        vals[i] = std::cos(path.positions.back().c[0]);
      });
      return par::sum_pairwise(vals) / n;
    };
    const double closed = std::exp(-2.0 * horizon) * std::cos(x0.c[0]);
    const double coarse = estimate(0.02, 21);
    const double fine = estimate(0.01, 22);
    CHECK(std::abs(coarse - closed) < 0.05);
    CHECK(std::abs(fine - closed) < 0.05);
    CHECK(std::abs(coarse - fine) < 0.05);
  }

  TEST_CASE("four-sphere walk stays on the chart with exact step lengths") {
    auto s4 = build_manifold(sphere4_desc());
    Point x0;
    x0.dim = 4;
    x0.c[0] = 1.2;
    x0.c[1] = 0.9;
    x0.c[2] = 1.4;
    x0.c[3] = 0.5;
    const double dt = 0.005;
    const auto path = dynamics::simulate_bm(*s4, x0, 2.0, dt, 8, 1);
    std::vector<double> ratios(path.steps());
    for (std::size_t i = 0; i < path.steps(); ++i) {
      const double d = s4->distance(path.positions[i], path.positions[i + 1]);
      ratios[i] = d * d / (8.0 * dt);  // 2 dt per tangent direction, 4 dims
    }
    const double mean = par::sum_pairwise(ratios) / double(ratios.size());
    CHECK(std::abs(mean - 1.0) < 4.0 / std::sqrt(2.0 * double(ratios.size())));
    for (const auto& p : path.positions)
      for (int c = 0; c < 3; ++c) {
        CHECK(p.c[c] >= 0.0);
        CHECK(p.c[c] <= kPi);
      }
  }

  TEST_CASE("additive functional is the clock at gamma zero") {
    auto t2 = build_manifold(torus2_desc(1.0, 1.3));
    FieldSampler sampler(t2, 3);
    const auto path =
        dynamics::simulate_bm(*t2, torus_point(0.1, 0.2), 0.5, 0.01, 3, 0);
    const auto s = sampler.sample(17, 0);

    const auto clock = dynamics::additive_functional(sampler, path, s, 0.0);
    CHECK_FALSE(clock.beyond_dirichlet_regime);
    for (std::size_t i = 0; i < clock.values.size(); ++i)
      CHECK(clock.values[i] == doctest::Approx(0.01 * double(i)).epsilon(1e-12));

    const auto active = dynamics::additive_functional(sampler, path, s, 1.0);
    CHECK_FALSE(active.beyond_dirichlet_regime);
    CHECK(active.values.front() == 0.0);
    for (std::size_t i = 1; i < active.values.size(); ++i)
      CHECK(active.values[i] > active.values[i - 1]);

    const auto hot = dynamics::additive_functional(sampler, path, s, 2.5);
    CHECK(hot.beyond_dirichlet_regime);

    CHECK_THROWS_AS(dynamics::additive_functional(
                        sampler, path, s, 1.0,
                        int(sampler.coefficient_count()) + 1),
                    std::invalid_argument);
  }

  TEST_CASE("additive functional integrates the chaos density") {
    auto t2 = build_manifold(torus2_desc(1.0, 1.3));
    FieldSampler sampler(t2, 3);
    const auto s = sampler.sample(29, 4);
    const double gamma = 0.8;

    // a single step: the trapezoid is half the sum of endpoint densities
    const auto path =
        dynamics::simulate_bm(*t2, torus_point(0.31, 0.55), 0.02, 0.02, 9, 2);
    const auto a = dynamics::additive_functional(sampler, path, s, gamma);
    const auto density = [&](const Point& x) {
      return std::exp(gamma * sampler.evaluate(s, x) -
                      0.5 * gamma * gamma * sampler.covariance_diagonal(x));
    };
    const double expected =
        0.5 * (density(path.positions[0]) + density(path.positions[1])) * 0.02;
    CHECK(a.values[1] == doctest::Approx(expected).epsilon(1e-10));
  }

  TEST_CASE("time change inverts the clock") {
    auto t2 = build_manifold(torus2_desc(1.0, 1.3));
    FieldSampler sampler(t2, 3);
    // dyadic step: the gamma-zero clock is then exact in floating point
    const double dt = 0.015625;
    const auto path =
        dynamics::simulate_bm(*t2, torus_point(0.4, 0.9), 0.5, dt, 31, 1);
    const auto s = sampler.sample(31, 0);

    SUBCASE("gamma zero returns the driving path") {
      const auto clock = dynamics::additive_functional(sampler, path, s, 0.0);
      const auto lbm = dynamics::time_change(*t2, path, clock, 0.5, dt);
      CHECK_FALSE(lbm.truncated);
      REQUIRE(lbm.positions.size() == path.positions.size());
      for (std::size_t i = 0; i < path.positions.size(); ++i)
        CHECK(t2->distance(lbm.positions[i], path.positions[i]) < 1e-9);
      CHECK(lbm.reached == doctest::Approx(0.5));
    }

    SUBCASE("horizon beyond the functional total is flagged") {
      const auto a = dynamics::additive_functional(sampler, path, s, 1.0);
      const auto lbm =
          dynamics::time_change(*t2, path, a, a.total() * 1.5, dt);
      CHECK(lbm.truncated);
      CHECK(lbm.reached <= a.total());
      CHECK(!lbm.positions.empty());
    }

    SUBCASE("sphere interpolation follows geodesics") {
      auto s2 = build_manifold(sphere2_desc());
      const auto walk = dynamics::simulate_bm(*s2, sphere_point(1.0, 0.2),
                                              0.25, 0.0078125, 5, 0);
      FieldSampler ssamp(s2, 2);
      const auto hs = ssamp.sample(5, 1);
      const auto clock = dynamics::additive_functional(ssamp, walk, hs, 0.0);
      const auto lbm =
          dynamics::time_change(*s2, walk, clock, 0.25, 0.0078125);
      REQUIRE(lbm.positions.size() == walk.positions.size());
      for (std::size_t i = 0; i < walk.positions.size(); ++i)
        CHECK(s2->distance(lbm.positions[i], walk.positions[i]) < 1e-9);
    }
  }

  TEST_CASE("time-integrated heat kernel matches an independent oracle") {
    auto t2 = build_manifold(torus2_desc(1.0, 1.3));
    const Point x = torus_point(0.23, 0.91);

    for (const double t : {0.02, 0.3, 1.0}) {
      for (const auto& y :
           {torus_point(0.61, 0.37), torus_point(0.27, 0.95),
            torus_point(0.73, 1.21)}) {
        const double mine = dynamics::heat_kernel_time_integral(*t2, x, y, t);
        const double oracle = torus_kernel_oracle(*t2, x, y, t);
        CHECK(mine == doctest::Approx(oracle).epsilon(1e-9));
      }
    }

    CHECK_THROWS_AS(dynamics::heat_kernel_time_integral(*t2, x, x, 0.5),
                    std::invalid_argument);
    auto s2 = build_manifold(sphere2_desc());
    CHECK_THROWS_WITH_AS(
        dynamics::heat_kernel_time_integral(*s2, sphere_point(1, 0),
                                            sphere_point(2, 1), 0.5),
        "unsupported: heat time integral requires a 2-torus",
        std::invalid_argument);
  }

  TEST_CASE("occupation identity closes at gamma zero") {
    auto t2 = build_manifold(torus2_desc(1.0, 1.0));
    FieldSampler sampler(t2, 3, 32);
    GmcBuilder builder(sampler, 0.0);
    const Point x0 = torus_point(0.335, 0.618);
    const double t = 0.3;

    // u = 1: the right side reduces to kernel mass conservation, the left
    // side is exactly the clock for every path
    Eigen::VectorXd ones =
        Eigen::VectorXd::Zero(long(sampler.basis().mode_count()));
    ones[0] = std::sqrt(t2->volume());
    auto rep = dynamics::revuz_check(builder, x0, ones, t, 0.01, 50, 13);
    CHECK(std::abs(rep.lhs_mean - t) < 1e-10);
    CHECK(rep.lhs_half_width < 1e-10);
    CHECK(std::abs(rep.rhs_mean - t) < 5e-3 * t);

    // band-limited u: the right side has the closed form
    // sum_j u_j psi_j(x0) (1 - e^{-lambda_j t}) / lambda_j
    Eigen::VectorXd uc =
        Eigen::VectorXd::Zero(long(sampler.basis().mode_count()));
    uc[0] = 0.4 * std::sqrt(t2->volume());
    uc[1] = 0.6;
    uc[5] = -0.3;
    const auto& modes = sampler.basis().modes();
    std::vector<double> buf(modes.size());
    t2->eval_modes(modes, x0, buf.data());
    double closed = uc[0] * buf[0] * t;
    for (const long j : {1L, 5L}) {
      const double lambda = modes[std::size_t(j)].lambda;
      closed += uc[j] * buf[std::size_t(j)] * (1.0 - std::exp(-lambda * t)) /
                lambda;
    }
    rep = dynamics::revuz_check(builder, x0, uc, t, 0.01, 50, 13);
    CHECK(rep.rhs_mean == doctest::Approx(closed).epsilon(5e-3));
  }

  TEST_CASE("occupation identity overlaps at positive gamma") {
    auto t2 = build_manifold(torus2_desc(1.0, 1.0));
    FieldSampler sampler(t2, 3, 32);
    GmcBuilder builder(sampler, 1.0);
    const Point x0 = torus_point(0.335, 0.618);

    Eigen::VectorXd uc =
        Eigen::VectorXd::Zero(long(sampler.basis().mode_count()));
    uc[0] = std::sqrt(t2->volume());
    uc[2] = 0.5;
    const auto rep =
        dynamics::revuz_check(builder, x0, uc, 0.3, 0.005, 400, 11);
    CHECK(rep.intervals_overlap);
    CHECK(rep.lhs_half_width > 0.0);
    CHECK(rep.rhs_half_width == 0.0);

    auto s2 = build_manifold(sphere2_desc());
    FieldSampler ssamp(s2, 3);
    GmcBuilder sphere_builder(ssamp, 1.0);
    CHECK_THROWS_WITH_AS(
        dynamics::revuz_check(sphere_builder, sphere_point(1, 0), uc, 0.3,
                              0.01, 10, 1),
        "unsupported: Revuz check requires a 2-torus", std::invalid_argument);

    GmcBuilder heat_builder(sampler, 1.0, Flavor::plain, Scheme::heat, 0.05);
    CHECK_THROWS_WITH_AS(
        dynamics::revuz_check(heat_builder, x0, uc, 0.3, 0.01, 10, 1),
        "Revuz check requires the eigenfunction scheme",
        std::invalid_argument);

    GmcBuilder adj_builder(ssamp, 1.0, Flavor::adjusted);
    CHECK_THROWS_WITH_AS(
        dynamics::revuz_check(adj_builder, x0, uc, 0.3, 0.01, 10, 1),
        "Revuz check requires the plain flavor", std::invalid_argument);

    const Point on_node = sampler.basis().grid().points[0];
    CHECK_THROWS_WITH_AS(
        dynamics::revuz_check(builder, on_node, uc, 0.3, 0.01, 10, 1),
        "start point lies on a quadrature node", std::invalid_argument);
  }

  TEST_CASE("random operator recovers the deterministic spectrum at gamma zero") {
    auto s2 = build_manifold(sphere2_desc());
    FieldSampler sampler(s2, 3, 7);  // aliasing guard: 7 = 2 * 3 + 1
    GmcBuilder builder(sampler, 0.0);
    const auto mu = builder.build(sampler.sample(1, 0));

    const auto op = dynamics::random_gjms_assemble(sampler, mu);
    CHECK(op.regularization == 0.0);
    const long P = op.nu.size();
    CHECK(P == long(sampler.coefficient_count()));
    for (long i = 0; i < P; ++i)
      for (long j = 0; j < P; ++j)
        CHECK(std::abs(op.gram(i, j) - (i == j ? 1.0 : 0.0)) < 1e-12);
    for (long j = 0; j < P; ++j)
      CHECK(op.theta[j] == doctest::Approx(op.nu[j]).epsilon(1e-11));

    CHECK_THROWS_WITH_AS(dynamics::random_gjms_assemble(sampler, mu, int(P) + 1),
                         "prefix exceeds the truncation", std::invalid_argument);

    // a default-resolution sampler fails the aliasing guard
    FieldSampler coarse(s2, 3);
    GmcBuilder cb(coarse, 0.0);
    const auto cmu = cb.build(coarse.sample(1, 0));
    CHECK_THROWS_WITH_AS(
        dynamics::random_gjms_assemble(coarse, cmu),
        "quadrature grid below the aliasing guard for retained modes",
        std::invalid_argument);
  }

  TEST_CASE("random operator spectra stay nonnegative") {
    auto s2 = build_manifold(sphere2_desc());
    FieldSampler sampler(s2, 2, 5);
    GmcBuilder builder(sampler, 1.0);
    const auto ensemble = builder.build_many(77, 0, 100);

    double min_theta = std::numeric_limits<double>::infinity();
    for (const auto& mu : ensemble) {
      const auto op = dynamics::random_gjms_assemble(sampler, mu);
      min_theta = std::min(min_theta, op.theta.minCoeff());
      // eigenvectors are Gram-orthonormal
      const Eigen::MatrixXd gram_check =
          op.vectors.transpose() * op.gram * op.vectors;
      CHECK((gram_check - Eigen::MatrixXd::Identity(op.nu.size(), op.nu.size()))
                .cwiseAbs()
                .maxCoeff() < 1e-8);
      // min-max sandwich: theta_j between nu_j / lambda_max(G) and
      // nu_j / lambda_min(G), so theta -> nu continuously as G -> Id
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ges(op.gram);
      const double gl = ges.eigenvalues().minCoeff();
      const double gu = ges.eigenvalues().maxCoeff();
      REQUIRE(gl > 0.0);
      for (long j = 0; j < op.nu.size(); ++j) {
        CHECK(op.theta[j] >= op.nu[j] / gu * (1.0 - 1e-9));
        CHECK(op.theta[j] <= op.nu[j] / gl * (1.0 + 1e-9));
      }
    }
    CHECK(min_theta > -1e-9);
  }

  TEST_CASE("heat flow dissipates the form energy") {
    auto s2 = build_manifold(sphere2_desc());
    FieldSampler sampler(s2, 3, 7);
    GmcBuilder builder(sampler, 1.0);
    const auto op = dynamics::random_gjms_assemble(
        sampler, builder.build(sampler.sample(5, 2)));
    const long P = op.nu.size();

    rng::Stream st(123, 0);
    Eigen::VectorXd u0(P);
    for (long j = 0; j < P; ++j) u0[j] = st.normal(std::uint64_t(j));
    u0 /= std::sqrt(dynamics::copoly_energy(op, u0));

    SUBCASE("time zero is the identity") {
      const Eigen::VectorXd u = dynamics::copoly_heat_flow(op, u0, 0.0);
      CHECK((u - u0).cwiseAbs().maxCoeff() < 1e-10);
    }

    SUBCASE("energy decays monotonically to zero") {
      double prev = dynamics::copoly_energy(op, u0);
      for (const double t : {0.02, 0.05, 0.1, 0.3, 1.0}) {
        const double e =
            dynamics::copoly_energy(op, dynamics::copoly_heat_flow(op, u0, t));
        CHECK(e <= prev * (1.0 + 1e-12));
        prev = e;
      }
      const double late = dynamics::copoly_energy(
          op, dynamics::copoly_heat_flow(op, u0, 40.0 / op.theta.minCoeff()));
      CHECK(late < 1e-12);
    }

    SUBCASE("finite differences confirm the dissipation identity") {
      const auto rep = dynamics::energy_dissipation_check(
          op, u0, {0.05, 0.1, 0.2}, 5e-5);
      CHECK(rep.max_defect < 1e-4);
      CHECK_THROWS_AS(
          dynamics::energy_dissipation_check(op, u0, {1e-6}, 5e-5),
          std::invalid_argument);
    }

    SUBCASE("gamma zero flows by the closed-form decay") {
      GmcBuilder flat(sampler, 0.0);
      const auto det_op = dynamics::random_gjms_assemble(
          sampler, flat.build(sampler.sample(5, 3)));
      const double t = 0.07;
      const Eigen::VectorXd u = dynamics::copoly_heat_flow(det_op, u0, t);
      for (long j = 0; j < P; ++j)
        CHECK(u[j] ==
              doctest::Approx(u0[j] * std::exp(-det_op.nu[j] * t)).epsilon(1e-10));
    }
  }

  TEST_CASE("form value survives the conformal rescaling route") {
    auto s2 = build_manifold(sphere2_desc());
    FieldSampler sampler(s2, 4);
    const auto& basis = sampler.basis();
    const long J = long(basis.mode_count());

    rng::Stream st(55, 0);
    Eigen::VectorXd uc = Eigen::VectorXd::Zero(J);
    Eigen::VectorXd vc = Eigen::VectorXd::Zero(J);
    Eigen::VectorXd pc = Eigen::VectorXd::Zero(J);
    for (long j = 1; j < std::min(J, 9L); ++j) {
      uc[j] = st.normal(std::uint64_t(j));
      vc[j] = st.normal(std::uint64_t(100 + j));
      pc[j] = 0.15 * st.normal(std::uint64_t(200 + j));
    }
    const Eigen::VectorXd u_grid = basis.synthesize(uc);
    const Eigen::VectorXd v_grid = basis.synthesize(vc);
    const Eigen::VectorXd phi_grid = basis.synthesize(pc);

    double direct = 0.0;
    const auto& nu = sampler.form().nu();
    for (std::size_t p = 0; p < sampler.coefficient_count(); ++p)
      direct += nu[p + 1] * uc[long(p + 1)] * vc[long(p + 1)];
    CHECK(dynamics::copoly_form(sampler, u_grid, v_grid) ==
          doctest::Approx(direct).epsilon(1e-10));

    const auto rep = dynamics::conformal_form_invariance_check(
        sampler, u_grid, v_grid, phi_grid);
    CHECK(rep.relative_gap < 1e-12);
    CHECK(rep.form_base == doctest::Approx(rep.form_conformal).epsilon(1e-12));
  }

  TEST_CASE("dump formats") {
    auto t2 = build_manifold(torus2_desc(1.0, 1.3));
    const auto path =
        dynamics::simulate_bm(*t2, torus_point(0.1, 0.2), 0.05, 0.01, 1, 0);

    std::ostringstream ps;
    dynamics::dump_path_csv(*t2, path, ps);
    const std::string text = ps.str();
    CHECK(text.substr(0, 8) == "t,c0,c1\n");
    CHECK(std::count(text.begin(), text.end(), '\n') == 7);

    FieldSampler sampler(t2, 3);
    const auto a = dynamics::additive_functional(
        sampler, path, sampler.sample(2, 0), 1.0);
    std::ostringstream as;
    dynamics::dump_functional_csv(a, as);
    CHECK(as.str().substr(0, 4) == "t,A\n");

    auto s2 = build_manifold(sphere2_desc());
    FieldSampler ssamp(s2, 2, 5);
    GmcBuilder builder(ssamp, 0.5);
    const auto op = dynamics::random_gjms_assemble(
        ssamp, builder.build(ssamp.sample(3, 0)));
    std::ostringstream os;
    dynamics::dump_spectrum_csv(op, os);
    const std::string spectrum_text = os.str();
    CHECK(spectrum_text.substr(0, 12) == "index,theta\n");
    CHECK(std::count(spectrum_text.begin(), spectrum_text.end(), '\n') ==
          op.theta.size() + 1);
  }
}
