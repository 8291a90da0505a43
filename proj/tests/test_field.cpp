#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "confield/field.hpp"
#include "confield/geometry.hpp"
#include "confield/orthopoly.hpp"
#include "confield/parallel.hpp"
#include "confield/rng.hpp"
#include "confield/spectral.hpp"

using namespace confield;
using field::ConformalFieldTransform;
using field::FieldSample;
using field::FieldSampler;
using field::MollifiedField;
using field::MollifierScheme;
using geom::build_manifold;
using geom::ManifoldDescriptor;
using geom::ManifoldKind;
using geom::Point;

namespace {

constexpr double kPi = std::numbers::pi;

ManifoldDescriptor sphere2_desc(double r = 1.0) {
  ManifoldDescriptor d;
  d.kind = ManifoldKind::Sphere;
  d.dimension = 2;
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

}  // namespace

TEST_SUITE("field") {
  TEST_CASE("sampling is keyed and thread independent") {
    auto s2 = build_manifold(sphere2_desc());
    FieldSampler sampler(s2, 6);
    const auto a = sampler.sample(12, 3);
    const auto b = sampler.sample(12, 3);
    const auto c = sampler.sample(12, 4);
    const auto d = sampler.sample(13, 3);
    REQUIRE(a.xi.size() == b.xi.size());
    for (long p = 0; p < a.xi.size(); ++p) CHECK(a.xi[p] == b.xi[p]);
    CHECK(a.xi != c.xi);
    CHECK(a.xi != d.xi);

    const int saved = par::max_threads();
    par::set_threads(1);
    const auto batch1 = sampler.sample_many(12, 0, 40);
    par::set_threads(4);
    const auto batch4 = sampler.sample_many(12, 0, 40);
    par::set_threads(saved);
    REQUIRE(batch1.size() == batch4.size());
    for (std::size_t i = 0; i < batch1.size(); ++i)
      for (long p = 0; p < batch1[i].xi.size(); ++p)
        CHECK(batch1[i].xi[p] == batch4[i].xi[p]);
    // stream index matches the slot
    CHECK(batch1[7].xi == sampler.sample(12, 7).xi);
  }

  TEST_CASE("field statistics match the kernel") {
    auto s2 = build_manifold(sphere2_desc());
    FieldSampler sampler(s2, 6);
    rng::Stream pick(3, 9);
    const Point x = s2->random_point(pick, 0);
    const int N = 10000;
    const auto batch = sampler.sample_many(101, 0, N);
    std::vector<double> vals(std::size_t(N), 0.0);
    par::map_index(std::size_t(N), [&](std::size_t i) {
      vals[i] = sampler.evaluate(batch[i], x);
    });
    const double mean = par::sum_pairwise(vals) / N;
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= N - 1;
    const double diag = sampler.covariance_diagonal(x);
    CHECK(std::abs(mean) < 3.0 * std::sqrt(diag / N));
    CHECK(std::abs(var - diag) < 3.0 * diag * std::sqrt(2.0 / (N - 1)));

    // covariance of pairings matches the bilinear form
    const long J = long(sampler.basis().mode_count());
    Eigen::VectorXd u = Eigen::VectorXd::Zero(J);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(J);
    u[1] = 0.8;
    u[6] = -0.5;
    v[1] = 0.3;
    v[4] = 1.1;
    std::vector<double> pu(std::size_t(N), 0.0), pv(std::size_t(N), 0.0);
    par::map_index(std::size_t(N), [&](std::size_t i) {
      pu[i] = sampler.pair_coefficients(batch[i], u);
      pv[i] = sampler.pair_coefficients(batch[i], v);
    });
    const double mu = par::sum_pairwise(pu) / N;
    const double mv = par::sum_pairwise(pv) / N;
    double cov = 0.0;
    for (std::size_t i = 0; i < pu.size(); ++i)
      cov += (pu[i] - mu) * (pv[i] - mv);
    cov /= N - 1;
    const double expect = sampler.kappa(u, v);
    const double band = 3.0 * std::sqrt(sampler.kappa(u, u) * sampler.kappa(v, v) +
                                        expect * expect) /
                        std::sqrt(double(N));
    CHECK(std::abs(cov - expect) < band);
  }

  TEST_CASE("pairings agree between coefficients and quadrature") {
    auto s2 = build_manifold(sphere2_desc());
    FieldSampler sampler(s2, 5);
    const auto s = sampler.sample(7, 0);
    const auto& basis = sampler.basis();
    const long J = long(basis.mode_count());
    rng::Stream st(19, 5);
    Eigen::VectorXd u{J};
    for (long j = 0; j < J; ++j) u[j] = st.normal(std::uint64_t(j));
    const double by_coeff = sampler.pair_coefficients(s, u);
    const Eigen::VectorXd ugrid = basis.synthesize(u);
    const Eigen::VectorXd hgrid = sampler.grid_values(s);
    const double by_quad = basis.weights().dot(ugrid.cwiseProduct(hgrid));
    CHECK(by_coeff == doctest::Approx(by_quad).epsilon(1e-10));

    // grounding: the constant test function pairs to zero
    Eigen::VectorXd ones = Eigen::VectorXd::Zero(J);
    ones[0] = 1.0;
    CHECK(sampler.pair_coefficients(s, ones) == 0.0);
    CHECK(std::abs(basis.weights().dot(hgrid)) < 1e-10);
  }

  TEST_CASE("covariance kernel is shared with the spectral module") {
    auto s2 = build_manifold(sphere2_desc());
    FieldSampler sampler(s2, 6);
    spectral::KernelEvaluator ev(s2, 6, spectral::KernelKind::normalized);
    rng::Stream st(11, 0);
    for (int i = 0; i < 4; ++i) {
      const Point x = s2->random_point(st, 2 * i);
      const Point y = s2->random_point(st, 2 * i + 1);
      CHECK(sampler.covariance(x, y) == ev(x, y));  // same implementation
    }
    const Point x = s2->random_point(st, 50);
    // diagonal grows with the cutoff
    double prev = 0.0;
    for (int cutoff : {2, 4, 6}) {
      FieldSampler sub(s2, cutoff);
      const double diag = sub.covariance_diagonal(x);
      CHECK(diag > prev);
      prev = diag;
    }
    // sampler-order diagonal matches the evaluator diagonal
    const auto& grid = sampler.basis().grid();
    for (std::size_t i = 0; i < grid.points.size(); i += 40)
      CHECK(sampler.grid_diagonal()[long(i)] ==
            doctest::Approx(sampler.covariance_diagonal(grid.points[i]))
                .epsilon(1e-10));
    // grounded kernel integrates to zero
    double gint = 0.0;
    for (std::size_t i = 0; i < grid.points.size(); ++i)
      gint += grid.weights[i] * sampler.covariance(x, grid.points[i]);
    CHECK(std::abs(gint) < 1e-10);
  }

  TEST_CASE("white noise round trip") {
    auto s2 = build_manifold(sphere2_desc());
    FieldSampler sampler(s2, 5);
    const auto s = sampler.sample(21, 2);
    const Eigen::VectorXd xi = sampler.white_noise_extract(s);
    CHECK(xi == s.xi);
    const auto back = sampler.field_from_noise(xi);
    for (long p = 0; p < xi.size(); ++p)
      CHECK(back.xi[p] == doctest::Approx(s.xi[p]).epsilon(1e-15));

    // unit variance and cross-mode independence
    const int N = 10000;
    const auto batch = sampler.sample_many(77, 0, N);
    for (long p : {0L, 7L, 20L}) {
      double m = 0.0, v = 0.0;
      for (const auto& b : batch) m += b.xi[p];
      m /= N;
      for (const auto& b : batch) v += (b.xi[p] - m) * (b.xi[p] - m);
      v /= N - 1;
      CHECK(std::abs(m) < 3.0 / std::sqrt(double(N)));
      CHECK(std::abs(v - 1.0) < 3.0 * std::sqrt(2.0 / (N - 1)));
    }
    double cross = 0.0;
    for (const auto& b : batch) cross += b.xi[3] * b.xi[11];
    cross /= N;
    CHECK(std::abs(cross) < 3.0 / std::sqrt(double(N)));
  }

  TEST_CASE("girsanov shift identities") {
    auto s2 = build_manifold(sphere2_desc());
    FieldSampler sampler(s2, 4);
    const long J = long(sampler.basis().mode_count());

    // zero shift with shared draws: the two estimates are the same run
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(J);
    const auto f_first = [&](const FieldSample& s) {
      return s.xi[0] * s.xi[0] + 0.3 * s.xi[2];
    };
    const auto same =
        field::girsanov_shift_check(sampler, zero, f_first, 500, 5, true);
    CHECK(same.shifted_mean == same.weighted_mean);
    CHECK(same.effective_sample_size == doctest::Approx(500.0).epsilon(1e-12));

    // exponential functional: closed-form Gaussian mean on both sides
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(J);
    phi[1] = 0.4;
    phi[5] = 0.3;
    Eigen::VectorXd u = Eigen::VectorXd::Zero(J);
    u[1] = 0.35;
    u[7] = 0.35;
    const double kuu = sampler.kappa(u, u);
    const double oracle = std::exp(phi.dot(u) + 0.5 * kuu);
    const auto f_exp = [&](const FieldSample& s) {
      return std::exp(sampler.pair_coefficients(s, u));
    };
    const auto rep =
        field::girsanov_shift_check(sampler, phi, f_exp, 20000, 91, false);
    CHECK(std::abs(rep.shifted_mean - oracle) < 1.6 * rep.shifted_half_width);
    CHECK(std::abs(rep.weighted_mean - oracle) < 1.6 * rep.weighted_half_width);
    CHECK(rep.intervals_overlap);
    CHECK_FALSE(rep.low_effective_sample);

    // capped quadratic with independent draws on the two sides
    const double cap = 4.0 * kuu;
    const auto f_quad = [&](const FieldSample& s) {
      const double z = sampler.pair_coefficients(s, u);
      return std::min(z * z, cap);
    };
    const auto rq =
        field::girsanov_shift_check(sampler, phi, f_quad, 100000, 17, false);
    CHECK(rq.intervals_overlap);
    CHECK_FALSE(rq.low_effective_sample);
  }

  TEST_CASE("conformal change of the field") {
    auto s2 = build_manifold(sphere2_desc());
    FieldSampler sampler(s2, 6);
    const auto& basis = sampler.basis();
    const long G = long(basis.grid_size());

    // phi = 0 reduces to plain pairings
    ConformalFieldTransform id(sampler, Eigen::VectorXd::Zero(G));
    CHECK(id.vol_conformal() == doctest::Approx(4.0 * kPi).epsilon(1e-13));
    const auto s = sampler.sample(31, 0);
    Eigen::VectorXd u{G};
    for (long i = 0; i < G; ++i)
      u[i] = std::sin(basis.grid().points[std::size_t(i)].c[0]);
    const Eigen::VectorXd hgrid = sampler.grid_values(s);
    const double plain =
        basis.weights().dot(u.cwiseProduct(hgrid)) -
        basis.weights().dot(u) / s2->volume() * basis.weights().dot(hgrid);
    CHECK(id.pair(s, u) == doctest::Approx(plain).epsilon(1e-10));

    Eigen::VectorXd phi{G};
    for (long i = 0; i < G; ++i)
      phi[i] = 0.15 * std::cos(basis.grid().points[std::size_t(i)].c[0]);
    ConformalFieldTransform cft(sampler, phi);

    // the transformed field is grounded in the new metric, exactly
    CHECK(cft.pair(s, Eigen::VectorXd::Ones(G)) == 0.0);
    const Eigen::VectorXd wconf =
        basis.weights().cwiseProduct((2.0 * phi.array()).exp().matrix());
    CHECK(std::abs(wconf.dot(cft.grid_values(s))) < 1e-10);

    // variance of a pairing against the transformed kernel
    spectral::CopolyForm form(*s2, basis.modes());
    spectral::ConformalKernelTransform ckt(basis, form, phi);
    const auto& pts = basis.grid().points;
    double expect = 0.0;
    std::vector<double> row(std::size_t(G), 0.0);
    for (long i = 0; i < G; ++i) {
      par::map_index(std::size_t(G), [&](std::size_t j) {
        row[j] = wconf[long(j)] * u[long(j)] *
                 ckt.normalized(pts[std::size_t(i)], pts[j]);
      });
      expect += wconf[i] * u[i] * par::sum_pairwise(row);
    }
    const int N = 10000;
    const auto batch = sampler.sample_many(301, 0, N);
    std::vector<double> vals(std::size_t(N), 0.0);
    par::map_index(std::size_t(N), [&](std::size_t i) {
      vals[i] = cft.pair(batch[i], u);
    });
    const double mean = par::sum_pairwise(vals) / N;
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= N - 1;
    CHECK(std::abs(mean) < 3.0 * std::sqrt(expect / N));
    CHECK(std::abs(var - expect) < 3.0 * expect * std::sqrt(2.0 / (N - 1)));
  }

  TEST_CASE("heat mollifier") {
    auto s2 = build_manifold(sphere2_desc());
    FieldSampler sampler(s2, 6);
    const auto s = sampler.sample(41, 0);
    rng::Stream st(43, 0);
    const Point x = s2->random_point(st, 0);
    const Point y = s2->random_point(st, 1);

    MollifiedField sharp(sampler, MollifierScheme::heat, 1e-14);
    CHECK(sharp.value(s, x) ==
          doctest::Approx(sampler.evaluate(s, x)).epsilon(1e-9));

    MollifiedField heat(sampler, MollifierScheme::heat, 0.0);  // t = 1/modes
    const auto& modes = sampler.basis().modes();
    const double t = 1.0 / double(sampler.coefficient_count());
    for (long p = 0; p < heat.multipliers().size(); ++p)
      CHECK(heat.multipliers()[p] ==
            doctest::Approx(std::exp(-modes[std::size_t(p + 1)].lambda * t))
                .epsilon(1e-14));
    const double cxy = heat.covariance(x, y);
    CHECK(cxy == heat.covariance(y, x));
    const double cxx = heat.covariance(x, x);
    const double cyy = heat.covariance(y, y);
    CHECK(std::abs(cxy) <= std::sqrt(cxx * cyy) + 1e-12);
    CHECK(cxx <= sampler.covariance_diagonal(x) + 1e-12);
  }

  TEST_CASE("partition mollifier averages lattice cells") {
    auto t2 = build_manifold(torus2_desc(1.0, 1.3));
    FieldSampler sampler(t2, 3);
    MollifiedField part(sampler, MollifierScheme::partition, 4.0);
    const auto& modes = sampler.basis().modes();

    // analytic cell average of one eigenfunction
    const auto analytic = [&](std::size_t j, const Point& x) {
      const auto& idx = modes[j].idx;
      const double kx = 2.0 * kPi * idx[0] / 1.0;
      const double ky = 2.0 * kPi * idx[1] / 1.3;
      const double dx = 1.0 / 4.0, dy = 1.3 / 4.0;
      const double x0 = std::floor(x.c[0] / dx) * dx;
      const double y0 = std::floor(x.c[1] / dy) * dy;
      const auto ic = [](double k, double a, double b) {
        return k == 0.0 ? b - a : (std::sin(k * b) - std::sin(k * a)) / k;
      };
      const auto is = [](double k, double a, double b) {
        return k == 0.0 ? 0.0 : (std::cos(k * a) - std::cos(k * b)) / k;
      };
      // cos(kx u + ky v) = cos cos - sin sin, and the sine analogue
      const double cc = ic(kx, x0, x0 + dx) * ic(ky, y0, y0 + dy);
      const double ss = is(kx, x0, x0 + dx) * is(ky, y0, y0 + dy);
      const double sc = is(kx, x0, x0 + dx) * ic(ky, y0, y0 + dy);
      const double cs = ic(kx, x0, x0 + dx) * is(ky, y0, y0 + dy);
      const double norm = std::sqrt(2.0 / t2->volume());
      const bool sine = idx[2] == 1;
      return norm * (sine ? sc + cs : cc - ss) / (dx * dy);
    };

    Point x;
    x.dim = 2;
    x.c = {0.37, 0.9, 0, 0, 0, 0};
    const auto& nu = sampler.form().nu();
    for (std::size_t j : {1ul, 4ul, 9ul, 14ul}) {
      FieldSample s;
      s.xi = Eigen::VectorXd::Zero(long(sampler.coefficient_count()));
      s.xi[long(j - 1)] = 1.0;
      const double expect =
          analytic(j, x) / std::sqrt(sampler.a_n() * nu[j]);
      CHECK(part.value(s, x) == doctest::Approx(expect).epsilon(1e-6));
    }

    // covariance of cell averages stays symmetric and dominated
    Point y;
    y.dim = 2;
    y.c = {0.8, 0.21, 0, 0, 0, 0};
    const double cxy = part.covariance(x, y);
    CHECK(cxy == doctest::Approx(part.covariance(y, x)).epsilon(1e-12));
    CHECK(std::abs(cxy) <=
          std::sqrt(part.covariance(x, x) * part.covariance(y, y)) + 1e-12);

    CHECK_THROWS_AS(MollifiedField(sampler, MollifierScheme::partition, 0.0),
                    std::invalid_argument);
    auto s2 = build_manifold(sphere2_desc());
    FieldSampler sp(s2, 3);
    CHECK_THROWS_WITH_AS(MollifiedField(sp, MollifierScheme::partition, 4.0),
                         "unsupported: partition mollifier on this geometry",
                         std::invalid_argument);
  }

  TEST_CASE("ball mollifier closed forms") {
    auto s2 = build_manifold(sphere2_desc());
    FieldSampler ssamp(s2, 6);
    const double r = 0.45;
    MollifiedField ball(ssamp, MollifierScheme::ball_average, r);
    const auto& modes = ssamp.basis().modes();
    const double c = std::cos(r);
    for (long p = 0; p < ball.multipliers().size(); ++p) {
      const int l = modes[std::size_t(p + 1)].idx[0];
      const double expect = (poly::legendre_p(l - 1, c) - poly::legendre_p(l + 1, c)) /
                            ((2.0 * l + 1.0) * (1.0 - c));
      CHECK(ball.multipliers()[p] == doctest::Approx(expect).epsilon(1e-10));
    }

    auto t2 = build_manifold(torus2_desc(1.0, 1.3));
    FieldSampler tsamp(t2, 3);
    const double rho = 0.21;
    MollifiedField disk(tsamp, MollifierScheme::ball_average, rho);
    const auto& tmodes = tsamp.basis().modes();
    for (long p = 0; p < disk.multipliers().size(); ++p) {
      const auto& idx = tmodes[std::size_t(p + 1)].idx;
      const double kx = 2.0 * kPi * idx[0] / 1.0;
      const double ky = 2.0 * kPi * idx[1] / 1.3;
      const double kappa = std::hypot(kx, ky);
      const double expect = 2.0 * std::cyl_bessel_j(1, kappa * rho) / (kappa * rho);
      CHECK(disk.multipliers()[p] == doctest::Approx(expect).epsilon(1e-8));
    }

    CHECK_THROWS_AS(MollifiedField(ssamp, MollifierScheme::ball_average, 4.0),
                    std::invalid_argument);
    ManifoldDescriptor pd;
    pd.kind = ManifoldKind::ProductSurfaces;
    pd.dimension = 4;
    pd.curvature_1 = pd.curvature_2 = 1.0;
    auto prod = build_manifold(pd);
    FieldSampler psamp(prod, 2);
    CHECK_THROWS_WITH_AS(MollifiedField(psamp, MollifierScheme::ball_average, 0.3),
                         "unsupported: ball mollifier on this geometry",
                         std::invalid_argument);
  }

  TEST_CASE("pairing increments behave like a martingale") {
    auto s2 = build_manifold(sphere2_desc());
    FieldSampler sampler(s2, 8);
    const long J = long(sampler.basis().mode_count());
    Eigen::VectorXd u{J};
    rng::Stream st(59, 0);
    for (long j = 0; j < J; ++j) u[j] = st.normal(std::uint64_t(j));
    // prefixes at whole-level boundaries: levels 1..3, 1..5, 1..8
    const std::size_t p1 = 15, p2 = 35, p3 = 80;
    const int N = 4000;
    const auto batch = sampler.sample_many(61, 0, N);
    std::vector<double> v1(std::size_t(N), 0.0), i2(std::size_t(N), 0.0), i3(std::size_t(N), 0.0);
    par::map_index(std::size_t(N), [&](std::size_t i) {
      const double a = sampler.pair_coefficients_prefix(batch[i], p1, u);
      const double b = sampler.pair_coefficients_prefix(batch[i], p2, u);
      const double c = sampler.pair_coefficients_prefix(batch[i], p3, u);
      v1[i] = a;
      i2[i] = b - a;
      i3[i] = c - b;
    });
    const auto cov0 = [&](const std::vector<double>& a,
                          const std::vector<double>& b) {
      double ma = 0.0, mb = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
      }
      ma /= double(a.size());
      mb /= double(b.size());
      double cv = 0.0, va = 0.0, vb = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        cv += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
      }
      cv /= double(a.size() - 1);
      va /= double(a.size() - 1);
      vb /= double(b.size() - 1);
      return std::abs(cv) < 3.0 * std::sqrt(va * vb / double(a.size()));
    };
    CHECK(cov0(v1, i2));
    CHECK(cov0(v1, i3));
    CHECK(cov0(i2, i3));
  }

  TEST_CASE("default truncation from an eigenvalue cap") {
    auto s2 = build_manifold(sphere2_desc());
    CHECK(field::level_cutoff_for_nu_cap(*s2, 30.0) == 5);
    CHECK(field::level_cutoff_for_nu_cap(*s2, 29.9) == 4);
    auto t2 = build_manifold(torus2_desc(2.0 * kPi, 2.0 * kPi));
    CHECK(field::level_cutoff_for_nu_cap(*t2, 8.0) == 2);
    CHECK_THROWS_AS(field::level_cutoff_for_nu_cap(*s2, -1.0),
                    std::invalid_argument);
  }

  TEST_CASE("csv dumps") {
    auto s2 = build_manifold(sphere2_desc());
    FieldSampler sampler(s2, 3);
    const auto s = sampler.sample(71, 0);
    rng::Stream st(73, 0);
    std::vector<Point> pts = {s2->random_point(st, 0), s2->random_point(st, 1)};
    std::ostringstream of;
    field::dump_field_csv(sampler, s, pts, of);
    const std::string ftext = of.str();
    CHECK(ftext.substr(0, 14) == "c0,c1,h_value\n");
    CHECK(std::count(ftext.begin(), ftext.end(), '\n') == 3);

    std::ostringstream oc;
    field::dump_coefficients_csv(s, oc);
    const std::string ctext = oc.str();
    CHECK(ctext.substr(0, 14) == "mode_index,xi\n");
    CHECK(std::count(ctext.begin(), ctext.end(), '\n') ==
          1 + long(sampler.coefficient_count()));
    CHECK(ctext.substr(14, 2) == "1,");
  }
}
