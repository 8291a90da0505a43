#include "confield/dynamics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "confield/parallel.hpp"
#include "confield/rng.hpp"

namespace confield::dynamics {

namespace {

constexpr double kPi = std::numbers::pi;

void append_double(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

void mean_and_half_width(const std::vector<double>& v, double& mean,
                         double& half_width) {
  const auto n = static_cast<double>(v.size());
  mean = par::sum_pairwise(v) / n;
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    sq[i] = (v[i] - mean) * (v[i] - mean);
  const double var = par::sum_pairwise(sq) / (n - 1.0);
  half_width = 1.96 * std::sqrt(var / n);
}

double wrap_coordinate(double x, double side) {
  double y = std::fmod(x, side);
  if (y < 0.0) y += side;
  return y;
}

// Unit-sphere chart conversions matching the manifold models: colatitude
// chains with the final angle as a full longitude.
std::array<double, 3> s2_embed(const geom::Point& p) {
  const double st = std::sin(p.c[0]);
  return {st * std::cos(p.c[1]), st * std::sin(p.c[1]), std::cos(p.c[0])};
}

geom::Point s2_unembed(const std::array<double, 3>& u) {
  geom::Point p;
  p.dim = 2;
  p.c[0] = std::atan2(std::hypot(u[0], u[1]), u[2]);
  p.c[1] = std::atan2(u[1], u[0]);
  return p;
}

std::array<double, 5> s4_embed(const geom::Point& x) {
  const double s1 = std::sin(x.c[0]), s2 = std::sin(x.c[1]),
               s3 = std::sin(x.c[2]);
  return {std::cos(x.c[0]), s1 * std::cos(x.c[1]), s1 * s2 * std::cos(x.c[2]),
          s1 * s2 * s3 * std::cos(x.c[3]), s1 * s2 * s3 * std::sin(x.c[3])};
}

geom::Point s4_unembed(const std::array<double, 5>& u) {
  geom::Point p;
  p.dim = 4;
  const double t4 = std::hypot(u[3], u[4]);
  const double t3 = std::hypot(u[2], t4);
  const double t2 = std::hypot(u[1], t3);
  p.c[0] = std::atan2(t2, u[0]);
  p.c[1] = std::atan2(t3, u[1]);
  p.c[2] = std::atan2(t4, u[2]);
  p.c[3] = std::atan2(u[4], u[3]);
  return p;
}

template <std::size_t D>
std::array<double, D> sphere_rotate(const std::array<double, D>& n,
                                    const std::array<double, D>& dir,
                                    double norm, double angle) {
  std::array<double, D> out;
  const double c = std::cos(angle), s = std::sin(angle);
  for (std::size_t i = 0; i < D; ++i) out[i] = c * n[i] + s * dir[i] / norm;
  return out;
}

// One geodesic random-walk step: project an iid Gaussian onto the tangent
// plane (isotropic there) and walk the metric length sqrt(2 dt) |v|.
template <std::size_t D>
std::array<double, D> sphere_step(const std::array<double, D>& n,
                                  const rng::Stream& st, std::uint64_t base,
                                  double dt, double radius) {
  std::array<double, D> xi;
  for (std::size_t i = 0; i < D; ++i)
    xi[i] = st.normal(base + static_cast<std::uint64_t>(i));
  double dot = 0.0;
  for (std::size_t i = 0; i < D; ++i) dot += xi[i] * n[i];
  std::array<double, D> v;
  double norm2 = 0.0;
  for (std::size_t i = 0; i < D; ++i) {
    v[i] = xi[i] - dot * n[i];
    norm2 += v[i] * v[i];
  }
  const double norm = std::sqrt(norm2);
  if (norm < 1e-14) return n;
  const double angle = std::sqrt(2.0 * dt) * norm / radius;
  return sphere_rotate(n, v, norm, angle);
}

int step_count(double horizon, double dt) {
  if (!(dt > 0.0) || !(horizon > 0.0))
    throw std::invalid_argument("positive horizon and step required");
  const double ratio = horizon / dt;
  const auto n = static_cast<long long>(std::llround(ratio));
  if (n < 1 || std::abs(ratio - static_cast<double>(n)) > 1e-9 * std::max(1.0, ratio))
    throw std::invalid_argument("horizon must be a whole number of steps");
  return static_cast<int>(n);
}

// Exponential integral E1(x) for x > 0: series below 1, a continued
// fraction (modified Lentz) above.
double exp_integral_e1(double x) {
  if (!(x > 0.0)) throw std::invalid_argument("positive argument required");
  if (x > 705.0) return 0.0;
  if (x <= 1.0) {
    constexpr double kEulerGamma = 0.57721566490153286;
    double sum = -kEulerGamma - std::log(x);
    double term = 1.0;
    for (int k = 1; k <= 40; ++k) {
      term *= -x / k;
      const double add = -term / k;
      sum += add;
      if (std::abs(add) < 1e-18 * std::abs(sum)) break;
    }
    return sum;
  }
  constexpr double tiny = 1e-300;
  double b = x + 1.0;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int k = 1; k <= 100; ++k) {
    const double a = -static_cast<double>(k) * k;
    b += 2.0;
    d = a * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + a / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x);
}

// Small-time/spectral split point for the time-integrated heat kernel.
constexpr double kHeatSplit = 0.05;

}  // namespace

BrownianPath simulate_bm(const geom::ManifoldModel& m, const geom::Point& x0,
                         double horizon, double dt, std::uint64_t seed,
                         std::uint64_t stream) {
  const int n = m.dimension();
  if (x0.dim != n) throw std::invalid_argument("start point dimension mismatch");
  const int steps = step_count(horizon, dt);
  const rng::Stream st(seed, stream);

  BrownianPath path;
  path.dt = dt;
  path.positions.reserve(static_cast<std::size_t>(steps) + 1);
  path.positions.push_back(x0);

  switch (m.kind()) {
    case geom::ManifoldKind::FlatTorus: {
      const auto sides = m.descriptor().side_lengths;
      path.unwrapped.reserve(static_cast<std::size_t>(steps) + 1);
      path.unwrapped.push_back(x0);
      const double amp = std::sqrt(2.0 * dt);
      geom::Point raw = x0;
      for (int s = 0; s < steps; ++s) {
        geom::Point p;
        p.dim = n;
        for (int a = 0; a < n; ++a) {
          raw.c[a] += amp * st.normal(static_cast<std::uint64_t>(n) * s + a);
          p.c[a] = wrap_coordinate(raw.c[a], sides[static_cast<std::size_t>(a)]);
        }
        path.unwrapped.push_back(raw);
        path.positions.push_back(p);
      }
      return path;
    }
    case geom::ManifoldKind::Sphere: {
      const double r = m.descriptor().radius;
      if (n == 2) {
        auto e = s2_embed(x0);
        for (int s = 0; s < steps; ++s) {
          e = sphere_step<3>(e, st, 3ull * static_cast<std::uint64_t>(s), dt, r);
          path.positions.push_back(s2_unembed(e));
        }
        return path;
      }
      auto e = s4_embed(x0);
      for (int s = 0; s < steps; ++s) {
        e = sphere_step<5>(e, st, 5ull * static_cast<std::uint64_t>(s), dt, r);
        path.positions.push_back(s4_unembed(e));
      }
      return path;
    }
    case geom::ManifoldKind::ProductSurfaces:
      throw std::invalid_argument("unsupported: Brownian motion on product models");
  }
  throw std::logic_error("unknown manifold kind");
}

AdditiveFunctional additive_functional(const field::FieldSampler& sampler,
                                       const BrownianPath& path,
                                       const field::FieldSample& s,
                                       double gamma, int prefix) {
  const auto& basis = sampler.basis();
  const auto& m = sampler.manifold();
  if (path.positions.empty())
    throw std::invalid_argument("empty path");
  if (path.positions.front().dim != m.dimension())
    throw std::invalid_argument("path dimension mismatch");
  const std::size_t count = sampler.coefficient_count();
  if (static_cast<std::size_t>(s.xi.size()) != count)
    throw std::invalid_argument("sample size mismatch");
  const std::size_t P =
      prefix < 0 ? count : static_cast<std::size_t>(prefix);
  if (P > count) throw std::invalid_argument("prefix exceeds the truncation");

  const auto& modes = basis.modes();
  const auto& nu = sampler.form().nu();
  const double a_n = sampler.a_n();
  const double hg = 0.5 * gamma * gamma;

  AdditiveFunctional a;
  a.dt = path.dt;
  a.gamma = gamma;
  a.truncation = static_cast<int>(P);
  a.beyond_dirichlet_regime = std::abs(gamma) >= 2.0;
  a.values.resize(path.positions.size());
  a.values[0] = 0.0;

  std::vector<double> buf(modes.size());
  double prev = 0.0;
  for (std::size_t i = 0; i < path.positions.size(); ++i) {
    m.eval_modes(modes, path.positions[i], buf.data());
    double h = 0.0, diag = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      const double scaled = buf[p + 1] / std::sqrt(a_n * nu[p + 1]);
      h += s.xi[static_cast<long>(p)] * scaled;
      diag += scaled * scaled;
    }
    const double f = std::exp(gamma * h - hg * diag);
    if (i > 0) a.values[i] = a.values[i - 1] + 0.5 * (prev + f) * path.dt;
    prev = f;
  }
  return a;
}

TimeChangedPath time_change(const geom::ManifoldModel& m,
                            const BrownianPath& path,
                            const AdditiveFunctional& a, double horizon,
                            double dt_out) {
  if (a.values.size() != path.positions.size())
    throw std::invalid_argument("functional and path grids disagree");
  if (!(dt_out > 0.0) || horizon < 0.0)
    throw std::invalid_argument("positive output step required");

  const bool torus = m.kind() == geom::ManifoldKind::FlatTorus;
  const auto sides =
      torus ? m.descriptor().side_lengths : std::vector<double>{};
  const auto& nodes = torus && !path.unwrapped.empty() ? path.unwrapped
                                                       : path.positions;

  const auto interpolate = [&](std::size_t j, double w) {
    const geom::Point& x = nodes[j];
    const geom::Point& y = nodes[j + 1];
    if (torus) {
      geom::Point p;
      p.dim = m.dimension();
      for (int c = 0; c < p.dim; ++c)
        p.c[c] = wrap_coordinate(x.c[c] + w * (y.c[c] - x.c[c]),
                                 sides[static_cast<std::size_t>(c)]);
      return p;
    }
    const auto slerp = [&](const auto& u, const auto& v) {
      auto out = u;
      double dot = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) dot += u[i] * v[i];
      const double ang = std::acos(std::clamp(dot, -1.0, 1.0));
      if (ang < 1e-12) return out;
      const double su = std::sin((1.0 - w) * ang) / std::sin(ang);
      const double sv = std::sin(w * ang) / std::sin(ang);
      for (std::size_t i = 0; i < u.size(); ++i) out[i] = su * u[i] + sv * v[i];
      return out;
    };
    if (m.dimension() == 2) return s2_unembed(slerp(s2_embed(x), s2_embed(y)));
    return s4_unembed(slerp(s4_embed(x), s4_embed(y)));
  };

  TimeChangedPath out;
  out.dt = dt_out;
  const double total = a.values.back();
  for (std::size_t k = 0;; ++k) {
    const double t = dt_out * static_cast<double>(k);
    if (t > horizon * (1.0 + 1e-12)) break;
    if (t > total) {
      out.truncated = true;
      break;
    }
    const auto it = std::upper_bound(a.values.begin(), a.values.end(), t);
    std::size_t j = it == a.values.begin()
                        ? 0
                        : static_cast<std::size_t>(it - a.values.begin()) - 1;
    if (j + 1 >= a.values.size()) j = a.values.size() - 2;
    const double seg = a.values[j + 1] - a.values[j];
    const double w = seg > 0.0 ? std::clamp((t - a.values[j]) / seg, 0.0, 1.0) : 0.0;
    out.positions.push_back(interpolate(j, w));
    out.reached = t;
  }
  return out;
}

double heat_kernel_time_integral(const geom::ManifoldModel& m,
                                 const geom::Point& x, const geom::Point& y,
                                 double t) {
  if (m.kind() != geom::ManifoldKind::FlatTorus || m.dimension() != 2)
    throw std::invalid_argument("unsupported: heat time integral requires a 2-torus");
  if (!(t > 0.0)) throw std::invalid_argument("positive time required");
  const auto sides = m.descriptor().side_lengths;

  // Gaussian image sum for s in (0, a]: each image integrates to
  // E1(r^2 / 4a) / (4 pi).
  const double a = std::min(kHeatSplit, t);
  double d0 = std::remainder(x.c[0] - y.c[0], sides[0]);
  double d1 = std::remainder(x.c[1] - y.c[1], sides[1]);
  const int m0 = static_cast<int>(std::ceil(3.05 / sides[0])) + 1;
  const int m1 = static_cast<int>(std::ceil(3.05 / sides[1])) + 1;
  double total = 0.0;
  for (int i = -m0; i <= m0; ++i) {
    for (int j = -m1; j <= m1; ++j) {
      const double rx = d0 + i * sides[0];
      const double ry = d1 + j * sides[1];
      const double arg = (rx * rx + ry * ry) / (4.0 * a);
      if (arg > 705.0) continue;
      if (arg <= 0.0)
        throw std::invalid_argument("points coincide: integral diverges");
      total += exp_integral_e1(arg) / (4.0 * kPi);
    }
  }
  if (t <= kHeatSplit) return total;

  // Eigen expansion for s in [a, t]; modes outside the box are beyond the
  // e^{-lambda a} floor by construction of the cutoff.
  const double lmax = std::max(sides[0], sides[1]);
  const int cutoff = static_cast<int>(std::ceil(4.62 * lmax));
  const auto spectrum = m.laplace_spectrum(cutoff);
  for (const auto& e : spectrum.entries) {
    const double zonal = m.level_kernel(e, x, y);
    if (e.lambda <= 0.0) {
      total += zonal * (t - a);
    } else {
      total += zonal * (std::exp(-e.lambda * a) - std::exp(-e.lambda * t)) /
               e.lambda;
    }
  }
  return total;
}

RevuzReport revuz_check(const measure::GmcBuilder& builder,
                        const geom::Point& x0,
                        const Eigen::VectorXd& u_coeffs, double t,
                        double path_dt, int trials, std::uint64_t seed,
                        std::uint64_t field_stream) {
  const auto& sampler = builder.sampler();
  const auto& m = sampler.manifold();
  if (builder.scheme() != measure::Scheme::eigenfunction)
    throw std::invalid_argument("Revuz check requires the eigenfunction scheme");
  if (builder.flavor() != measure::Flavor::plain)
    throw std::invalid_argument("Revuz check requires the plain flavor");
  if (m.kind() != geom::ManifoldKind::FlatTorus || m.dimension() != 2)
    throw std::invalid_argument("unsupported: Revuz check requires a 2-torus");
  if (trials < 2) throw std::invalid_argument("at least two trials required");
  const auto& basis = sampler.basis();
  if (u_coeffs.size() != static_cast<long>(basis.mode_count()))
    throw std::invalid_argument("coefficient size mismatch");

  const auto& grid = basis.grid();
  const std::size_t G = grid.points.size();
  for (std::size_t g = 0; g < G; ++g)
    if (m.distance(x0, grid.points[g]) < 1e-9)
      throw std::invalid_argument("start point lies on a quadrature node");

  // Right side: deterministic grid sum for the fixed field sample.
  const field::FieldSample h = sampler.sample(seed, field_stream);
  const measure::LqgMeasure mu = builder.build(h);
  const Eigen::VectorXd u_grid = basis.synthesize(u_coeffs);
  std::vector<double> kernel(G);
  par::map_index(G, [&](std::size_t g) {
    kernel[g] = heat_kernel_time_integral(m, x0, grid.points[g], t);
  });
  std::vector<double> terms(G);
  for (std::size_t g = 0; g < G; ++g)
    terms[g] = u_grid[static_cast<long>(g)] * kernel[g] *
               mu.weights[static_cast<long>(g)];
  const double rhs = par::sum_pairwise(terms);

  // Left side: trapezoidal integral of u * density along sampled paths.
  const double gamma = builder.gamma();
  const double hg = 0.5 * gamma * gamma;
  const auto& modes = basis.modes();
  const auto& nu = sampler.form().nu();
  const double a_n = sampler.a_n();
  const std::size_t P = sampler.coefficient_count();

  std::vector<double> lhs(static_cast<std::size_t>(trials));
  par::map_index(lhs.size(), [&](std::size_t i) {
    const BrownianPath path =
        simulate_bm(m, x0, t, path_dt, seed, field_stream + 1 + i);
    std::vector<double> buf(modes.size());
    double acc = 0.0, prev = 0.0;
    for (std::size_t k = 0; k < path.positions.size(); ++k) {
      m.eval_modes(modes, path.positions[k], buf.data());
      double uval = 0.0;
      for (std::size_t j = 0; j < modes.size(); ++j)
        uval += u_coeffs[static_cast<long>(j)] * buf[j];
      double hv = 0.0, diag = 0.0;
      for (std::size_t p = 0; p < P; ++p) {
        const double scaled = buf[p + 1] / std::sqrt(a_n * nu[p + 1]);
        hv += h.xi[static_cast<long>(p)] * scaled;
        diag += scaled * scaled;
      }
      const double f = uval * std::exp(gamma * hv - hg * diag);
      if (k > 0) acc += 0.5 * (prev + f) * path_dt;
      prev = f;
    }
    lhs[i] = acc;
  });

  RevuzReport rep;
  rep.rhs_mean = rhs;
  rep.rhs_half_width = 0.0;
  mean_and_half_width(lhs, rep.lhs_mean, rep.lhs_half_width);
  rep.intervals_overlap =
      std::abs(rep.lhs_mean - rep.rhs_mean) <=
      rep.lhs_half_width + rep.rhs_half_width;
  return rep;
}

RandomGjmsOperator random_gjms_assemble(const field::FieldSampler& sampler,
                                        const measure::LqgMeasure& mu,
                                        int prefix) {
  const auto& basis = sampler.basis();
  const std::size_t count = sampler.coefficient_count();
  const std::size_t P =
      prefix < 0 ? count : static_cast<std::size_t>(prefix);
  if (P < 1 || P > count)
    throw std::invalid_argument("prefix exceeds the truncation");
  if (mu.weights.size() != static_cast<long>(basis.grid_size()))
    throw std::invalid_argument("measure grid mismatch");

  // Aliasing guard: products of retained modes must stay below the grid's
  // resolvable frequency, so the resolution must exceed twice the level.
  std::vector<geom::ModeKey> retained(basis.modes().begin(),
                                      basis.modes().begin() +
                                          static_cast<long>(P + 1));
  const int level = spectral::max_mode_level(sampler.manifold(), retained);
  if (basis.grid().resolution < 2 * level + 1)
    throw std::invalid_argument(
        "quadrature grid below the aliasing guard for retained modes");

  RandomGjmsOperator op;
  op.nu.resize(static_cast<long>(P));
  const auto& nu = sampler.form().nu();
  for (std::size_t p = 0; p < P; ++p) op.nu[static_cast<long>(p)] = nu[p + 1];

  const auto& B = basis.mode_matrix();
  const std::size_t G = basis.grid_size();
  const long Pl = static_cast<long>(P);
  op.gram.resize(Pl, Pl);
  // entries of the upper triangle in parallel, each by the fixed-tree sum
  par::map_index(P * (P + 1) / 2, [&](std::size_t e) {
    // row i, column j >= i from the flattened triangle index
    std::size_t i = 0, offset = e;
    while (offset >= P - i) {
      offset -= P - i;
      ++i;
    }
    const std::size_t j = i + offset;
    std::vector<double> terms(G);
    for (std::size_t g = 0; g < G; ++g)
      terms[g] = B(static_cast<long>(i) + 1, static_cast<long>(g)) *
                 B(static_cast<long>(j) + 1, static_cast<long>(g)) *
                 mu.weights[static_cast<long>(g)];
    const double value = par::sum_pairwise(terms);
    op.gram(static_cast<long>(i), static_cast<long>(j)) = value;
    op.gram(static_cast<long>(j), static_cast<long>(i)) = value;
  });

  Eigen::MatrixXd stiffness = op.nu.asDiagonal();
  const double scale = op.gram.trace() / static_cast<double>(P);
  double ridge = 0.0;
  for (int attempt = 0; attempt < 12; ++attempt) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(
        stiffness, op.gram, Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
    if (solver.info() == Eigen::Success) {
      op.theta = solver.eigenvalues();
      op.vectors = solver.eigenvectors();
      op.regularization = ridge;
      return op;
    }
    const double add = (ridge == 0.0 ? 1e-14 * scale : ridge * 9.0);
    op.gram.diagonal().array() += add;
    ridge += add;
  }
  throw std::runtime_error("Gram matrix not positive definite after regularization");
}

Eigen::VectorXd copoly_heat_flow(const RandomGjmsOperator& op,
                                 const Eigen::VectorXd& u0, double t) {
  if (u0.size() != op.nu.size())
    throw std::invalid_argument("coefficient size mismatch");
  if (t < 0.0) throw std::invalid_argument("nonnegative time required");
  const Eigen::VectorXd c = op.vectors.transpose() * (op.gram * u0);
  const Eigen::VectorXd decayed =
      (-op.theta.array() * t).exp().matrix().cwiseProduct(c);
  return op.vectors * decayed;
}

double copoly_energy(const RandomGjmsOperator& op, const Eigen::VectorXd& u) {
  if (u.size() != op.nu.size())
    throw std::invalid_argument("coefficient size mismatch");
  return u.dot(op.nu.cwiseProduct(u));
}

double copoly_dissipation(const RandomGjmsOperator& op,
                          const Eigen::VectorXd& u) {
  if (u.size() != op.nu.size())
    throw std::invalid_argument("coefficient size mismatch");
  const Eigen::VectorXd au = op.nu.cwiseProduct(u);
  const Eigen::VectorXd x = op.gram.llt().solve(au);
  return au.dot(x);
}

DissipationReport energy_dissipation_check(const RandomGjmsOperator& op,
                                           const Eigen::VectorXd& u0,
                                           const std::vector<double>& times,
                                           double fd_step) {
  if (!(fd_step > 0.0)) throw std::invalid_argument("positive step required");
  DissipationReport rep;
  rep.times = times;
  rep.defects.reserve(times.size());
  for (const double t : times) {
    if (t < fd_step)
      throw std::invalid_argument("times must exceed the finite-difference step");
    const double e_plus = copoly_energy(op, copoly_heat_flow(op, u0, t + fd_step));
    const double e_minus = copoly_energy(op, copoly_heat_flow(op, u0, t - fd_step));
    // the semigroup is the L^2(mu) gradient flow of p(u)/2, so the halved
    // energy decays at exactly the squared operator norm
    const double derivative = 0.5 * (e_plus - e_minus) / (2.0 * fd_step);
    const double defect = std::abs(
        derivative + copoly_dissipation(op, copoly_heat_flow(op, u0, t)));
    rep.defects.push_back(defect);
    rep.max_defect = std::max(rep.max_defect, defect);
  }
  return rep;
}

double copoly_form(const field::FieldSampler& sampler,
                   const Eigen::VectorXd& u_grid,
                   const Eigen::VectorXd& v_grid) {
  const auto& basis = sampler.basis();
  const Eigen::VectorXd uc = basis.analyze(u_grid);
  const Eigen::VectorXd vc = basis.analyze(v_grid);
  const auto& nu = sampler.form().nu();
  std::vector<double> terms(sampler.coefficient_count());
  for (std::size_t p = 0; p < terms.size(); ++p)
    terms[p] = nu[p + 1] * uc[static_cast<long>(p + 1)] *
               vc[static_cast<long>(p + 1)];
  return par::sum_pairwise(terms);
}

FormInvarianceReport conformal_form_invariance_check(
    const field::FieldSampler& sampler, const Eigen::VectorXd& u_grid,
    const Eigen::VectorXd& v_grid, const Eigen::VectorXd& phi_grid) {
  const auto& basis = sampler.basis();
  if (phi_grid.size() != static_cast<long>(basis.grid_size()))
    throw std::invalid_argument("grid size mismatch");
  FormInvarianceReport rep;
  rep.form_base = copoly_form(sampler, u_grid, v_grid);

  // Same value assembled through the rescaled volume element: the operator
  // picks up e^{-n phi}, the weights e^{+n phi}.
  Eigen::VectorXd vc = basis.analyze(v_grid);
  const auto& nu = sampler.form().nu();
  vc[0] = 0.0;
  for (std::size_t p = 0; p < sampler.coefficient_count(); ++p)
    vc[static_cast<long>(p + 1)] *= nu[p + 1];
  const Eigen::VectorXd pv = basis.synthesize(vc);
  const double n = static_cast<double>(sampler.manifold().dimension());
  const auto& w = basis.weights();
  std::vector<double> terms(basis.grid_size());
  for (std::size_t g = 0; g < terms.size(); ++g) {
    const long i = static_cast<long>(g);
    const double w_conf = w[i] * std::exp(n * phi_grid[i]);
    terms[g] = u_grid[i] * std::exp(-n * phi_grid[i]) * pv[i] * w_conf;
  }
  rep.form_conformal = par::sum_pairwise(terms);
  rep.relative_gap =
      std::abs(rep.form_conformal - rep.form_base) /
      std::max({std::abs(rep.form_base), std::abs(rep.form_conformal), 1e-300});
  return rep;
}

void dump_path_csv(const geom::ManifoldModel& m, const BrownianPath& path,
                   std::ostream& os) {
  std::string out = "t";
  for (int c = 0; c < m.dimension(); ++c) out += ",c" + std::to_string(c);
  out += "\n";
  for (std::size_t i = 0; i < path.positions.size(); ++i) {
    append_double(out, path.time(i));
    for (int c = 0; c < m.dimension(); ++c) {
      out += ",";
      append_double(out, path.positions[i].c[c]);
    }
    out += "\n";
  }
  os << out;
}

void dump_functional_csv(const AdditiveFunctional& a, std::ostream& os) {
  std::string out = "t,A\n";
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    append_double(out, a.dt * static_cast<double>(i));
    out += ",";
    append_double(out, a.values[i]);
    out += "\n";
  }
  os << out;
}

void dump_spectrum_csv(const RandomGjmsOperator& op, std::ostream& os) {
  std::string out = "index,theta\n";
  for (long j = 0; j < op.theta.size(); ++j) {
    out += std::to_string(j);
    out += ",";
    append_double(out, op.theta[j]);
    out += "\n";
  }
  os << out;
}

}  // namespace confield::dynamics
