#include "confield/measure.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "confield/gauss_legendre.hpp"
#include "confield/parallel.hpp"
#include "confield/rng.hpp"

namespace confield::measure {

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

double quantile_of(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("empty sample");
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto k = static_cast<std::size_t>(pos);
  std::nth_element(values.begin(), values.begin() + static_cast<long>(k),
                   values.end());
  return values[k];
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0) throw std::invalid_argument("degenerate regressor");
  return {sxy / sxx, my - (sxy / sxx) * mx};
}

void mean_and_half_width(const std::vector<double>& v, double& mean,
                         double& half_width) {
  const auto n = static_cast<double>(v.size());
  mean = par::sum_pairwise(v) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / std::max(1.0, n - 1.0));
  half_width = 1.96 * sd / std::sqrt(n);
}

}  // namespace

const char* flavor_name(Flavor f) {
  switch (f) {
    case Flavor::plain:
      return "plain";
    case Flavor::refined:
      return "refined";
    case Flavor::adjusted:
      return "adjusted";
  }
  return "plain";
}

const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::eigenfunction:
      return "eigenfunction";
    case Scheme::heat:
      return "heat";
    case Scheme::partition:
      return "partition";
  }
  return "eigenfunction";
}

double LqgMeasure::mass() const {
  return par::sum_pairwise(weights.data(),
                           static_cast<std::size_t>(weights.size()));
}

double LqgMeasure::subset_mass(const std::vector<std::size_t>& indices) const {
  std::vector<double> buf(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i)
    buf[i] = weights[static_cast<long>(indices[i])];
  return par::sum_pairwise(buf);
}

GmcBuilder::GmcBuilder(const field::FieldSampler& sampler, double gamma,
                       Flavor flavor, Scheme scheme, double scheme_param)
    : sampler_(sampler),
      gamma_(gamma),
      flavor_(flavor),
      scheme_(scheme),
      scheme_param_(scheme_param) {
  const int n = sampler.manifold().dimension();
  if (!(std::abs(gamma) < std::sqrt(2.0 * n)))
    throw std::domain_error(
        "subcritical range (-sqrt(2n), sqrt(2n)) required");

  const auto& basis = sampler.basis();
  const auto J = static_cast<long>(basis.mode_count());
  const auto G = static_cast<long>(basis.grid_size());
  const auto& modes = basis.modes();

  switch (scheme_) {
    case Scheme::eigenfunction:
      smooth_ = basis.mode_matrix();
      break;
    case Scheme::heat: {
      const double t = scheme_param_ > 0.0
                           ? scheme_param_
                           : 1.0 / static_cast<double>(
                                       sampler.coefficient_count());
      scheme_param_ = t;
      smooth_ = basis.mode_matrix();
      for (long j = 0; j < J; ++j)
        smooth_.row(j) *= std::exp(-modes[static_cast<std::size_t>(j)].lambda *
                                   t);
      break;
    }
    case Scheme::partition: {
      const auto desc = sampler.manifold().descriptor();
      if (desc.kind != geom::ManifoldKind::FlatTorus)
        throw std::invalid_argument(
            "unsupported: partition scheme on this geometry");
      const int cells = static_cast<int>(scheme_param_);
      if (cells < 1) throw std::invalid_argument("at least one cell required");
      const int dim = desc.dimension;
      const auto rule = quad::gauss_legendre(8);
      // cell averages of every mode, shared by all grid points in a cell
      long ncells = 1;
      for (int a = 0; a < dim; ++a) ncells *= cells;
      Eigen::MatrixXd cell_avg = Eigen::MatrixXd::Zero(J, ncells);
      std::vector<geom::ModeKey> mode_list = modes;
      par::map_index(static_cast<std::size_t>(ncells), [&](std::size_t c) {
        std::array<long, 6> digit{};
        long rem = static_cast<long>(c);
        for (int a = 0; a < dim; ++a) {
          digit[static_cast<std::size_t>(a)] = rem % cells;
          rem /= cells;
        }
        // tensor-product quadrature over the cell, total weight one
        std::vector<double> vals(static_cast<std::size_t>(J), 0.0);
        const long nodes_per_axis = static_cast<long>(rule.x.size());
        long total = 1;
        for (int a = 0; a < dim; ++a) total *= nodes_per_axis;
        for (long q = 0; q < total; ++q) {
          long qr = q;
          geom::Point p;
          p.dim = dim;
          double wq = 1.0;
          for (int a = 0; a < dim; ++a) {
            const auto nd = static_cast<std::size_t>(qr % nodes_per_axis);
            qr /= nodes_per_axis;
            const double width =
                desc.side_lengths[static_cast<std::size_t>(a)] / cells;
            const double u = 0.5 * (rule.x[nd] + 1.0);
            p.c[static_cast<std::size_t>(a)] =
                (static_cast<double>(digit[static_cast<std::size_t>(a)]) + u) *
                width;
            wq *= 0.5 * rule.w[nd];
          }
          sampler.manifold().eval_modes(mode_list, p, vals.data());
          for (long j = 0; j < J; ++j)
            cell_avg(j, static_cast<long>(c)) +=
                wq * vals[static_cast<std::size_t>(j)];
        }
      });
      smooth_.resize(J, G);
      const auto& grid = basis.grid();
      for (long i = 0; i < G; ++i) {
        const auto& p = grid.points[static_cast<std::size_t>(i)];
        long c = 0;
        for (int a = dim - 1; a >= 0; --a) {
          const double width =
              desc.side_lengths[static_cast<std::size_t>(a)] / cells;
          long d = static_cast<long>(
              std::floor(p.c[static_cast<std::size_t>(a)] / width));
          d = std::clamp(d, 0L, static_cast<long>(cells) - 1);
          c = c * cells + d;
        }
        smooth_.col(i) = cell_avg.col(c);
      }
      break;
    }
  }

  // renormalize by the variance of the scheme field itself
  if (scheme_ == Scheme::eigenfunction) {
    diag_ = sampler.grid_diagonal();
  } else {
    const auto& nu = sampler.form().nu();
    diag_.resize(G);
    par::map_index(static_cast<std::size_t>(G), [&](std::size_t i) {
      double acc = 0.0;
      for (long j = 1; j < J; ++j) {
        const double s = smooth_(j, static_cast<long>(i)) /
                         std::sqrt(sampler.a_n() *
                                   nu[static_cast<std::size_t>(j)]);
        acc += s * s;
      }
      diag_[static_cast<long>(i)] = acc;
    });
  }

  if (flavor_ != Flavor::plain) {
    const auto rf = spectral::r_g_field(basis, sampler.form());
    r_values_ =
        Eigen::Map<const Eigen::VectorXd>(rf.values.data(),
                                          static_cast<long>(rf.values.size()));
    c_g_ = rf.c_g;
    if (flavor_ == Flavor::refined) {
      const Eigen::VectorXd r_coeffs = basis.analyze(r_values_);
      const auto& nu = sampler.form().nu();
      noise_proj_.resize(J - 1);
      for (long j = 1; j < J; ++j)
        noise_proj_[j - 1] =
            r_coeffs[j] *
            std::sqrt(nu[static_cast<std::size_t>(j)] / sampler.a_n());
    }
  }
}

Eigen::VectorXd GmcBuilder::field_grid(const field::FieldSample& s) const {
  return smooth_.transpose() * sampler_.field_coefficients(s);
}

Eigen::VectorXd GmcBuilder::smoothed_from_coefficients(
    const Eigen::VectorXd& coeffs) const {
  return smooth_.transpose() * coeffs;
}

Eigen::VectorXd GmcBuilder::prefix_diagonal(std::size_t prefix) const {
  const auto& nu = sampler_.form().nu();
  const auto G = static_cast<long>(sampler_.basis().grid_size());
  const long stop = static_cast<long>(prefix) + 1;
  Eigen::VectorXd d(G);
  par::map_index(static_cast<std::size_t>(G), [&](std::size_t i) {
    double acc = 0.0;
    for (long j = 1; j < stop; ++j) {
      const double s =
          smooth_(j, static_cast<long>(i)) /
          std::sqrt(sampler_.a_n() * nu[static_cast<std::size_t>(j)]);
      acc += s * s;
    }
    d[static_cast<long>(i)] = acc;
  });
  return d;
}

LqgMeasure GmcBuilder::assemble(const Eigen::VectorXd& fvals,
                                const Eigen::VectorXd& diag,
                                double sample_factor) const {
  const auto& w = sampler_.basis().weights();
  const auto G = w.size();
  const double hg = 0.5 * gamma_ * gamma_;
  LqgMeasure mu;
  mu.weights.resize(G);
  par::map_index(static_cast<std::size_t>(G), [&](std::size_t idx) {
    const auto i = static_cast<long>(idx);
    double e = gamma_ * fvals[i] - hg * diag[i];
    switch (flavor_) {
      case Flavor::plain:
        break;
      case Flavor::adjusted:
        e += hg * r_values_[i];
        break;
      case Flavor::refined:
        e += hg * (r_values_[i] - c_g_) + sample_factor;
        break;
    }
    mu.weights[i] = w[i] * std::exp(e);
  });
  mu.gamma = gamma_;
  mu.flavor = flavor_;
  mu.scheme = scheme_;
  return mu;
}

LqgMeasure GmcBuilder::build(const field::FieldSample& s) const {
  double factor = 0.0;
  if (flavor_ == Flavor::refined)
    factor = -0.5 * gamma_ * sampler_.a_n() * noise_proj_.dot(s.xi);
  LqgMeasure mu = assemble(field_grid(s), diag_, factor);
  mu.truncation = static_cast<int>(sampler_.coefficient_count());
  mu.seed = s.seed;
  mu.stream = s.stream;
  return mu;
}

LqgMeasure GmcBuilder::build_prefix(const field::FieldSample& s,
                                    std::size_t prefix) const {
  if (flavor_ == Flavor::refined)
    throw std::invalid_argument(
        "prefix builds support the plain and adjusted flavors");
  if (prefix > sampler_.coefficient_count())
    throw std::invalid_argument("prefix exceeds the truncation");
  Eigen::VectorXd c = sampler_.field_coefficients(s);
  for (long j = static_cast<long>(prefix) + 1; j < c.size(); ++j) c[j] = 0.0;
  LqgMeasure mu =
      assemble(smooth_.transpose() * c, prefix_diagonal(prefix), 0.0);
  mu.truncation = static_cast<int>(prefix);
  mu.seed = s.seed;
  mu.stream = s.stream;
  return mu;
}

std::vector<LqgMeasure> GmcBuilder::build_many(std::uint64_t seed,
                                               std::uint64_t first_stream,
                                               int count) const {
  const auto samples = sampler_.sample_many(seed, first_stream, count);
  std::vector<LqgMeasure> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(build(s));
  return out;
}

ShiftCheckReport cameron_martin_shift_check(
    const GmcBuilder& builder, const field::FieldSample& s,
    const Eigen::VectorXd& phi_coeffs) {
  const auto& sampler = builder.sampler();
  const auto& nu = sampler.form().nu();
  const auto P = sampler.coefficient_count();

  field::FieldSample shifted = s;
  Eigen::VectorXd phic = phi_coeffs;
  phic[0] = 0.0;  // the field carries no constant mode
  for (std::size_t p = 0; p < P; ++p)
    shifted.xi[static_cast<long>(p)] +=
        phic[static_cast<long>(p) + 1] * std::sqrt(sampler.a_n() * nu[p + 1]);

  const LqgMeasure from_shift = builder.build(shifted);
  const LqgMeasure base = builder.build(s);

  // the shift enters the weights through the scheme's own smoothing
  const Eigen::VectorXd phi_scheme = builder.smoothed_from_coefficients(phic);

  double extra = 0.0;
  if (builder.flavor() == Flavor::refined) {
    // <phi, P_g r> shifts the sample-dependent correction
    double acc = 0.0;
    for (std::size_t p = 0; p < P; ++p)
      acc += phic[static_cast<long>(p) + 1] *
             std::sqrt(sampler.a_n() * nu[p + 1]) *
             builder.noise_projection()[static_cast<long>(p)];
    extra = -0.5 * builder.gamma() * sampler.a_n() * acc;
  }

  ShiftCheckReport rep;
  for (long i = 0; i < base.weights.size(); ++i) {
    const double ref =
        base.weights[i] * std::exp(builder.gamma() * phi_scheme[i] + extra);
    const double dev = std::abs(from_shift.weights[i] - ref) /
                       std::max(std::abs(ref), 1e-300);
    rep.max_relative_deviation = std::max(rep.max_relative_deviation, dev);
  }
  rep.pass = rep.max_relative_deviation < 1e-12;
  return rep;
}

CampbellReport campbell_check(
    const GmcBuilder& builder, const Eigen::VectorXd& u_grid,
    const std::function<double(double, std::size_t)>& f, int samples,
    std::uint64_t seed, std::uint64_t first_stream) {
  if (builder.flavor() == Flavor::refined)
    throw std::invalid_argument(
        "campbell check supports the plain and adjusted flavors");
  const auto& sampler = builder.sampler();
  const auto& basis = sampler.basis();
  const auto& nu = sampler.form().nu();
  const auto G = static_cast<std::size_t>(basis.grid_size());

  const Eigen::VectorXd u_coeffs = basis.analyze(u_grid);
  // covariance of the pairing <h,u> with the scheme field at each point
  Eigen::VectorXd cross = Eigen::VectorXd::Zero(u_coeffs.size());
  for (long j = 1; j < u_coeffs.size(); ++j)
    cross[j] = u_coeffs[j] /
               (sampler.a_n() * nu[static_cast<std::size_t>(j)]);
  const Eigen::VectorXd shift_pair = builder.smoothed_from_coefficients(cross);

  // deterministic side weights carry the flavor's curvature factor
  Eigen::VectorXd det_w = basis.weights();
  if (builder.flavor() == Flavor::adjusted) {
    const double hg = 0.5 * builder.gamma() * builder.gamma();
    for (long i = 0; i < det_w.size(); ++i)
      det_w[i] *= std::exp(hg * builder.r_values()[i]);
  }

  const auto draws = sampler.sample_many(seed, first_stream, samples);
  std::vector<double> lhs(static_cast<std::size_t>(samples));
  std::vector<double> rhs(static_cast<std::size_t>(samples));
  par::map_index(static_cast<std::size_t>(samples), [&](std::size_t k) {
    const auto& s = draws[k];
    const double paired = sampler.pair_coefficients(s, u_coeffs);
    const LqgMeasure mu = builder.build(s);
    std::vector<double> bl(G), br(G);
    for (std::size_t i = 0; i < G; ++i) {
      bl[i] = mu.weights[static_cast<long>(i)] * f(paired, i);
      br[i] = det_w[static_cast<long>(i)] *
              f(paired + builder.gamma() * shift_pair[static_cast<long>(i)],
                i);
    }
    lhs[k] = par::sum_pairwise(bl);
    rhs[k] = par::sum_pairwise(br);
  });

  CampbellReport rep;
  mean_and_half_width(lhs, rep.lhs_mean, rep.lhs_half_width);
  mean_and_half_width(rhs, rep.rhs_mean, rep.rhs_half_width);
  rep.intervals_overlap =
      std::abs(rep.lhs_mean - rep.rhs_mean) <=
      rep.lhs_half_width + rep.rhs_half_width;
  return rep;
}

MartingaleReport martingale_check(const GmcBuilder& builder,
                                  const std::vector<std::size_t>& subset,
                                  std::size_t prefix_coarse,
                                  std::size_t prefix_fine, int outer,
                                  int inner, std::uint64_t seed) {
  const auto& sampler = builder.sampler();
  const auto P = sampler.coefficient_count();
  if (!(prefix_coarse < prefix_fine && prefix_fine <= P))
    throw std::invalid_argument("prefixes must satisfy l1 < l2 <= truncation");

  std::vector<double> coarse(static_cast<std::size_t>(outer));
  std::vector<double> fine(static_cast<std::size_t>(outer));
  par::map_index(static_cast<std::size_t>(outer), [&](std::size_t o) {
    const std::uint64_t base_stream =
        0x100000000ull * (static_cast<std::uint64_t>(o) + 1);
    field::FieldSample s;
    s.xi = Eigen::VectorXd::Zero(static_cast<long>(P));
    s.seed = seed;
    s.stream = base_stream;
    const rng::Stream head(seed, base_stream);
    for (std::size_t p = 0; p < prefix_coarse; ++p)
      s.xi[static_cast<long>(p)] = head.normal(p);
    coarse[o] = builder.build_prefix(s, prefix_coarse).subset_mass(subset);

    std::vector<double> inner_mass(static_cast<std::size_t>(inner));
    for (int i = 0; i < inner; ++i) {
      const rng::Stream tail(seed,
                             base_stream + 1 + static_cast<std::uint64_t>(i));
      field::FieldSample t = s;
      for (std::size_t p = prefix_coarse; p < prefix_fine; ++p)
        t.xi[static_cast<long>(p)] = tail.normal(p);
      inner_mass[static_cast<std::size_t>(i)] =
          builder.build_prefix(t, prefix_fine).subset_mass(subset);
    }
    fine[o] = par::sum_pairwise(inner_mass) / static_cast<double>(inner);
  });

  const auto m = static_cast<double>(outer);
  double mx = par::sum_pairwise(coarse) / m;
  double my = par::sum_pairwise(fine) / m;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t o = 0; o < coarse.size(); ++o) {
    sxx += (coarse[o] - mx) * (coarse[o] - mx);
    sxy += (coarse[o] - mx) * (fine[o] - my);
  }
  MartingaleReport rep;
  rep.slope = sxy / sxx;
  rep.intercept = my - rep.slope * mx;
  double ss_res = 0.0;
  for (std::size_t o = 0; o < coarse.size(); ++o) {
    const double r = fine[o] - rep.intercept - rep.slope * coarse[o];
    ss_res += r * r;
  }
  const double sigma2 = ss_res / (m - 2.0);
  rep.slope_half_width = 1.96 * std::sqrt(sigma2 / sxx);
  rep.intercept_half_width =
      1.96 * std::sqrt(sigma2 * (1.0 / m + mx * mx / sxx));
  rep.coarse_mean = mx;
  rep.fine_mean = my;
  {
    const auto& w = sampler.basis().weights();
    std::vector<double> buf(subset.size());
    for (std::size_t i = 0; i < subset.size(); ++i) {
      double dw = w[static_cast<long>(subset[i])];
      if (builder.flavor() == Flavor::adjusted)
        dw *= std::exp(0.5 * builder.gamma() * builder.gamma() *
                       builder.r_values()[static_cast<long>(subset[i])]);
      buf[i] = dw;
    }
    rep.subset_volume = par::sum_pairwise(buf);
  }
  rep.pass = std::abs(rep.slope - 1.0) <= rep.slope_half_width &&
             std::abs(rep.intercept) <= rep.intercept_half_width;
  return rep;
}

ConformalMeasureResult conformal_measure_transform(
    const GmcBuilder& builder, const field::FieldSample& s,
    const Eigen::VectorXd& phi_grid) {
  if (builder.scheme() != Scheme::eigenfunction)
    throw std::invalid_argument(
        "conformal transform requires the eigenfunction scheme");
  if (builder.flavor() == Flavor::refined)
    throw std::invalid_argument(
        "conformal transform supports the plain and adjusted flavors");
  const auto& sampler = builder.sampler();
  const int n = sampler.manifold().dimension();
  const double g = builder.gamma();
  const double hg = 0.5 * g * g;

  const field::ConformalFieldTransform cft(sampler, phi_grid);
  const double xi_bar = cft.mean_shift(s);

  const spectral::ConformalKernelTransform ckt(sampler.basis(),
                                               sampler.form(), phi_grid);
  const auto& grid = sampler.basis().grid();
  const auto G = static_cast<long>(grid.points.size());
  Eigen::VectorXd phibar(G);
  par::map_index(static_cast<std::size_t>(G), [&](std::size_t i) {
    phibar[static_cast<long>(i)] =
        ckt.phibar_log(grid.points[i]);
  });

  ConformalMeasureResult out;
  out.xi_bar = xi_bar;
  out.phibar = phibar;
  out.factor.resize(G);
  for (long i = 0; i < G; ++i) {
    const double e =
        builder.flavor() == Flavor::adjusted
            ? -g * xi_bar + (n + hg) * phi_grid[i]
            : -g * xi_bar + hg * phibar[i] + n * phi_grid[i];
    out.factor[i] = std::exp(e);
  }
  out.transformed = builder.build(s);
  out.transformed.weights =
      out.transformed.weights.cwiseProduct(out.factor);
  return out;
}

BallScalingReport ball_scaling_stats(const field::FieldSampler& sampler,
                                     const std::vector<LqgMeasure>& ensemble,
                                     const geom::Point& center,
                                     const std::vector<double>& radii,
                                     double quantile) {
  if (ensemble.empty()) throw std::invalid_argument("empty ensemble");
  if (radii.size() < 2)
    throw std::invalid_argument("at least two radii required");
  const auto& grid = sampler.basis().grid();
  const auto G = grid.points.size();
  const auto& m = sampler.manifold();
  const double resolution =
      std::pow(m.volume() / static_cast<double>(G),
               1.0 / static_cast<double>(m.dimension()));
  for (double r : radii)
    if (r < 2.0 * resolution)
      throw std::invalid_argument("radius below grid resolution");

  std::vector<double> dist(G);
  par::map_index(G, [&](std::size_t i) {
    dist[i] = m.distance(center, grid.points[i]);
  });
  std::vector<std::size_t> order(G);
  for (std::size_t i = 0; i < G; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  std::vector<double> sorted_d(G);
  for (std::size_t i = 0; i < G; ++i) sorted_d[i] = dist[order[i]];

  BallScalingReport rep;
  rep.radii = radii;
  rep.quantile = quantile;
  rep.mean_mass.resize(radii.size());
  rep.quantile_mass.resize(radii.size());

  // per-measure running sums in distance order give every radius at once
  std::vector<std::vector<double>> mass(
      radii.size(), std::vector<double>(ensemble.size(), 0.0));
  par::map_index(ensemble.size(), [&](std::size_t e) {
    const auto& w = ensemble[e].weights;
    double run = 0.0;
    std::size_t i = 0;
    for (std::size_t r = 0; r < radii.size(); ++r) {
      while (i < G && sorted_d[i] <= radii[r]) {
        run += w[static_cast<long>(order[i])];
        ++i;
      }
      mass[r][e] = run;
    }
  });
  std::vector<double> lx(radii.size()), ly(radii.size()), lq(radii.size());
  for (std::size_t r = 0; r < radii.size(); ++r) {
    rep.mean_mass[r] =
        par::sum_pairwise(mass[r]) / static_cast<double>(ensemble.size());
    rep.quantile_mass[r] = quantile_of(mass[r], quantile);
    lx[r] = std::log(radii[r]);
    ly[r] = std::log(rep.mean_mass[r]);
    lq[r] = std::log(rep.quantile_mass[r]);
  }
  rep.mean_slope = fit_line(lx, ly).slope;
  rep.quantile_slope = fit_line(lx, lq).slope;
  return rep;
}

UiFitReport uniform_integrability_fit(const field::FieldSampler& sampler,
                                      int pairs, std::uint64_t seed) {
  if (pairs < 2) throw std::invalid_argument("at least two pairs required");
  const auto& m = sampler.manifold();
  const double cutoff_scale =
      std::max(1.0, static_cast<double>(sampler.level_cutoff()));
  const rng::Stream st(seed, 0);
  std::vector<double> z(static_cast<std::size_t>(pairs));
  std::vector<double> k(static_cast<std::size_t>(pairs));
  par::map_index(static_cast<std::size_t>(pairs), [&](std::size_t i) {
    const geom::Point x = m.random_point(st, 2 * i);
    const geom::Point y = m.random_point(st, 2 * i + 1);
    const double d = std::max(m.distance(x, y), 1.0 / cutoff_scale);
    z[i] = std::log(1.0 / d);
    k[i] = sampler.covariance(x, y);
  });
  const LineFit fit = fit_line(z, k);
  UiFitReport rep;
  rep.theta = fit.slope;
  rep.offset = fit.intercept;
  rep.pairs = pairs;
  for (std::size_t i = 0; i < z.size(); ++i)
    rep.max_residual =
        std::max(rep.max_residual, k[i] - (fit.slope * z[i] + fit.intercept));
  return rep;
}

std::vector<MomentEntry> moment_summary(const std::vector<double>& masses,
                                        const std::vector<double>& orders,
                                        double cap_fraction) {
  if (masses.empty()) throw std::invalid_argument("empty sample");
  const double median = quantile_of(masses, 0.5);
  std::vector<MomentEntry> out;
  out.reserve(orders.size());
  for (double p : orders) {
    MomentEntry e;
    e.p = p;
    if (p < 0.0) e.cap = cap_fraction * median;
    std::vector<double> buf(masses.size());
    for (std::size_t i = 0; i < masses.size(); ++i) {
      const double v = p < 0.0 ? std::max(masses[i], e.cap) : masses[i];
      buf[i] = std::pow(v, p);
    }
    e.value = par::sum_pairwise(buf) / static_cast<double>(masses.size());
    out.push_back(e);
  }
  return out;
}

std::string ensemble_summary_json(const GmcBuilder& builder,
                                  const std::vector<LqgMeasure>& ensemble,
                                  const std::vector<double>& orders) {
  std::vector<double> masses(ensemble.size());
  for (std::size_t i = 0; i < ensemble.size(); ++i)
    masses[i] = ensemble[i].mass();
  double mean = 0.0, hw = 0.0;
  mean_and_half_width(masses, mean, hw);
  double var = 0.0;
  for (double x : masses) var += (x - mean) * (x - mean);
  var /= std::max<std::size_t>(1, masses.size() - 1);

  nlohmann::json j;
  j["gamma"] = builder.gamma();
  j["ell"] = static_cast<int>(builder.sampler().coefficient_count());
  j["scheme"] = scheme_name(builder.scheme());
  j["mass_mean"] = mean;
  j["mass_var"] = var;
  nlohmann::json mom = nlohmann::json::object();
  for (const auto& e : moment_summary(masses, orders)) {
    char key[32];
    std::snprintf(key, sizeof(key), "%g", e.p);
    mom[key] = e.value;
  }
  j["moments"] = mom;
  return j.dump();
}

void dump_measure_csv(const field::FieldSampler& sampler, const LqgMeasure& mu,
                      std::ostream& os) {
  const auto& grid = sampler.basis().grid();
  const int dim = sampler.manifold().dimension();
  std::string line;
  for (int a = 0; a < dim; ++a) {
    line += "c";
    line += std::to_string(a);
    line += ",";
  }
  line += "weight\n";
  os << line;
  for (std::size_t i = 0; i < grid.points.size(); ++i) {
    line.clear();
    for (int a = 0; a < dim; ++a) {
      append_double(line, grid.points[i].c[static_cast<std::size_t>(a)]);
      line += ",";
    }
    append_double(line, mu.weights[static_cast<long>(i)]);
    line += "\n";
    os << line;
  }
}

}  // namespace confield::measure
