#include "confield/field.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include "confield/gauss_legendre.hpp"
#include "confield/parallel.hpp"
#include "confield/rng.hpp"

namespace confield::field {

namespace {

constexpr double kPi = std::numbers::pi;

int total_mode_count(const geom::ManifoldModel& m, int level_cutoff) {
  const auto spec = m.laplace_spectrum(level_cutoff);
  int count = 0;
  for (const auto& e : spec.entries) count += e.multiplicity;
  return count;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

FieldSampler::FieldSampler(std::shared_ptr<const geom::ManifoldModel> m,
                           int level_cutoff, int grid_resolution)
    : basis_(m, m ? total_mode_count(*m, level_cutoff) : 1, grid_resolution),
      form_(*m, basis_.modes()),
      eval_(m, level_cutoff, spectral::KernelKind::normalized),
      cutoff_(level_cutoff) {
  if (!form_.admissible()) throw std::domain_error("not admissible");
  const auto& modes = basis_.modes();
  if (modes.empty() || modes.front().lambda != 0.0)
    throw std::invalid_argument("mode set must start with the constant");
  a_n_ = spectral::a_n_constant(m->dimension());
  const std::size_t P = modes.size() - 1;
  sqrt_inv_.resize(long(P));
  for (std::size_t p = 0; p < P; ++p)
    sqrt_inv_[long(p)] = 1.0 / std::sqrt(a_n_ * form_.nu()[p + 1]);
  grid_diag_.resize(long(basis_.grid_size()));
  const auto& B = basis_.mode_matrix();
  par::map_index(basis_.grid_size(), [&](std::size_t i) {
    double acc = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      const double v = B(long(p + 1), long(i)) * sqrt_inv_[long(p)];
      acc += v * v;
    }
    grid_diag_[long(i)] = acc;
  });
}

FieldSample FieldSampler::sample(std::uint64_t seed,
                                 std::uint64_t stream) const {
  rng::Stream st(seed, stream);
  FieldSample s;
  s.seed = seed;
  s.stream = stream;
  s.xi.resize(sqrt_inv_.size());
  for (long p = 0; p < s.xi.size(); ++p) s.xi[p] = st.normal(std::uint64_t(p));
  return s;
}

std::vector<FieldSample> FieldSampler::sample_many(std::uint64_t seed,
                                                   std::uint64_t first_stream,
                                                   int count) const {
  std::vector<FieldSample> out(std::size_t(std::max(count, 0)));
  par::map_index(out.size(), [&](std::size_t i) {
    out[i] = sample(seed, first_stream + i);
  });
  return out;
}

double FieldSampler::evaluate(const FieldSample& s,
                              const geom::Point& x) const {
  return evaluate_prefix(s, std::size_t(s.xi.size()), x);
}

double FieldSampler::evaluate_prefix(const FieldSample& s, std::size_t prefix,
                                     const geom::Point& x) const {
  if (s.xi.size() != sqrt_inv_.size())
    throw std::invalid_argument("sample does not match this sampler");
  prefix = std::min(prefix, std::size_t(s.xi.size()));
  std::vector<double> vals(basis_.mode_count());
  manifold().eval_modes(basis_.modes(), x, vals.data());
  double acc = 0.0;
  for (std::size_t p = 0; p < prefix; ++p)
    acc += vals[p + 1] * s.xi[long(p)] * sqrt_inv_[long(p)];
  return acc;
}

Eigen::VectorXd FieldSampler::grid_values(const FieldSample& s) const {
  return basis_.synthesize(field_coefficients(s));
}

Eigen::VectorXd FieldSampler::field_coefficients(const FieldSample& s) const {
  if (s.xi.size() != sqrt_inv_.size())
    throw std::invalid_argument("sample does not match this sampler");
  Eigen::VectorXd c = Eigen::VectorXd::Zero(long(basis_.mode_count()));
  for (long p = 0; p < s.xi.size(); ++p)
    c[p + 1] = s.xi[p] * sqrt_inv_[p];
  return c;
}

double FieldSampler::pair_coefficients(const FieldSample& s,
                                       const Eigen::VectorXd& u_coeffs) const {
  return pair_coefficients_prefix(s, std::size_t(s.xi.size()), u_coeffs);
}

double FieldSampler::pair_coefficients_prefix(
    const FieldSample& s, std::size_t prefix,
    const Eigen::VectorXd& u_coeffs) const {
  if (u_coeffs.size() != long(basis_.mode_count()))
    throw std::invalid_argument("coefficient size mismatch");
  prefix = std::min(prefix, std::size_t(s.xi.size()));
  double acc = 0.0;
  for (std::size_t p = 0; p < prefix; ++p)
    acc += u_coeffs[long(p + 1)] * s.xi[long(p)] * sqrt_inv_[long(p)];
  return acc;
}

double FieldSampler::kappa(const Eigen::VectorXd& u_coeffs,
                           const Eigen::VectorXd& v_coeffs) const {
  if (u_coeffs.size() != long(basis_.mode_count()) ||
      v_coeffs.size() != long(basis_.mode_count()))
    throw std::invalid_argument("coefficient size mismatch");
  double acc = 0.0;
  for (long p = 0; p < sqrt_inv_.size(); ++p)
    acc += u_coeffs[p + 1] * v_coeffs[p + 1] * sqrt_inv_[p] * sqrt_inv_[p];
  return acc;
}

double FieldSampler::covariance(const geom::Point& x,
                                const geom::Point& y) const {
  return eval_(x, y);
}

double FieldSampler::covariance_diagonal(const geom::Point& x) const {
  return eval_.normalized_diagonal(x);
}

Eigen::VectorXd FieldSampler::white_noise_extract(const FieldSample& s) const {
  if (s.xi.size() != sqrt_inv_.size())
    throw std::invalid_argument("sample does not match this sampler");
  return s.xi;
}

FieldSample FieldSampler::field_from_noise(const Eigen::VectorXd& xi) const {
  if (xi.size() != sqrt_inv_.size())
    throw std::invalid_argument("coefficient size mismatch");
  FieldSample s;
  s.xi = xi;
  return s;
}

int level_cutoff_for_nu_cap(const geom::ManifoldModel& m, double nu_cap) {
  if (nu_cap <= 0.0) throw std::invalid_argument("positive cap required");
  if (!m.is_einstein())
    throw std::invalid_argument("unsupported: non-Einstein model");
  const auto desc = m.descriptor();
  const double k = m.einstein_constant();
  const int n = m.dimension();
  const auto lambda_max_at = [&](int c) {
    switch (desc.kind) {
      case geom::ManifoldKind::Sphere:
        return double(c) * (c + n - 1) / (desc.radius * desc.radius);
      case geom::ManifoldKind::FlatTorus: {
        double acc = 0.0;
        for (double side : desc.side_lengths) {
          const double f = 2.0 * kPi * c / side;
          acc += f * f;
        }
        return acc;
      }
      case geom::ManifoldKind::ProductSurfaces:
        return double(c) * (c + 1) * (desc.curvature_1 + desc.curvature_2);
    }
    return 0.0;
  };
  int level = 0;
  for (int c = 1; c <= (1 << 20); ++c) {
    if (spectral::gjms_nu(lambda_max_at(c), k, n) > nu_cap) return level;
    level = c;
  }
  throw std::runtime_error("level cutoff overflow");
}

GirsanovReport girsanov_shift_check(
    const FieldSampler& sampler, const Eigen::VectorXd& phi_coeffs,
    const std::function<double(const FieldSample&)>& functional, int samples,
    std::uint64_t seed, bool common_random_numbers) {
  if (samples < 2) throw std::invalid_argument("at least 2 samples required");
  if (phi_coeffs.size() != long(sampler.basis().mode_count()))
    throw std::invalid_argument("coefficient size mismatch");
  const std::size_t P = sampler.coefficient_count();
  Eigen::VectorXd shift{long(P)};
  for (std::size_t p = 0; p < P; ++p)
    shift[long(p)] = phi_coeffs[long(p + 1)] *
                     std::sqrt(sampler.a_n() * sampler.form().nu()[p + 1]);
  const double snorm2 = shift.squaredNorm();  // a_n * p(phi, phi)

  const std::size_t N = std::size_t(samples);
  std::vector<double> fs(N), fw(N), w(N);
  par::map_index(N, [&](std::size_t i) {
    FieldSample base = sampler.sample(seed, i);
    FieldSample shifted = base;
    shifted.xi += shift;
    fs[i] = functional(shifted);
    const FieldSample& plain =
        common_random_numbers ? base : (base = sampler.sample(seed, N + i));
    w[i] = std::exp(plain.xi.dot(shift) - 0.5 * snorm2);
    fw[i] = functional(plain) * w[i];
  });

  GirsanovReport rep;
  rep.shifted_mean = par::sum_pairwise(fs) / double(N);
  rep.weighted_mean = par::sum_pairwise(fw) / double(N);
  std::vector<double> ds(N), dw(N), w2(N);
  for (std::size_t i = 0; i < N; ++i) {
    ds[i] = (fs[i] - rep.shifted_mean) * (fs[i] - rep.shifted_mean);
    dw[i] = (fw[i] - rep.weighted_mean) * (fw[i] - rep.weighted_mean);
    w2[i] = w[i] * w[i];
  }
  const double scale = 1.96 / std::sqrt(double(N));
  rep.shifted_half_width =
      scale * std::sqrt(par::sum_pairwise(ds) / double(N - 1));
  rep.weighted_half_width =
      scale * std::sqrt(par::sum_pairwise(dw) / double(N - 1));
  const double wsum = par::sum_pairwise(w);
  rep.effective_sample_size = wsum * wsum / par::sum_pairwise(w2);
  rep.low_effective_sample = rep.effective_sample_size < double(N) / 10.0;
  rep.intervals_overlap =
      std::abs(rep.shifted_mean - rep.weighted_mean) <=
      rep.shifted_half_width + rep.weighted_half_width;
  return rep;
}

ConformalFieldTransform::ConformalFieldTransform(const FieldSampler& sampler,
                                                 Eigen::VectorXd phi_grid)
    : sampler_(sampler) {
  if (phi_grid.size() != long(sampler.basis().grid_size()))
    throw std::invalid_argument("grid size mismatch");
  const double n = sampler.manifold().dimension();
  conf_ = (n * phi_grid.array()).exp();
  wconf_ = sampler.basis().weights().cwiseProduct(conf_);
  vprime_ = wconf_.sum();
}

double ConformalFieldTransform::mean_shift(const FieldSample& s) const {
  return wconf_.dot(sampler_.grid_values(s)) / vprime_;
}

double ConformalFieldTransform::pair(const FieldSample& s,
                                     const Eigen::VectorXd& u_grid) const {
  if (u_grid.size() != wconf_.size())
    throw std::invalid_argument("grid size mismatch");
  const Eigen::VectorXd h = sampler_.grid_values(s);
  const double ubar = wconf_.dot(u_grid) / vprime_;
  double acc = 0.0;
  for (long i = 0; i < h.size(); ++i)
    acc += wconf_[i] * h[i] * (u_grid[i] - ubar);
  return acc;
}

Eigen::VectorXd ConformalFieldTransform::grid_values(
    const FieldSample& s) const {
  const Eigen::VectorXd h = sampler_.grid_values(s);
  return h.array() - mean_shift(s);
}

MollifiedField::MollifiedField(const FieldSampler& sampler,
                               MollifierScheme scheme, double param)
    : sampler_(sampler), scheme_(scheme), param_(param) {
  const auto& modes = sampler.basis().modes();
  const std::size_t P = sampler.coefficient_count();
  const auto desc = sampler.manifold().descriptor();
  switch (scheme) {
    case MollifierScheme::heat: {
      const double t = param > 0.0 ? param : 1.0 / double(P);
      param_ = t;
      mult_.resize(long(P));
      for (std::size_t p = 0; p < P; ++p)
        mult_[long(p)] = std::exp(-modes[p + 1].lambda * t);
      break;
    }
    case MollifierScheme::ball_average: {
      mult_.resize(long(P));
      if (desc.kind == geom::ManifoldKind::Sphere && desc.dimension == 2) {
        if (param <= 0.0 || param >= kPi * desc.radius)
          throw std::invalid_argument("ball radius out of range");
        const double a = param / desc.radius;  // cap angle
        const auto rule = quad::gauss_legendre(64);
        // cap average of the degree-l zonal eigenfunction around its center
        std::vector<double> level_mult(std::size_t(sampler.level_cutoff()) + 1,
                                       1.0);
        for (std::size_t l = 1; l < level_mult.size(); ++l) {
          double acc = 0.0;
          for (std::size_t q = 0; q < rule.x.size(); ++q) {
            const double th = 0.5 * a * (rule.x[q] + 1.0);
            // Legendre value by upward recurrence
            const double cth = std::cos(th);
            double pm = 1.0, pl = cth;
            for (std::size_t j = 1; j < l; ++j) {
              const double pn =
                  ((2.0 * j + 1.0) * cth * pl - double(j) * pm) / (j + 1.0);
              pm = pl;
              pl = pn;
            }
            acc += rule.w[q] * 0.5 * a * pl * std::sin(th);
          }
          level_mult[l] = acc / (1.0 - std::cos(a));
        }
        for (std::size_t p = 0; p < P; ++p)
          mult_[long(p)] = level_mult[std::size_t(modes[p + 1].idx[0])];
      } else if (desc.kind == geom::ManifoldKind::FlatTorus &&
                 desc.dimension == 2) {
        const double rmax =
            0.5 * std::min(desc.side_lengths[0], desc.side_lengths[1]);
        if (param <= 0.0 || param >= rmax)
          throw std::invalid_argument("ball radius out of range");
        const auto radial = quad::gauss_legendre(32);
        const int nang = 64;
        for (std::size_t p = 0; p < P; ++p) {
          const auto& idx = modes[p + 1].idx;
          const double kx = 2.0 * kPi * idx[0] / desc.side_lengths[0];
          const double ky = 2.0 * kPi * idx[1] / desc.side_lengths[1];
          double acc = 0.0;
          for (std::size_t q = 0; q < radial.x.size(); ++q) {
            const double u = 0.5 * param * (radial.x[q] + 1.0);
            double ring = 0.0;
            for (int aq = 0; aq < nang; ++aq) {
              const double psi = 2.0 * kPi * (aq + 0.5) / nang;
              ring += std::cos(u * (kx * std::cos(psi) + ky * std::sin(psi)));
            }
            acc += radial.w[q] * 0.5 * param * (ring / nang) * u;
          }
          mult_[long(p)] = 2.0 * acc / (param * param);
        }
      } else {
        throw std::invalid_argument(
            "unsupported: ball mollifier on this geometry");
      }
      break;
    }
    case MollifierScheme::partition: {
      if (desc.kind != geom::ManifoldKind::FlatTorus)
        throw std::invalid_argument(
            "unsupported: partition mollifier on this geometry");
      if (param < 1.0) throw std::invalid_argument("at least one cell required");
      const auto rule = quad::gauss_legendre(8);
      gl_nodes_.resize(rule.x.size());
      gl_weights_.resize(rule.w.size());
      for (std::size_t q = 0; q < rule.x.size(); ++q) {
        gl_nodes_[q] = 0.5 * (rule.x[q] + 1.0);  // on (0, 1)
        gl_weights_[q] = 0.5 * rule.w[q];
      }
      break;
    }
  }
}

double MollifiedField::cell_average(
    const std::function<double(const geom::Point&)>& f,
    const geom::Point& x) const {
  const auto desc = sampler_.manifold().descriptor();
  const int cells = int(param_);
  const int dim = desc.dimension;
  std::vector<double> lo(std::size_t(dim), 0.0);
  std::vector<double> width(std::size_t(dim), 0.0);
  for (int a = 0; a < dim; ++a) {
    const double side = desc.side_lengths[std::size_t(a)];
    const double w = side / cells;
    int cell = int(std::floor(x.c[std::size_t(a)] / w));
    cell = std::clamp(cell, 0, cells - 1);
    lo[std::size_t(a)] = cell * w;
    width[std::size_t(a)] = w;
  }
  // tensor quadrature over the cell; weights already average to one
  const std::size_t Q = gl_nodes_.size();
  std::vector<std::size_t> digit(std::size_t(dim), 0);
  double acc = 0.0;
  while (true) {
    geom::Point p = x;
    double wq = 1.0;
    for (int a = 0; a < dim; ++a) {
      p.c[std::size_t(a)] =
          lo[std::size_t(a)] + gl_nodes_[digit[std::size_t(a)]] * width[std::size_t(a)];
      wq *= gl_weights_[digit[std::size_t(a)]];
    }
    acc += wq * f(p);
    int a = 0;
    for (; a < dim; ++a) {
      if (++digit[std::size_t(a)] < Q) break;
      digit[std::size_t(a)] = 0;
    }
    if (a == dim) break;
  }
  return acc;
}

double MollifiedField::value(const FieldSample& s, const geom::Point& x) const {
  if (scheme_ == MollifierScheme::partition) {
    return cell_average(
        [&](const geom::Point& p) { return sampler_.evaluate(s, p); }, x);
  }
  const auto& modes = sampler_.basis().modes();
  std::vector<double> vals(modes.size());
  sampler_.manifold().eval_modes(modes, x, vals.data());
  const Eigen::VectorXd c = sampler_.field_coefficients(s);
  double acc = 0.0;
  for (long p = 0; p < mult_.size(); ++p)
    acc += vals[std::size_t(p + 1)] * c[p + 1] * mult_[p];
  return acc;
}

double MollifiedField::covariance(const geom::Point& x,
                                  const geom::Point& y) const {
  if (scheme_ == MollifierScheme::partition) {
    return cell_average(
        [&](const geom::Point& px) {
          return cell_average(
              [&](const geom::Point& py) { return sampler_.covariance(px, py); },
              y);
        },
        x);
  }
  const auto& modes = sampler_.basis().modes();
  std::vector<double> vx(modes.size()), vy(modes.size());
  sampler_.manifold().eval_modes(modes, x, vx.data());
  sampler_.manifold().eval_modes(modes, y, vy.data());
  const auto& nu = sampler_.form().nu();
  double acc = 0.0;
  for (long p = 0; p < mult_.size(); ++p) {
    const std::size_t j = std::size_t(p + 1);
    // the mode product is grouped so swapping x and y is bit-neutral
    acc += mult_[p] * mult_[p] / (sampler_.a_n() * nu[j]) * (vx[j] * vy[j]);
  }
  return acc;
}

void dump_field_csv(const FieldSampler& sampler, const FieldSample& s,
                    const std::vector<geom::Point>& points, std::ostream& os) {
  const int dim = sampler.manifold().dimension();
  for (int a = 0; a < dim; ++a) os << "c" << a << ",";
  os << "h_value\n";
  for (const auto& p : points) {
    for (int a = 0; a < dim; ++a) os << format_double(p.c[std::size_t(a)]) << ",";
    os << format_double(sampler.evaluate(s, p)) << "\n";
  }
}

void dump_coefficients_csv(const FieldSample& s, std::ostream& os) {
  os << "mode_index,xi\n";
  for (long p = 0; p < s.xi.size(); ++p)
    os << (p + 1) << "," << format_double(s.xi[p]) << "\n";
}

}  // namespace confield::field
