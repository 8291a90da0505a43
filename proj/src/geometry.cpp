#include "confield/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include "confield/gauss_legendre.hpp"
#include "confield/orthopoly.hpp"

namespace confield::geom {

namespace {

constexpr double kPi = std::numbers::pi;

// Angle between unit vectors, accurate near 0 and near pi.
double unit_vector_angle(const double* u, const double* v, int m) {
  double dot = 0.0;
  for (int i = 0; i < m; ++i) dot += u[i] * v[i];
  double s = 0.0;
  if (dot >= 0.0) {
    for (int i = 0; i < m; ++i) {
      const double d = u[i] - v[i];
      s += d * d;
    }
    return 2.0 * std::asin(std::min(1.0, 0.5 * std::sqrt(s)));
  }
  for (int i = 0; i < m; ++i) {
    const double d = u[i] + v[i];
    s += d * d;
  }
  return kPi - 2.0 * std::asin(std::min(1.0, 0.5 * std::sqrt(s)));
}

bool descriptor_less(const std::array<int, 5>& a, const std::array<int, 5>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

void sort_entries(std::vector<SpectrumEntry>& entries) {
  std::sort(entries.begin(), entries.end(),
            [](const SpectrumEntry& a, const SpectrumEntry& b) {
              if (a.lambda != b.lambda) return a.lambda < b.lambda;
              return descriptor_less(a.descriptor, b.descriptor);
            });
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

// L2-normalized associated Legendre values for all l <= lmax, m <= l.
// Row l holds m = 0..l.
std::vector<std::vector<double>> normalized_legendre_table(int lmax, double ct,
                                                           double st) {
  std::vector<std::vector<double>> P(lmax + 1);
  for (int l = 0; l <= lmax; ++l) P[l].assign(l + 1, 0.0);
  P[0][0] = 1.0 / std::sqrt(4.0 * kPi);
  for (int m = 1; m <= lmax; ++m)
    P[m][m] = std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * st * P[m - 1][m - 1];
  for (int m = 0; m + 1 <= lmax; ++m)
    P[m + 1][m] = std::sqrt(2.0 * m + 3.0) * ct * P[m][m];
  for (int m = 0; m <= lmax; ++m) {
    for (int l = m + 2; l <= lmax; ++l) {
      const double a =
          std::sqrt((4.0 * l * l - 1.0) / (double((l - m)) * (l + m)));
      const double b = std::sqrt(double((l - 1 - m)) * (l - 1 + m) /
                                 (4.0 * (l - 1.0) * (l - 1.0) - 1.0));
      P[l][m] = a * (ct * P[l - 1][m] - b * P[l - 2][m]);
    }
  }
  return P;
}

// Single normalized associated Legendre value (column recurrence).
double normalized_legendre(int l, int m, double ct, double st) {
  double pmm = 1.0 / std::sqrt(4.0 * kPi);
  for (int i = 1; i <= m; ++i)
    pmm *= std::sqrt((2.0 * i + 1.0) / (2.0 * i)) * st;
  if (l == m) return pmm;
  double pm1 = std::sqrt(2.0 * m + 3.0) * ct * pmm;
  if (l == m + 1) return pm1;
  double p = pm1, pprev = pmm;
  for (int ll = m + 2; ll <= l; ++ll) {
    const double a =
        std::sqrt((4.0 * ll * ll - 1.0) / (double((ll - m)) * (ll + m)));
    const double b = std::sqrt(double((ll - 1 - m)) * (ll - 1 + m) /
                               (4.0 * (ll - 1.0) * (ll - 1.0) - 1.0));
    const double pn = a * (ct * p - b * pprev);
    pprev = p;
    p = pn;
  }
  return p;
}

// Normalized Gegenbauer block (sin theta)^{q'} C_{q-q'}^{(alpha)}(cos theta)
// with alpha = q' + (d-1)/2, orthonormal against sin^{d-1} theta d theta.
double gegenbauer_block(int d, int q, int qp, double ct, double st) {
  const double alpha = qp + 0.5 * (d - 1);
  const int j = q - qp;
  double val = poly::gegenbauer_c(j, alpha, ct);
  for (int i = 0; i < qp; ++i) val *= st;
  return val / std::sqrt(poly::gegenbauer_norm(j, alpha));
}

void check_s2_mode(const ModeKey& mode) {
  const int l = mode.idx[0], m = mode.idx[1], trig = mode.idx[2];
  if (l < 0 || m < 0 || m > l || trig < 0 || trig > 1 || (m == 0 && trig != 0))
    throw std::invalid_argument("invalid sphere mode descriptor");
}

// Modes of one S2 level in canonical order: m=0, then (cos, sin) pairs.
void append_s2_level(int l, double lambda, std::vector<ModeKey>& out) {
  out.push_back({lambda, {l, 0, 0, 0, 0}});
  for (int m = 1; m <= l; ++m) {
    out.push_back({lambda, {l, m, 0, 0, 0}});
    out.push_back({lambda, {l, m, 1, 0, 0}});
  }
}

// ---------------------------------------------------------------------
// Round 2-sphere of radius r.

class Sphere2 final : public ManifoldModel {
 public:
  explicit Sphere2(double r) : r_(r) {}

  ManifoldKind kind() const override { return ManifoldKind::Sphere; }
  int dimension() const override { return 2; }
  ManifoldDescriptor descriptor() const override {
    ManifoldDescriptor d;
    d.kind = ManifoldKind::Sphere;
    d.dimension = 2;
    d.radius = r_;
    return d;
  }
  double volume() const override { return 4.0 * kPi * r_ * r_; }
  double diameter() const override { return kPi * r_; }
  bool is_einstein() const override { return true; }
  double einstein_constant() const override { return 1.0 / (r_ * r_); }

  double distance(const Point& x, const Point& y) const override {
    const auto u = sphere2_embed(x);
    const auto v = sphere2_embed(y);
    return r_ * unit_vector_angle(u.data(), v.data(), 3);
  }

  QuadratureGrid quadrature_grid(int resolution) const override {
    if (resolution < 1) throw std::invalid_argument("positive resolution required");
    const int nt = resolution + 1;
    const int nphi = 2 * resolution + 1;
    const auto rule = quad::gauss_legendre(nt);
    QuadratureGrid grid;
    grid.resolution = resolution;
    grid.points.reserve(size_t(nt) * nphi);
    grid.weights.reserve(size_t(nt) * nphi);
    const double wphi = 2.0 * kPi / nphi;
    for (int it = 0; it < nt; ++it) {
      const double theta = std::acos(rule.x[it]);
      const double w = rule.w[it] * wphi * r_ * r_;
      for (int j = 0; j < nphi; ++j) {
        Point p;
        p.dim = 2;
        p.c[0] = theta;
        p.c[1] = 2.0 * kPi * (j + 0.5) / nphi;
        grid.points.push_back(p);
        grid.weights.push_back(w);
      }
    }
    return grid;
  }

  LaplaceSpectrum laplace_spectrum(int cutoff) const override {
    if (cutoff < 1) throw std::invalid_argument("positive cutoff required");
    LaplaceSpectrum s;
    s.cutoff = cutoff;
    for (int l = 0; l <= cutoff; ++l)
      s.entries.push_back({l * (l + 1.0) / (r_ * r_), 2 * l + 1, {l, 0, 0, 0, 0}});
    return s;
  }

  std::vector<ModeKey> mode_basis(int min_count) const override {
    std::vector<ModeKey> out;
    for (int l = 0; int(out.size()) < min_count; ++l)
      append_s2_level(l, l * (l + 1.0) / (r_ * r_), out);
    return out;
  }

  double eigenfunction_eval(const ModeKey& mode, const Point& x) const override {
    check_s2_mode(mode);
    const int l = mode.idx[0], m = mode.idx[1], trig = mode.idx[2];
    const double ct = std::cos(x.c[0]), st = std::sin(x.c[0]);
    double val = normalized_legendre(l, m, ct, st);
    if (m > 0) {
      const double ang = m * x.c[1];
      val *= std::numbers::sqrt2 * (trig ? std::sin(ang) : std::cos(ang));
    }
    return val / r_;
  }

  void eval_modes(const std::vector<ModeKey>& modes, const Point& x,
                  double* out) const override {
    int lmax = 0;
    for (const auto& mk : modes) lmax = std::max(lmax, mk.idx[0]);
    const double ct = std::cos(x.c[0]), st = std::sin(x.c[0]);
    const auto P = normalized_legendre_table(lmax, ct, st);
    std::vector<double> cphi(lmax + 1), sphi(lmax + 1);
    for (int m = 0; m <= lmax; ++m) {
      cphi[m] = std::cos(m * x.c[1]);
      sphi[m] = std::sin(m * x.c[1]);
    }
    for (size_t i = 0; i < modes.size(); ++i) {
      const int l = modes[i].idx[0], m = modes[i].idx[1], trig = modes[i].idx[2];
      double val = P[l][m];
      if (m > 0) val *= std::numbers::sqrt2 * (trig ? sphi[m] : cphi[m]);
      out[i] = val / r_;
    }
  }

  double level_kernel(const SpectrumEntry& level, const Point& x,
                      const Point& y) const override {
    const int l = level.descriptor[0];
    if (l == 0) return 1.0 / volume();
    const auto u = sphere2_embed(x);
    const auto v = sphere2_embed(y);
    const double cg = std::cos(unit_vector_angle(u.data(), v.data(), 3));
    return (2.0 * l + 1.0) / volume() * poly::legendre_p(l, cg);
  }

  Point point_at_distance(const Point& x, double d) const override {
    if (d < 0.0 || d > diameter())
      throw std::invalid_argument("distance out of range");
    const auto u = sphere2_embed(x);
    double e[3] = {-u[1], u[0], 0.0};
    double nrm = std::hypot(e[0], e[1]);
    if (nrm < 1e-9) {
      e[0] = 0.0;
      e[1] = -u[2];
      e[2] = u[1];
      nrm = std::hypot(e[1], e[2]);
    }
    const double ang = d / r_;
    std::array<double, 3> w;
    for (int i = 0; i < 3; ++i)
      w[i] = std::cos(ang) * u[i] + std::sin(ang) * e[i] / nrm;
    return sphere2_point_from_embed(w);
  }

  Point random_point(const rng::Stream& stream, std::uint64_t slot) const override {
    double u[3];
    double norm2 = 0.0;
    for (int i = 0; i < 3; ++i) {
      u[i] = stream.normal(8 * slot + i);
      norm2 += u[i] * u[i];
    }
    const double norm = std::sqrt(norm2);
    Point p;
    p.dim = 2;
    if (norm < 1e-300) {
      p.c[0] = 0.0;
      p.c[1] = 0.0;
      return p;
    }
    p.c[0] = std::atan2(std::hypot(u[0], u[1]), u[2]);
    p.c[1] = std::atan2(u[1], u[0]);
    return p;
  }

  std::string name() const override {
    return "sphere2(r=" + format_double(r_) + ")";
  }

 private:
  double r_;
};

// ---------------------------------------------------------------------
// Round 4-sphere of radius r. Chart (theta1, theta2, theta3, phi) with
// volume element sin^3 t1 sin^2 t2 sin t3.

std::array<double, 5> sphere4_embed(const Point& x) {
  const double t1 = x.c[0], t2 = x.c[1], t3 = x.c[2], ph = x.c[3];
  const double s1 = std::sin(t1), s2 = std::sin(t2), s3 = std::sin(t3);
  return {std::cos(t1), s1 * std::cos(t2), s1 * s2 * std::cos(t3),
          s1 * s2 * s3 * std::cos(ph), s1 * s2 * s3 * std::sin(ph)};
}

Point sphere4_point_from_embed(const std::array<double, 5>& u) {
  Point p;
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

void check_s4_mode(const ModeKey& mode) {
  const int l = mode.idx[0], q3 = mode.idx[1], q2 = mode.idx[2],
            m = mode.idx[3], trig = mode.idx[4];
  if (l < 0 || q3 < 0 || q2 < 0 || m < 0 || l < q3 || q3 < q2 || q2 < m ||
      trig < 0 || trig > 1 || (m == 0 && trig != 0))
    throw std::invalid_argument("invalid sphere mode descriptor");
}

class Sphere4 final : public ManifoldModel {
 public:
  explicit Sphere4(double r) : r_(r) {}

  ManifoldKind kind() const override { return ManifoldKind::Sphere; }
  int dimension() const override { return 4; }
  ManifoldDescriptor descriptor() const override {
    ManifoldDescriptor d;
    d.kind = ManifoldKind::Sphere;
    d.dimension = 4;
    d.radius = r_;
    return d;
  }
  double volume() const override {
    return 8.0 * kPi * kPi / 3.0 * r_ * r_ * r_ * r_;
  }
  double diameter() const override { return kPi * r_; }
  bool is_einstein() const override { return true; }
  double einstein_constant() const override { return 3.0 / (r_ * r_); }

  double distance(const Point& x, const Point& y) const override {
    const auto u = sphere4_embed(x);
    const auto v = sphere4_embed(y);
    return r_ * unit_vector_angle(u.data(), v.data(), 5);
  }

  QuadratureGrid quadrature_grid(int resolution) const override {
    if (resolution < 1) throw std::invalid_argument("positive resolution required");
    const int n1 = resolution + 2;
    const int n2 = resolution + 1;
    const int n3 = resolution + 1;
    const int nphi = 2 * resolution + 1;
    const auto r1 = quad::gauss_legendre(n1);
    const auto r2 = quad::gauss_chebyshev_second(n2);
    const auto r3 = quad::gauss_legendre(n3);
    QuadratureGrid grid;
    grid.resolution = resolution;
    grid.points.reserve(size_t(n1) * n2 * n3 * nphi);
    grid.weights.reserve(size_t(n1) * n2 * n3 * nphi);
    const double wphi = 2.0 * kPi / nphi;
    const double r4 = r_ * r_ * r_ * r_;
    for (int i1 = 0; i1 < n1; ++i1) {
      const double th1 = std::acos(r1.x[i1]);
      const double w1 = r1.w[i1] * (1.0 - r1.x[i1] * r1.x[i1]);
      for (int i2 = 0; i2 < n2; ++i2) {
        const double th2 = std::acos(r2.x[i2]);
        const double w12 = w1 * r2.w[i2];
        for (int i3 = 0; i3 < n3; ++i3) {
          const double th3 = std::acos(r3.x[i3]);
          const double w123 = w12 * r3.w[i3];
          for (int j = 0; j < nphi; ++j) {
            Point p;
            p.dim = 4;
            p.c[0] = th1;
            p.c[1] = th2;
            p.c[2] = th3;
            p.c[3] = 2.0 * kPi * (j + 0.5) / nphi;
            grid.points.push_back(p);
            grid.weights.push_back(w123 * wphi * r4);
          }
        }
      }
    }
    return grid;
  }

  LaplaceSpectrum laplace_spectrum(int cutoff) const override {
    if (cutoff < 1) throw std::invalid_argument("positive cutoff required");
    LaplaceSpectrum s;
    s.cutoff = cutoff;
    for (int l = 0; l <= cutoff; ++l) {
      const int mult = (l + 1) * (l + 2) * (2 * l + 3) / 6;
      s.entries.push_back({l * (l + 3.0) / (r_ * r_), mult, {l, 0, 0, 0, 0}});
    }
    return s;
  }

  std::vector<ModeKey> mode_basis(int min_count) const override {
    std::vector<ModeKey> out;
    for (int l = 0; int(out.size()) < min_count; ++l) {
      const double lambda = l * (l + 3.0) / (r_ * r_);
      for (int q3 = 0; q3 <= l; ++q3)
        for (int q2 = 0; q2 <= q3; ++q2)
          for (int m = 0; m <= q2; ++m) {
            out.push_back({lambda, {l, q3, q2, m, 0}});
            if (m > 0) out.push_back({lambda, {l, q3, q2, m, 1}});
          }
    }
    return out;
  }

  double eigenfunction_eval(const ModeKey& mode, const Point& x) const override {
    check_s4_mode(mode);
    const int l = mode.idx[0], q3 = mode.idx[1], q2 = mode.idx[2],
              m = mode.idx[3], trig = mode.idx[4];
    double val = gegenbauer_block(4, l, q3, std::cos(x.c[0]), std::sin(x.c[0]));
    val *= gegenbauer_block(3, q3, q2, std::cos(x.c[1]), std::sin(x.c[1]));
    val *= gegenbauer_block(2, q2, m, std::cos(x.c[2]), std::sin(x.c[2]));
    if (m == 0)
      val /= std::sqrt(2.0 * kPi);
    else
      val *= (trig ? std::sin(m * x.c[3]) : std::cos(m * x.c[3])) /
             std::sqrt(kPi);
    return val / (r_ * r_);
  }

  void eval_modes(const std::vector<ModeKey>& modes, const Point& x,
                  double* out) const override {
    int lmax = 0;
    for (const auto& mk : modes) lmax = std::max(lmax, mk.idx[0]);
    // Block tables indexed [q][q'] for each of the three colatitudes.
    const auto table = [lmax](int d, double ct, double st) {
      std::vector<std::vector<double>> B(lmax + 1);
      for (int q = 0; q <= lmax; ++q) B[q].assign(q + 1, 0.0);
      for (int qp = 0; qp <= lmax; ++qp) {
        const double alpha = qp + 0.5 * (d - 1);
        double spow = 1.0;
        for (int i = 0; i < qp; ++i) spow *= st;
        double h = poly::gegenbauer_norm(0, alpha);
        double cm = 0.0, c = 1.0;
        for (int j = 0; qp + j <= lmax; ++j) {
          if (j > 0) {
            const double cn =
                (2.0 * (j - 1 + alpha) * ct * c - (j - 2 + 2.0 * alpha) * cm) /
                j;
            cm = c;
            c = cn;
            h *= (j - 1 + 2.0 * alpha) * (j - 1 + alpha) /
                 (double(j) * (j + alpha));
          }
          B[qp + j][qp] = spow * c / std::sqrt(h);
        }
      }
      return B;
    };
    const auto B1 = table(4, std::cos(x.c[0]), std::sin(x.c[0]));
    const auto B2 = table(3, std::cos(x.c[1]), std::sin(x.c[1]));
    const auto B3 = table(2, std::cos(x.c[2]), std::sin(x.c[2]));
    std::vector<double> cphi(lmax + 1), sphi(lmax + 1);
    for (int m = 0; m <= lmax; ++m) {
      cphi[m] = std::cos(m * x.c[3]);
      sphi[m] = std::sin(m * x.c[3]);
    }
    const double scale = 1.0 / (r_ * r_);
    for (size_t i = 0; i < modes.size(); ++i) {
      const auto& id = modes[i].idx;
      double val = B1[id[0]][id[1]] * B2[id[1]][id[2]] * B3[id[2]][id[3]];
      if (id[3] == 0)
        val /= std::sqrt(2.0 * kPi);
      else
        val *= (id[4] ? sphi[id[3]] : cphi[id[3]]) / std::sqrt(kPi);
      out[i] = val * scale;
    }
  }

  double level_kernel(const SpectrumEntry& level, const Point& x,
                      const Point& y) const override {
    const int l = level.descriptor[0];
    if (l == 0) return 1.0 / volume();
    const auto u = sphere4_embed(x);
    const auto v = sphere4_embed(y);
    const double cg = std::cos(unit_vector_angle(u.data(), v.data(), 5));
    const double top = poly::gegenbauer_c(l, 1.5, cg);
    const double at_one = 0.5 * (l + 1.0) * (l + 2.0);
    return level.multiplicity / volume() * top / at_one;
  }

  Point point_at_distance(const Point& x, double d) const override {
    if (d < 0.0 || d > diameter())
      throw std::invalid_argument("distance out of range");
    const auto u = sphere4_embed(x);
    int k = 0;
    for (int i = 1; i < 5; ++i)
      if (std::abs(u[i]) < std::abs(u[k])) k = i;
    double e[5];
    for (int i = 0; i < 5; ++i) e[i] = (i == k) ? 1.0 : 0.0;
    double dot = u[k];
    double nrm2 = 0.0;
    for (int i = 0; i < 5; ++i) {
      e[i] -= dot * u[i];
      nrm2 += e[i] * e[i];
    }
    const double nrm = std::sqrt(nrm2);
    const double ang = d / r_;
    std::array<double, 5> w;
    for (int i = 0; i < 5; ++i)
      w[i] = std::cos(ang) * u[i] + std::sin(ang) * e[i] / nrm;
    return sphere4_point_from_embed(w);
  }

  Point random_point(const rng::Stream& stream, std::uint64_t slot) const override {
    double u[5];
    for (int i = 0; i < 5; ++i) u[i] = stream.normal(8 * slot + i);
    const auto tail = [&u](int from) {
      double s = 0.0;
      for (int i = from; i < 5; ++i) s += u[i] * u[i];
      return std::sqrt(s);
    };
    Point p;
    p.dim = 4;
    p.c[0] = std::atan2(tail(1), u[0]);
    p.c[1] = std::atan2(tail(2), u[1]);
    p.c[2] = std::atan2(tail(3), u[2]);
    p.c[3] = std::atan2(u[4], u[3]);
    return p;
  }

  std::string name() const override {
    return "sphere4(r=" + format_double(r_) + ")";
  }

 private:
  double r_;
};

// ---------------------------------------------------------------------
// Flat torus prod_i R/(L_i Z), dimension 2 or 4.

class FlatTorus final : public ManifoldModel {
 public:
  explicit FlatTorus(std::vector<double> sides) : sides_(std::move(sides)) {
    vol_ = 1.0;
    for (double L : sides_) vol_ *= L;
  }

  ManifoldKind kind() const override { return ManifoldKind::FlatTorus; }
  int dimension() const override { return int(sides_.size()); }
  ManifoldDescriptor descriptor() const override {
    ManifoldDescriptor d;
    d.kind = ManifoldKind::FlatTorus;
    d.dimension = dimension();
    d.side_lengths = sides_;
    return d;
  }
  double volume() const override { return vol_; }
  double diameter() const override {
    double s = 0.0;
    for (double L : sides_) s += 0.25 * L * L;
    return std::sqrt(s);
  }
  bool is_einstein() const override { return true; }
  double einstein_constant() const override { return 0.0; }

  double distance(const Point& x, const Point& y) const override {
    double s = 0.0;
    for (size_t i = 0; i < sides_.size(); ++i) {
      double d = std::abs(x.c[i] - y.c[i]);
      d = std::min(d, sides_[i] - d);
      s += d * d;
    }
    return std::sqrt(s);
  }

  QuadratureGrid quadrature_grid(int resolution) const override {
    if (resolution < 1) throw std::invalid_argument("positive resolution required");
    const int n = dimension();
    const int m = 2 * resolution + 1;
    size_t total = 1;
    for (int i = 0; i < n; ++i) total *= size_t(m);
    QuadratureGrid grid;
    grid.resolution = resolution;
    grid.points.reserve(total);
    grid.weights.assign(total, vol_ / double(total));
    std::vector<int> idx(n, 0);
    for (size_t count = 0; count < total; ++count) {
      Point p;
      p.dim = n;
      for (int i = 0; i < n; ++i) p.c[i] = (idx[i] + 0.5) * sides_[i] / m;
      grid.points.push_back(p);
      for (int i = n - 1; i >= 0; --i) {
        if (++idx[i] < m) break;
        idx[i] = 0;
      }
    }
    return grid;
  }

  double lattice_lambda(const std::array<int, 5>& k) const {
    double s = 0.0;
    for (size_t i = 0; i < sides_.size(); ++i) {
      const double f = 2.0 * kPi * k[i] / sides_[i];
      s += f * f;
    }
    return s;
  }

  // Canonical lattice vectors (first nonzero component positive) in the
  // box |k_i| <= K, sorted by (lambda, components).
  std::vector<std::array<int, 5>> canonical_vectors(int K) const {
    const int n = dimension();
    std::vector<std::array<int, 5>> out;
    std::vector<int> k(n, -K);
    const size_t total = [&] {
      size_t t = 1;
      for (int i = 0; i < n; ++i) t *= size_t(2 * K + 1);
      return t;
    }();
    for (size_t count = 0; count < total; ++count) {
      int first = 0;
      for (int i = 0; i < n; ++i) {
        if (k[i] != 0) {
          first = k[i];
          break;
        }
      }
      if (first > 0) {
        std::array<int, 5> a{};
        for (int i = 0; i < n; ++i) a[i] = k[i];
        out.push_back(a);
      }
      for (int i = n - 1; i >= 0; --i) {
        if (++k[i] <= K) break;
        k[i] = -K;
      }
    }
    std::sort(out.begin(), out.end(),
              [this](const std::array<int, 5>& a, const std::array<int, 5>& b) {
                const double la = lattice_lambda(a), lb = lattice_lambda(b);
                if (la != lb) return la < lb;
                return descriptor_less(a, b);
              });
    return out;
  }

  LaplaceSpectrum laplace_spectrum(int cutoff) const override {
    if (cutoff < 1) throw std::invalid_argument("positive cutoff required");
    LaplaceSpectrum s;
    s.cutoff = cutoff;
    s.entries.push_back({0.0, 1, {}});
    for (const auto& k : canonical_vectors(cutoff))
      s.entries.push_back({lattice_lambda(k), 2, k});
    sort_entries(s.entries);
    return s;
  }

  std::vector<ModeKey> mode_basis(int min_count) const override {
    // The whole box |k_i| <= K, so the basis content matches
    // laplace_spectrum(K) exactly; a lambda-sorted prefix would disagree
    // with the box spectrum as soon as the side lengths differ.
    for (int K = 1;; ++K) {
      const auto vecs = canonical_vectors(K);
      if (1 + 2 * int(vecs.size()) < min_count) continue;
      std::vector<ModeKey> out;
      out.reserve(1 + 2 * vecs.size());
      out.push_back({0.0, {}});
      for (const auto& v : vecs) {
        const double lambda = lattice_lambda(v);
        auto idx = v;
        idx[sides_.size()] = 0;
        out.push_back({lambda, idx});
        idx[sides_.size()] = 1;
        out.push_back({lambda, idx});
      }
      return out;
    }
  }

  double eigenfunction_eval(const ModeKey& mode, const Point& x) const override {
    const int n = dimension();
    bool zero = true;
    double arg = 0.0;
    for (int i = 0; i < n; ++i) {
      if (mode.idx[i] != 0) zero = false;
      arg += 2.0 * kPi * mode.idx[i] * x.c[i] / sides_[i];
    }
    if (zero) return 1.0 / std::sqrt(vol_);
    const double amp = std::sqrt(2.0 / vol_);
    return amp * (mode.idx[n] ? std::sin(arg) : std::cos(arg));
  }

  double level_kernel(const SpectrumEntry& level, const Point& x,
                      const Point& y) const override {
    const int n = dimension();
    bool zero = true;
    double arg = 0.0;
    for (int i = 0; i < n; ++i) {
      if (level.descriptor[i] != 0) zero = false;
      arg += 2.0 * kPi * level.descriptor[i] * (x.c[i] - y.c[i]) / sides_[i];
    }
    if (zero) return 1.0 / vol_;
    // |arg| keeps the value bit-identical under swapping x and y
    return 2.0 / vol_ * std::cos(std::abs(arg));
  }

  Point point_at_distance(const Point& x, double d) const override {
    if (d < 0.0 || d > 0.5 * sides_[0])
      throw std::invalid_argument("distance out of range");
    Point p = x;
    p.c[0] = std::fmod(p.c[0] + d, sides_[0]);
    return p;
  }

  Point random_point(const rng::Stream& stream, std::uint64_t slot) const override {
    Point p;
    p.dim = dimension();
    for (int i = 0; i < p.dim; ++i)
      p.c[i] = stream.uniform(8 * slot + i) * sides_[i];
    return p;
  }

  std::string name() const override {
    std::string s = "torus" + std::to_string(dimension()) + "(L=";
    for (size_t i = 0; i < sides_.size(); ++i) {
      if (i) s += ",";
      s += format_double(sides_[i]);
    }
    return s + ")";
  }

 private:
  std::vector<double> sides_;
  double vol_;
};

// ---------------------------------------------------------------------
// Product of two round 2-spheres. Chart concatenates the factor charts.

class ProductSpheres final : public ManifoldModel {
 public:
  ProductSpheres(double r1, double r2) : f1_(r1), f2_(r2) {}

  ManifoldKind kind() const override { return ManifoldKind::ProductSurfaces; }
  int dimension() const override { return 4; }
  ManifoldDescriptor descriptor() const override {
    ManifoldDescriptor d;
    d.kind = ManifoldKind::ProductSurfaces;
    d.dimension = 4;
    d.curvature_1 = 1.0 / (radius1() * radius1());
    d.curvature_2 = 1.0 / (radius2() * radius2());
    return d;
  }
  double volume() const override { return f1_.volume() * f2_.volume(); }
  double diameter() const override {
    return std::hypot(f1_.diameter(), f2_.diameter());
  }
  bool is_einstein() const override {
    return f1_.einstein_constant() == f2_.einstein_constant();
  }
  double einstein_constant() const override {
    if (!is_einstein())
      throw std::logic_error("product with distinct factor curvatures is not Einstein");
    return f1_.einstein_constant();
  }

  double distance(const Point& x, const Point& y) const override {
    Point x1 = factor_point(x, 0), y1 = factor_point(y, 0);
    Point x2 = factor_point(x, 1), y2 = factor_point(y, 1);
    return std::hypot(f1_.distance(x1, y1), f2_.distance(x2, y2));
  }

  QuadratureGrid quadrature_grid(int resolution) const override {
    const auto g1 = f1_.quadrature_grid(resolution);
    const auto g2 = f2_.quadrature_grid(resolution);
    QuadratureGrid grid;
    grid.resolution = resolution;
    grid.points.reserve(g1.points.size() * g2.points.size());
    grid.weights.reserve(g1.points.size() * g2.points.size());
    for (size_t i = 0; i < g1.points.size(); ++i) {
      for (size_t j = 0; j < g2.points.size(); ++j) {
        Point p;
        p.dim = 4;
        p.c[0] = g1.points[i].c[0];
        p.c[1] = g1.points[i].c[1];
        p.c[2] = g2.points[j].c[0];
        p.c[3] = g2.points[j].c[1];
        grid.points.push_back(p);
        grid.weights.push_back(g1.weights[i] * g2.weights[j]);
      }
    }
    return grid;
  }

  LaplaceSpectrum laplace_spectrum(int cutoff) const override {
    if (cutoff < 1) throw std::invalid_argument("positive cutoff required");
    LaplaceSpectrum s;
    s.cutoff = cutoff;
    for (int l1 = 0; l1 <= cutoff; ++l1)
      for (int l2 = 0; l2 <= cutoff; ++l2)
        s.entries.push_back({level_lambda(l1, l2),
                             (2 * l1 + 1) * (2 * l2 + 1),
                             {l1, l2, 0, 0, 0}});
    sort_entries(s.entries);
    return s;
  }

  std::vector<ModeKey> mode_basis(int min_count) const override {
    // The whole box l1,l2 <= K, matching laplace_spectrum(K) content; a
    // lambda-sorted prefix would disagree once the factor radii differ.
    for (int K = 1;; ++K) {
      const int K1 = K + 1;
      if (K1 * K1 * K1 * K1 < min_count) continue;
      std::vector<std::array<int, 2>> levels;
      for (int l1 = 0; l1 <= K; ++l1)
        for (int l2 = 0; l2 <= K; ++l2) levels.push_back({l1, l2});
      std::sort(levels.begin(), levels.end(),
                [this](const std::array<int, 2>& a, const std::array<int, 2>& b) {
                  const double la = level_lambda(a[0], a[1]);
                  const double lb = level_lambda(b[0], b[1]);
                  if (la != lb) return la < lb;
                  return a < b;
                });
      std::vector<ModeKey> out;
      out.reserve(std::size_t(K1) * K1 * K1 * K1);
      for (const auto& lv : levels)
        for (int j1 = 0; j1 < 2 * lv[0] + 1; ++j1)
          for (int j2 = 0; j2 < 2 * lv[1] + 1; ++j2)
            out.push_back({level_lambda(lv[0], lv[1]), {lv[0], j1, lv[1], j2, 0}});
      return out;
    }
  }

  double eigenfunction_eval(const ModeKey& mode, const Point& x) const override {
    const ModeKey m1 = factor_mode(mode.idx[0], mode.idx[1], f1_);
    const ModeKey m2 = factor_mode(mode.idx[2], mode.idx[3], f2_);
    return f1_.eigenfunction_eval(m1, factor_point(x, 0)) *
           f2_.eigenfunction_eval(m2, factor_point(x, 1));
  }

  void eval_modes(const std::vector<ModeKey>& modes, const Point& x,
                  double* out) const override {
    int lmax1 = 0, lmax2 = 0;
    for (const auto& mk : modes) {
      lmax1 = std::max(lmax1, mk.idx[0]);
      lmax2 = std::max(lmax2, mk.idx[2]);
    }
    const auto vals = [](const Sphere2& f, const Point& p, int lmax) {
      std::vector<ModeKey> list;
      for (int l = 0; l <= lmax; ++l)
        append_s2_level(l, 0.0, list);
      std::vector<double> v(list.size());
      f.eval_modes(list, p, v.data());
      return v;
    };
    const auto v1 = vals(f1_, factor_point(x, 0), lmax1);
    const auto v2 = vals(f2_, factor_point(x, 1), lmax2);
    for (size_t i = 0; i < modes.size(); ++i) {
      const auto& id = modes[i].idx;
      out[i] = v1[size_t(id[0]) * id[0] + id[1]] *
               v2[size_t(id[2]) * id[2] + id[3]];
    }
  }

  double level_kernel(const SpectrumEntry& level, const Point& x,
                      const Point& y) const override {
    SpectrumEntry e1{0.0, 2 * level.descriptor[0] + 1, {level.descriptor[0]}};
    SpectrumEntry e2{0.0, 2 * level.descriptor[1] + 1, {level.descriptor[1]}};
    return f1_.level_kernel(e1, factor_point(x, 0), factor_point(y, 0)) *
           f2_.level_kernel(e2, factor_point(x, 1), factor_point(y, 1));
  }

  Point point_at_distance(const Point& x, double d) const override {
    if (d < 0.0 || d > f1_.diameter())
      throw std::invalid_argument("distance out of range");
    const Point m1 = f1_.point_at_distance(factor_point(x, 0), d);
    Point p = x;
    p.c[0] = m1.c[0];
    p.c[1] = m1.c[1];
    return p;
  }

  Point random_point(const rng::Stream& stream, std::uint64_t slot) const override {
    double u[6];
    for (int i = 0; i < 6; ++i) u[i] = stream.normal(8 * slot + i);
    Point p;
    p.dim = 4;
    p.c[0] = std::atan2(std::hypot(u[0], u[1]), u[2]);
    p.c[1] = std::atan2(u[1], u[0]);
    p.c[2] = std::atan2(std::hypot(u[3], u[4]), u[5]);
    p.c[3] = std::atan2(u[4], u[3]);
    return p;
  }

  std::string name() const override {
    return "product_s2xs2(r1=" + format_double(radius1()) +
           ",r2=" + format_double(radius2()) + ")";
  }

 private:
  double radius1() const { return 1.0 / std::sqrt(f1_.einstein_constant()); }
  double radius2() const { return 1.0 / std::sqrt(f2_.einstein_constant()); }

  double level_lambda(int l1, int l2) const {
    const double r1 = radius1(), r2 = radius2();
    return l1 * (l1 + 1.0) / (r1 * r1) + l2 * (l2 + 1.0) / (r2 * r2);
  }

  static Point factor_point(const Point& x, int which) {
    Point p;
    p.dim = 2;
    p.c[0] = x.c[2 * which];
    p.c[1] = x.c[2 * which + 1];
    return p;
  }

  // j = 0 is m=0; then j = 2m-1 the cos mode, j = 2m the sin mode.
  static ModeKey factor_mode(int l, int j, const Sphere2&) {
    ModeKey m;
    m.idx[0] = l;
    if (j == 0) {
      m.idx[1] = 0;
      m.idx[2] = 0;
    } else {
      m.idx[1] = (j + 1) / 2;
      m.idx[2] = (j % 2 == 0) ? 1 : 0;
    }
    return m;
  }

  Sphere2 f1_;
  Sphere2 f2_;
};

}  // namespace

void ManifoldModel::eval_modes(const std::vector<ModeKey>& modes,
                               const Point& x, double* out) const {
  for (size_t i = 0; i < modes.size(); ++i)
    out[i] = eigenfunction_eval(modes[i], x);
}

std::shared_ptr<const ManifoldModel> build_manifold(
    const ManifoldDescriptor& d) {
  if (d.dimension < 2 || d.dimension % 2 != 0)
    throw std::invalid_argument("even dimension required");
  switch (d.kind) {
    case ManifoldKind::Sphere:
      if (d.radius <= 0.0)
        throw std::invalid_argument("positive radius required");
      if (d.dimension == 2) return std::make_shared<Sphere2>(d.radius);
      if (d.dimension == 4) return std::make_shared<Sphere4>(d.radius);
      throw std::invalid_argument(
          "sphere eigenfunctions implemented for dimensions 2 and 4");
    case ManifoldKind::FlatTorus: {
      if (int(d.side_lengths.size()) != d.dimension)
        throw std::invalid_argument("side_lengths must match the dimension");
      for (double L : d.side_lengths)
        if (L <= 0.0) throw std::invalid_argument("positive side lengths required");
      if (d.dimension > 4)
        throw std::invalid_argument(
            "torus eigenfunctions implemented for dimensions 2 and 4");
      return std::make_shared<FlatTorus>(d.side_lengths);
    }
    case ManifoldKind::ProductSurfaces: {
      if (d.curvature_1 <= 0.0 || d.curvature_2 <= 0.0)
        throw std::invalid_argument(
            "sphere factors (positive curvature) required for explicit spectra");
      return std::make_shared<ProductSpheres>(1.0 / std::sqrt(d.curvature_1),
                                              1.0 / std::sqrt(d.curvature_2));
    }
  }
  throw std::invalid_argument("unknown manifold kind");
}

AdmissibilityVerdict admissibility_verdict(int n, double kappa,
                                           double lambda_1) {
  if (n < 2 || n % 2 != 0)
    throw std::invalid_argument("even dimension required");
  if (lambda_1 <= 0.0)
    throw std::invalid_argument("positive lambda_1 required");
  if (kappa <= 0.0) return AdmissibilityVerdict::Admissible;
  const double threshold = n * (n - 2.0) * kappa / 4.0;
  const double tol = 1e-12 * std::max(1.0, threshold);
  if (std::abs(lambda_1 - threshold) <= tol)
    return AdmissibilityVerdict::Boundary;
  return lambda_1 > threshold ? AdmissibilityVerdict::Admissible
                              : AdmissibilityVerdict::NotAdmissible;
}

ProductCounterexampleReport product_counterexample_spectrum(double lambda1_M2,
                                                            int n) {
  if (n < 4 || n % 2 != 0)
    throw std::invalid_argument("even dimension >= 4 required");
  if (lambda1_M2 <= 0.0)
    throw std::invalid_argument("positive lambda_1 required");
  ProductCounterexampleReport rep;
  rep.threshold = n * (n - 2.0) / (4.0 * (n - 1.0));
  rep.lambda_1_upper = lambda1_M2;
  if (std::abs(lambda1_M2 - rep.threshold) <= 1e-3)
    rep.verdict = ProductVerdict::BoundaryRegion;
  else if (lambda1_M2 <= rep.threshold)
    rep.verdict = ProductVerdict::NotAdmissible;
  else
    rep.verdict = ProductVerdict::Inconclusive;
  return rep;
}

std::array<double, 3> sphere2_embed(const Point& x) {
  const double st = std::sin(x.c[0]);
  return {st * std::cos(x.c[1]), st * std::sin(x.c[1]), std::cos(x.c[0])};
}

Point sphere2_point_from_embed(const std::array<double, 3>& u) {
  Point p;
  p.dim = 2;
  p.c[0] = std::atan2(std::hypot(u[0], u[1]), u[2]);
  p.c[1] = std::atan2(u[1], u[0]);
  return p;
}

void dump_spectrum_csv(const LaplaceSpectrum& spectrum, std::ostream& os) {
  os << "mode_index,eigenvalue,multiplicity\n";
  char buf[64];
  for (size_t i = 0; i < spectrum.entries.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%d\n", i,
                  spectrum.entries[i].lambda, spectrum.entries[i].multiplicity);
    os << buf;
  }
}

void dump_grid_csv(const QuadratureGrid& grid, std::ostream& os) {
  const int dim = grid.points.empty() ? 0 : grid.points.front().dim;
  for (int i = 0; i < dim; ++i) os << "c" << i << ",";
  os << "weight\n";
  char buf[64];
  for (size_t i = 0; i < grid.points.size(); ++i) {
    for (int j = 0; j < dim; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g,", grid.points[i].c[j]);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g\n", grid.weights[i]);
    os << buf;
  }
}

}  // namespace confield::geom
