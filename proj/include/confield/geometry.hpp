#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "confield/rng.hpp"

namespace confield::geom {

// Chart coordinates. Spheres use angles (S2: colatitude, longitude; S4:
// three colatitudes then a longitude), tori use positions in [0, L_i),
// products concatenate the factor charts. `dim` counts used entries.
struct Point {
  std::array<double, 6> c{};
  int dim = 0;
};

struct QuadratureGrid {
  std::vector<Point> points;
  std::vector<double> weights;
  // A grid of resolution L integrates any product of two basis modes of
  // degree <= L exactly (degree = spherical-harmonic level, or max |k_i|
  // on tori, or per-factor level on products).
  int resolution = 0;
};

// One eigenvalue level: degree l on spheres, canonical lattice vector on
// tori (first nonzero component positive, multiplicity 2 for the cos/sin
// pair), level pair on products.
struct SpectrumEntry {
  double lambda = 0.0;
  int multiplicity = 0;
  std::array<int, 5> descriptor{};
};

struct LaplaceSpectrum {
  std::vector<SpectrumEntry> entries;  // sorted by (lambda, descriptor)
  int cutoff = 0;
};

// A single real orthonormal eigenfunction. idx layout:
//   S2:      {l, m, trig}          trig: 0 = cos (or m=0), 1 = sin
//   S4:      {l, q3, q2, m, trig}  chain l >= q3 >= q2 >= m >= 0
//   torus:   {k_1, .., k_n, trig}
//   S2xS2:   {l1, j1, l2, j2}      j enumerates the 2l+1 modes of a level
struct ModeKey {
  double lambda = 0.0;
  std::array<int, 5> idx{};
};

enum class ManifoldKind { Sphere, FlatTorus, ProductSurfaces };

struct ManifoldDescriptor {
  ManifoldKind kind = ManifoldKind::Sphere;
  int dimension = 2;
  double radius = 1.0;                // Sphere
  std::vector<double> side_lengths;   // FlatTorus
  double curvature_1 = 1.0;           // ProductSurfaces: Gauss curvature of
  double curvature_2 = 1.0;           // each factor; spheres require > 0
};

class ManifoldModel {
 public:
  virtual ~ManifoldModel() = default;

  virtual ManifoldKind kind() const = 0;
  virtual int dimension() const = 0;
  virtual double volume() const = 0;
  virtual double diameter() const = 0;

  // The construction parameters (radius, side lengths, curvatures).
  virtual ManifoldDescriptor descriptor() const = 0;

  // Ric = k * g. Throws std::logic_error when the model is not Einstein
  // (product of surfaces with distinct curvatures).
  virtual bool is_einstein() const = 0;
  virtual double einstein_constant() const = 0;

  virtual double distance(const Point& x, const Point& y) const = 0;

  virtual QuadratureGrid quadrature_grid(int resolution) const = 0;

  // All levels with mode index (degree / per-axis |k|) <= cutoff.
  virtual LaplaceSpectrum laplace_spectrum(int cutoff) const = 0;

  // At least min_count modes: the smallest cutoff whose laplace_spectrum
  // reaches min_count, expanded mode by mode.  Constant mode first,
  // ordered by (lambda, idx); content matches that spectrum exactly.
  virtual std::vector<ModeKey> mode_basis(int min_count) const = 0;

  virtual double eigenfunction_eval(const ModeKey& mode,
                                    const Point& x) const = 0;

  // Sum of psi_j(x) psi_j(y) over one spectrum entry, via the addition
  // theorem (spheres), the cosine pairing (tori), or factorization
  // (products). Collapses a multiplicity-sized sum to O(level) work.
  virtual double level_kernel(const SpectrumEntry& level, const Point& x,
                              const Point& y) const = 0;

  // A point at geodesic distance d from x (along a fixed direction field);
  // requires 0 <= d <= diameter of the moved factor.
  virtual Point point_at_distance(const Point& x, double d) const = 0;

  // Writes eigenfunction values for a mode_basis()-shaped list; an
  // override batches the recurrences per point.
  virtual void eval_modes(const std::vector<ModeKey>& modes, const Point& x,
                          double* out) const;

  // Uniform point w.r.t. the volume measure; consumes the RNG indices
  // [8*slot, 8*slot + 8) of the given stream.
  virtual Point random_point(const rng::Stream& stream,
                             std::uint64_t slot) const = 0;

  virtual std::string name() const = 0;
};

// Throws std::invalid_argument with message "even dimension required" for
// odd dimensions; validates positivity of the size parameters.
std::shared_ptr<const ManifoldModel> build_manifold(
    const ManifoldDescriptor& descriptor);

enum class AdmissibilityVerdict { Admissible, NotAdmissible, Boundary };

// Einstein manifold with Ric = -(n-1) kappa g. Nonpositive kappa is
// admissible outright; kappa > 0 requires lambda_1 > n(n-2) kappa / 4,
// with equality reported as the boundary case.
AdmissibilityVerdict admissibility_verdict(int n, double kappa,
                                           double lambda_1);

enum class ProductVerdict { NotAdmissible, BoundaryRegion, Inconclusive };

struct ProductCounterexampleReport {
  ProductVerdict verdict = ProductVerdict::Inconclusive;
  double threshold = 0.0;            // n(n-2) / (4(n-1))
  double lambda_1_upper = 0.0;       // the transferred bound lambda_1(M2)
};

// Hyperbolic-product construction: M = M1 x M2 with lambda_1(M) <=
// lambda_1(M2). Reports not-admissible when the transferred bound already
// fails the threshold; near-threshold inputs land in a boundary region
// where the one-sided bound cannot decide.
ProductCounterexampleReport product_counterexample_spectrum(double lambda1_M2,
                                                            int n);

// Embedding helpers for the walk-based dynamics (unit vectors; the radius
// scaling stays with the manifold).
std::array<double, 3> sphere2_embed(const Point& x);
Point sphere2_point_from_embed(const std::array<double, 3>& u);

// CSV dumps. Bodies are locale-independent and deterministic.
void dump_spectrum_csv(const LaplaceSpectrum& spectrum, std::ostream& os);
void dump_grid_csv(const QuadratureGrid& grid, std::ostream& os);

}  // namespace confield::geom
