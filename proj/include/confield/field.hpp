#pragma once
// Truncated Gaussian fields built on the inverse square root of the
// co-polyharmonic operator: sampling, covariance identities, white-noise
// extraction, the Girsanov shift, conformal quasi-invariance, and the
// mollified approximations used by the multiplicative-chaos module.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "confield/geometry.hpp"
#include "confield/spectral.hpp"

namespace confield::field {

// Coefficients of one field draw: xi[p] is the standard normal attached to
// the (p+1)-th basis mode (the constant mode carries no randomness).
struct FieldSample {
  Eigen::VectorXd xi;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

// Draws and evaluates truncated fields
//   h(x) = sum_j psi_j(x) xi_j / sqrt(a_n nu_j)
// over the modes of a full set of eigenvalue levels, so the covariance is
// exactly the normalized Green kernel at the same level cutoff.
class FieldSampler {
 public:
  FieldSampler(std::shared_ptr<const geom::ManifoldModel> m, int level_cutoff,
               int grid_resolution = 0);

  const spectral::SpectralBasis& basis() const { return basis_; }
  const spectral::CopolyForm& form() const { return form_; }
  const geom::ManifoldModel& manifold() const { return basis_.manifold(); }
  int level_cutoff() const { return cutoff_; }
  double a_n() const { return a_n_; }
  // number of random coefficients (nonconstant modes)
  std::size_t coefficient_count() const { return sqrt_inv_.size(); }

  FieldSample sample(std::uint64_t seed, std::uint64_t stream) const;
  // streams first_stream .. first_stream+count-1, parallel over samples
  std::vector<FieldSample> sample_many(std::uint64_t seed,
                                       std::uint64_t first_stream,
                                       int count) const;

  double evaluate(const FieldSample& s, const geom::Point& x) const;
  // partial sum over the first `prefix` random coefficients
  double evaluate_prefix(const FieldSample& s, std::size_t prefix,
                         const geom::Point& x) const;
  // field values on the basis quadrature grid
  Eigen::VectorXd grid_values(const FieldSample& s) const;
  // basis coefficients of the field (constant slot zero)
  Eigen::VectorXd field_coefficients(const FieldSample& s) const;

  // <h, u>_g for u given by basis coefficients
  double pair_coefficients(const FieldSample& s,
                           const Eigen::VectorXd& u_coeffs) const;
  double pair_coefficients_prefix(const FieldSample& s, std::size_t prefix,
                                  const Eigen::VectorXd& u_coeffs) const;
  // covariance of pairings: sum u_j v_j / (a_n nu_j)
  double kappa(const Eigen::VectorXd& u_coeffs,
               const Eigen::VectorXd& v_coeffs) const;

  // covariance kernel of the truncated field; delegates to the spectral
  // evaluator so the two modules share one implementation
  double covariance(const geom::Point& x, const geom::Point& y) const;
  double covariance_diagonal(const geom::Point& x) const;
  // diagonal accumulated mode by mode on the quadrature grid, in the same
  // order the sampler uses (what a variance estimate actually converges to)
  const Eigen::VectorXd& grid_diagonal() const { return grid_diag_; }

  // xi = sqrt(a_n P_g) h recovered from a sample, coefficient by coefficient
  Eigen::VectorXd white_noise_extract(const FieldSample& s) const;
  // inverse map: field coefficients from white-noise coefficients
  FieldSample field_from_noise(const Eigen::VectorXd& xi) const;

 private:
  spectral::SpectralBasis basis_;
  spectral::CopolyForm form_;
  spectral::KernelEvaluator eval_;
  Eigen::VectorXd sqrt_inv_;   // 1 / sqrt(a_n nu_j), nonconstant modes
  Eigen::VectorXd grid_diag_;
  double a_n_ = 0.0;
  int cutoff_ = 0;
};

// Largest level cutoff whose operator eigenvalues stay below the cap
// (the default truncation rule for field experiments).
int level_cutoff_for_nu_cap(const geom::ManifoldModel& m, double nu_cap);

struct GirsanovReport {
  double shifted_mean = 0.0;        // E[F(h + pi_g phi)]
  double shifted_half_width = 0.0;  // 1.96 sigma / sqrt(N)
  double weighted_mean = 0.0;       // E[F(h) exp(a_n<h,P phi> - a_n/2 p(phi,phi))]
  double weighted_half_width = 0.0;
  double effective_sample_size = 0.0;
  bool intervals_overlap = false;
  bool low_effective_sample = false;  // importance weights degenerate
};

// Compares the shifted-field and density-weighted Monte Carlo estimates of
// E[F]. phi_coeffs are basis coefficients of the shift direction. With
// common_random_numbers both estimates reuse the same draws (a zero shift
// then gives bit-identical runs).
GirsanovReport girsanov_shift_check(
    const FieldSampler& sampler, const Eigen::VectorXd& phi_coeffs,
    const std::function<double(const FieldSample&)>& functional, int samples,
    std::uint64_t seed, bool common_random_numbers = false);

// The field under a conformal change g' = e^{2phi} g: pairings of
// h' = h - <h, e^{n phi}>_g / vol_{g'} against test functions in the new
// metric. phi lives on the sampler's quadrature grid.
class ConformalFieldTransform {
 public:
  ConformalFieldTransform(const FieldSampler& sampler, Eigen::VectorXd phi_grid);

  double vol_conformal() const { return vprime_; }
  // the subtracted constant <h, e^{n phi}>_g / vol_{g'}
  double mean_shift(const FieldSample& s) const;
  // <h', u>_{g'} for u on the grid
  double pair(const FieldSample& s, const Eigen::VectorXd& u_grid) const;
  // h' = h - mean_shift on the grid
  Eigen::VectorXd grid_values(const FieldSample& s) const;

 private:
  const FieldSampler& sampler_;
  Eigen::VectorXd conf_;     // e^{n phi}
  Eigen::VectorXd wconf_;    // quadrature weights times e^{n phi}
  double vprime_ = 0.0;
};

enum class MollifierScheme { heat, partition, ball_average };

// Field smoothed by one of the mollifier schemes; heat and ball averages
// act mode by mode, the lattice partition averages over the cell of the
// evaluation point.
class MollifiedField {
 public:
  // heat: param = diffusion time (param <= 0 picks 1/mode-count);
  // partition: param = cells per axis (flat torus only);
  // ball_average: param = geodesic radius (2-sphere and flat 2-torus).
  MollifiedField(const FieldSampler& sampler, MollifierScheme scheme,
                 double param);

  double value(const FieldSample& s, const geom::Point& x) const;
  // covariance of the mollified field (both arguments smoothed)
  double covariance(const geom::Point& x, const geom::Point& y) const;
  MollifierScheme scheme() const { return scheme_; }
  // mode multipliers (empty for the partition scheme)
  const Eigen::VectorXd& multipliers() const { return mult_; }

 private:
  double cell_average(const std::function<double(const geom::Point&)>& f,
                      const geom::Point& x) const;

  const FieldSampler& sampler_;
  MollifierScheme scheme_;
  double param_ = 0.0;
  Eigen::VectorXd mult_;  // per nonconstant mode
  std::vector<double> gl_nodes_, gl_weights_;  // cell quadrature rule
};

// CSV dumps. Field rows: chart coordinates then the value; coefficient
// rows: mode_index, xi.
void dump_field_csv(const FieldSampler& sampler, const FieldSample& s,
                    const std::vector<geom::Point>& points, std::ostream& os);
void dump_coefficients_csv(const FieldSample& s, std::ostream& os);

}  // namespace confield::field
