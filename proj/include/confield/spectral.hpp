#pragma once
// Spectra of the conformally covariant operators on the model manifolds,
// and the kernels built from them: Green, resolvent, heat, the associated
// quadratic form, and the conformal change of the Green kernel.

#include <array>
#include <cstddef>
#include <iosfwd>
#include <limits>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "confield/geometry.hpp"

namespace confield::spectral {

// 2 / (Gamma(n/2) (4 pi)^{n/2}). Requires even n >= 2.
double a_n_constant(int n);

// The n/2 curvature weights (n/2)(n/2-1) - j(j-1), j = 1..n/2.
std::vector<double> gjms_nu_weights(int n);

// Operator eigenvalue on an Einstein manifold with Ric = k g:
// nu(lambda) = prod_j [lambda + k/(n-1) * weight_j]; flat k=0 gives
// lambda^{n/2}, and n=2 gives lambda.
double gjms_nu(double lambda, double einstein_k, int n);

// Coefficients of prod_j (x + k/(n-1) * weight_j) in descending powers of
// x = -Laplacian; size n/2 + 1, leading coefficient 1.
std::vector<double> gjms_symbolic_coefficients(int n, double einstein_k);

struct NuEntry {
  double nu = 0.0;
  double lambda = 0.0;
  int multiplicity = 0;
  std::array<int, 5> descriptor{};
};

struct GjmsSpectrum {
  geom::LaplaceSpectrum base;
  std::vector<NuEntry> nu_entries;  // sorted by (nu, descriptor)
  double a_n = 0.0;
  double einstein_k = 0.0;
  int dimension = 0;
  bool admissible = false;  // nu > 0 for every nonconstant mode
  // Every eigenvalue strictly below this threshold is present in the
  // enumeration; box-truncated spectra (torus, products) are incomplete
  // above it and counting fits must stop there.
  double lambda_complete = std::numeric_limits<double>::infinity();
};

// Throws std::invalid_argument on odd n and on non-Einstein input
// ("unsupported: non-Einstein model" comes from the manifold overload).
GjmsSpectrum gjms_eigenvalues(const geom::LaplaceSpectrum& spec,
                              double einstein_k, int n);
GjmsSpectrum gjms_eigenvalues(const geom::ManifoldModel& m, int cutoff);

enum class KernelKind {
  copoly_green,        // K(x,y) = sum_{j>=1} psi_j(x) psi_j(y) / nu_j
  normalized,          // k = K / a_n
  resolvent,           // sum over all modes of psi psi / (alpha+lambda)^s
  grounded_resolvent,  // constant mode removed
  heat,                // sum e^{-lambda t} psi psi
  grounded_heat,
};

struct KernelParams {
  double s = 1.0;
  double alpha = 1.0;
  double t = 1.0;
};

// Truncated kernel evaluation by degree-wise sums: the inner sum over a
// multiplicity level collapses via the addition theorem, so a pair
// evaluation costs O(levels) instead of O(modes). Immutable and shareable;
// batch use from several threads is safe.
class KernelEvaluator {
 public:
  KernelEvaluator(std::shared_ptr<const geom::ManifoldModel> m,
                  int level_cutoff,
                  KernelKind kind = KernelKind::copoly_green,
                  KernelParams params = {});

  // Evaluates the kernel fixed at construction.
  double operator()(const geom::Point& x, const geom::Point& y) const;

  // Ad-hoc evaluations independent of the constructed kind.
  double green(const geom::Point& x, const geom::Point& y) const;
  double normalized(const geom::Point& x, const geom::Point& y) const;
  double resolvent(double s, double alpha, bool grounded,
                   const geom::Point& x, const geom::Point& y) const;
  double heat(double t, bool grounded, const geom::Point& x,
              const geom::Point& y) const;

  // K(x,x) at the truncation (finite; diverges logarithmically as the
  // cutoff grows). Constant over x on the homogeneous models.
  double green_diagonal(const geom::Point& x) const;
  double normalized_diagonal(const geom::Point& x) const;

  const GjmsSpectrum& spectrum() const { return spectrum_; }
  const geom::ManifoldModel& manifold() const { return *m_; }
  std::shared_ptr<const geom::ManifoldModel> manifold_ptr() const {
    return m_;
  }
  int truncation() const { return cutoff_; }
  KernelKind kind() const { return kind_; }
  const KernelParams& params() const { return params_; }

 private:
  void fill_weights(KernelKind kind, const KernelParams& p,
                    std::vector<double>& w, std::size_t& stop) const;
  double weighted_sum(const geom::Point& x, const geom::Point& y,
                      const double* w, std::size_t stop) const;
  double diagonal_sum(const double* w, std::size_t stop) const;

  std::shared_ptr<const geom::ManifoldModel> m_;
  GjmsSpectrum spectrum_;
  int cutoff_ = 0;
  KernelKind kind_ = KernelKind::copoly_green;
  KernelParams params_;
  // per-entry data in base-spectrum order (sorted by lambda)
  std::vector<double> lambda_, nu_, mult_, suffix_mult_;
  std::vector<std::array<int, 5>> desc_;
  std::vector<double> fixed_w_;
  std::size_t fixed_stop_ = 0;
  // dispatch data
  geom::ManifoldKind mkind_ = geom::ManifoldKind::Sphere;
  int dim_ = 0;
  double vol_ = 0.0;
  double radius_ = 0.0;                  // spheres
  std::vector<double> sides_;            // torus
  double r1_ = 0.0, r2_ = 0.0;           // product factors
  std::shared_ptr<const geom::ManifoldModel> f1_, f2_;
  int max_factor_level_ = 0;
};

// Convenience single evaluations (each builds a throwaway evaluator).
double green_kernel_eval(const geom::ManifoldModel& m, const geom::Point& x,
                         const geom::Point& y, int level_cutoff);
double normalized_kernel_eval(const geom::ManifoldModel& m,
                              const geom::Point& x, const geom::Point& y,
                              int level_cutoff);
double resolvent_kernel_eval(const geom::ManifoldModel& m, double s,
                             double alpha, bool grounded,
                             const geom::Point& x, const geom::Point& y,
                             int level_cutoff);
double heat_kernel_eval(const geom::ManifoldModel& m, double t,
                        const geom::Point& x, const geom::Point& y,
                        int level_cutoff = 0);  // 0: pick from t

// Smallest level cutoff whose spectrum completely covers [0, lambda].
int cutoff_for_lambda(const geom::ManifoldModel& m, double lambda);

struct HeatBoundReport {
  double kernel = 0.0;
  double bound = 0.0;
  bool holds = false;
};

// Checks the Gaussian-type lower bound for a model with Ric >= -(n-1) a^2 g:
// p_t(x,y) >= (4 pi t)^{-n/2} (a d / sinh(a d))^{(n-1)/2}
//             e^{-d^2/(4t)} e^{-lambda_* t},
// lambda_* = (n-1)^2 a^2 / 4 for n != 2 and a^2/6 for n = 2; a -> 0
// recovers the nonnegative-curvature form.
HeatBoundReport heat_lower_bound_check(const geom::ManifoldModel& m, double t,
                                       double d, double a);

// Resolvent through the heat representation
// (1/Gamma(s)) int_0^inf e^{-alpha t} t^{s-1} p_t(x,y) dt,
// integrated on a log-time grid; independent route used to cross-check the
// spectral sum. The constant mode is handled analytically.
double resolvent_via_heat(const geom::ManifoldModel& m, double s, double alpha,
                          bool grounded, const geom::Point& x,
                          const geom::Point& y, double du = 0.05);

// Quadratic form p(u,v) = sum_j nu_j u_j v_j on spectral coefficients in a
// mode_basis()-shaped truncation, plus the operator and its Green inverse
// acting coefficient-wise.
class CopolyForm {
 public:
  CopolyForm(std::vector<geom::ModeKey> modes, double einstein_k, int n);
  CopolyForm(const geom::ManifoldModel& m, std::vector<geom::ModeKey> modes);

  double operator()(const std::vector<double>& u,
                    const std::vector<double>& v) const;
  std::vector<double> apply(const std::vector<double>& u) const;
  // coefficient j >= 1 divided by nu_j, constant coefficient zeroed; throws
  // std::domain_error("not admissible") when some nu_j <= 0 for j >= 1
  std::vector<double> green_apply(const std::vector<double>& u) const;

  const std::vector<geom::ModeKey>& modes() const { return modes_; }
  const std::vector<double>& nu() const { return nu_; }
  bool admissible() const { return admissible_; }

 private:
  std::vector<geom::ModeKey> modes_;
  std::vector<double> nu_;
  bool admissible_ = false;
};

double copoly_form_apply(const CopolyForm& form, const std::vector<double>& u,
                         const std::vector<double>& v);
std::vector<double> copoly_apply(const CopolyForm& form,
                                 const std::vector<double>& u);
std::vector<double> green_operator_apply(const CopolyForm& form,
                                         const std::vector<double>& u);

// A truncated eigenbasis sampled on a quadrature grid: analysis and
// synthesis between grid functions and spectral coefficients. Grid
// resolution 0 picks one that integrates products of two basis modes
// exactly, so the discrete Gram matrix is the identity.
class SpectralBasis {
 public:
  SpectralBasis(std::shared_ptr<const geom::ManifoldModel> m, int min_modes,
                int grid_resolution = 0);

  const geom::ManifoldModel& manifold() const { return *m_; }
  std::shared_ptr<const geom::ManifoldModel> manifold_ptr() const {
    return m_;
  }
  const std::vector<geom::ModeKey>& modes() const { return modes_; }
  const geom::QuadratureGrid& grid() const { return grid_; }
  std::size_t mode_count() const { return modes_.size(); }
  std::size_t grid_size() const { return grid_.points.size(); }

  // B(j, i) = psi_j(grid point i)
  const Eigen::MatrixXd& mode_matrix() const { return B_; }
  const Eigen::VectorXd& weights() const { return w_; }

  Eigen::VectorXd analyze(const Eigen::VectorXd& f_grid) const;
  Eigen::VectorXd synthesize(const Eigen::VectorXd& coeffs) const;

 private:
  std::shared_ptr<const geom::ManifoldModel> m_;
  std::vector<geom::ModeKey> modes_;
  geom::QuadratureGrid grid_;
  Eigen::MatrixXd B_;
  Eigen::VectorXd w_;
};

// Largest per-axis/degree index appearing in a mode list (the quantity the
// quadrature resolution must dominate).
int max_mode_level(const geom::ManifoldModel& m,
                   const std::vector<geom::ModeKey>& modes);

// Grid-function route: f -> K f on the basis grid.
Eigen::VectorXd green_operator_apply(const SpectralBasis& basis,
                                     const CopolyForm& form,
                                     const Eigen::VectorXd& f_grid);

// Green kernel of the conformally changed metric g' = e^{2 phi} g within
// the truncated algebra:
//   K'(x,y) = K(x,y) - (phibar(x) + phibar(y)) / 2,
//   phibar = (2/v') K(e^{n phi}) - (1/v'^2) <e^{n phi}, K e^{n phi}>,
// where v' is the conformal volume and every g'-integral runs over the one
// shared basis grid, which makes the g'-grounding identity exact.
class ConformalKernelTransform {
 public:
  ConformalKernelTransform(const SpectralBasis& basis, const CopolyForm& form,
                           const Eigen::VectorXd& phi_grid);

  double vol_conformal() const { return vprime_; }
  double phibar_green(const geom::Point& x) const;  // pairs with K
  double phibar_log(const geom::Point& x) const;    // pairs with k = K/a_n

  double green(const geom::Point& x, const geom::Point& y) const;
  double normalized(const geom::Point& x, const geom::Point& y) const;
  // the untransformed truncated kernel over the same mode set
  double base_green(const geom::Point& x, const geom::Point& y) const;

  const SpectralBasis& basis() const { return basis_; }
  double a_n() const { return a_n_; }

 private:
  const SpectralBasis& basis_;
  const CopolyForm& form_;
  double a_n_ = 0.0;
  double vprime_ = 0.0;
  Eigen::VectorXd conf_coeffs_;  // coefficients of e^{n phi}
  double double_integral_ = 0.0;  // sum_j conf_j^2 / nu_j
};

struct RgEstimate {
  double value = 0.0;
  double error = 0.0;
  bool converged = false;
  std::vector<double> distances;
  std::vector<double> residuals;
};

// Extrapolates k_l(x, y_d) - log(1/d) along a shrinking distance ladder
// with truncation chosen per rung; the value is the kernel's diagonal
// log-regularization at x. Spheres only: the ladder needs truncations that
// grow like 1/d, and on the box-spectrum models the entry count is
// quadratic in the cutoff, so the escalation is not affordable there.
RgEstimate r_g_estimate(const geom::ManifoldModel& m, const geom::Point& x,
                        double d0 = 0.4, int rungs = 5);

struct RgField {
  std::vector<double> values;  // per basis grid point
  double mean = 0.0;           // volume average
  double c_g = 0.0;            // mean + (a_n/4) p(r, r)
  RgEstimate base;
};

// The log-regularized diagonal as a grid function, with the constant c_g
// used by the variance-adjusted measures. The built-in models are
// homogeneous (transitive isometry groups), so one estimate is broadcast
// and the quadratic-form term is computed by the general formula (it
// vanishes for a constant field).
RgField r_g_field(const SpectralBasis& basis, const CopolyForm& form);

struct WeylReport {
  double slope = 0.0;
  double max_scaled_residual = 0.0;  // max |nu_j - slope j| / j^{1 - 1/n}
  std::size_t count = 0;
};

// Least-squares fit nu_j ~ slope * j through the origin over the
// multiplicity-expanded, sorted eigenvalue list. Requires >= 500 entries.
WeylReport weyl_check(const GjmsSpectrum& spectrum);

// CSV: "d,kernel_value,residual_vs_log" with kernel_value = eval(x, y_d)
// for the evaluator's fixed kind and residual vs log(1/d).
void dump_kernel_residual_csv(const KernelEvaluator& ev, const geom::Point& x,
                              const std::vector<double>& distances,
                              std::ostream& os);

}  // namespace confield::spectral
