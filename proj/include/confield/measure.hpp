#pragma once
// Multiplicative-chaos volume measures built from truncated field samples:
// plain, adjusted, and refined flavors, several smoothing schemes, and the
// identities (shift, Campbell, martingale, conformal change, ball scaling)
// that characterize them.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "confield/field.hpp"
#include "confield/geometry.hpp"
#include "confield/spectral.hpp"

namespace confield::measure {

enum class Flavor { plain, refined, adjusted };
enum class Scheme { eigenfunction, heat, partition };

const char* flavor_name(Flavor f);
const char* scheme_name(Scheme s);

// A discrete volume measure on the sampler's quadrature grid.
struct LqgMeasure {
  Eigen::VectorXd weights;  // nonnegative, one per grid point
  double gamma = 0.0;
  Flavor flavor = Flavor::plain;
  Scheme scheme = Scheme::eigenfunction;
  int truncation = 0;  // random coefficients entering the exponent
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  double mass() const;
  double subset_mass(const std::vector<std::size_t>& indices) const;
};

// Prepares the per-grid-point data a measure needs: the scheme's smoothing
// matrix, its variance diagonal (the renormalization is always the variance
// of the very field being exponentiated), and the flavor's curvature fields.
class GmcBuilder {
 public:
  // scheme_param: heat time (<= 0 picks 1/mode-count) or partition cells
  GmcBuilder(const field::FieldSampler& sampler, double gamma,
             Flavor flavor = Flavor::plain,
             Scheme scheme = Scheme::eigenfunction, double scheme_param = 0.0);

  const field::FieldSampler& sampler() const { return sampler_; }
  double gamma() const { return gamma_; }
  Flavor flavor() const { return flavor_; }
  Scheme scheme() const { return scheme_; }
  double scheme_param() const { return scheme_param_; }
  // variance of the scheme field at each grid point
  const Eigen::VectorXd& diagonal() const { return diag_; }
  // log-regularized kernel diagonal and its centering constant
  // (computed only for the adjusted and refined flavors)
  const Eigen::VectorXd& r_values() const { return r_values_; }
  double c_g() const { return c_g_; }

  // scheme field values on the grid for one sample
  Eigen::VectorXd field_grid(const field::FieldSample& s) const;
  // scheme smoothing applied to an arbitrary coefficient vector
  Eigen::VectorXd smoothed_from_coefficients(
      const Eigen::VectorXd& coeffs) const;
  // refined flavor: <h, P_g r> = xi . noise_projection()
  const Eigen::VectorXd& noise_projection() const { return noise_proj_; }

  LqgMeasure build(const field::FieldSample& s) const;
  // measure from the first `prefix` coefficients only (plain or adjusted)
  LqgMeasure build_prefix(const field::FieldSample& s,
                          std::size_t prefix) const;
  // samples streams first_stream .. first_stream+count-1
  std::vector<LqgMeasure> build_many(std::uint64_t seed,
                                     std::uint64_t first_stream,
                                     int count) const;

 private:
  Eigen::VectorXd prefix_diagonal(std::size_t prefix) const;
  LqgMeasure assemble(const Eigen::VectorXd& fvals, const Eigen::VectorXd& diag,
                      double sample_factor) const;

  const field::FieldSampler& sampler_;
  double gamma_ = 0.0;
  Flavor flavor_ = Flavor::plain;
  Scheme scheme_ = Scheme::eigenfunction;
  double scheme_param_ = 0.0;
  Eigen::MatrixXd smooth_;   // scheme matrix, modes x grid
  Eigen::VectorXd diag_;
  Eigen::VectorXd r_values_;
  Eigen::VectorXd noise_proj_;  // refined: <h, P_g r> = xi . noise_proj_
  double c_g_ = 0.0;
};

struct ShiftCheckReport {
  double max_relative_deviation = 0.0;
  bool pass = false;  // deviation below 1e-12
};

// Rebuilding from shifted coefficients must equal multiplying the weights
// by the exponential of the (scheme-smoothed) shift.
ShiftCheckReport cameron_martin_shift_check(const GmcBuilder& builder,
                                            const field::FieldSample& s,
                                            const Eigen::VectorXd& phi_coeffs);

struct CampbellReport {
  double lhs_mean = 0.0;  // E int f(h, x) dmu(x)
  double lhs_half_width = 0.0;
  double rhs_mean = 0.0;  // E int f(h + gamma k(x,.), x) dvol(x)
  double rhs_half_width = 0.0;
  bool intervals_overlap = false;
};

// f sees the pairing <h, u> (already shifted on the right-hand side) and
// the grid point index.
CampbellReport campbell_check(
    const GmcBuilder& builder, const Eigen::VectorXd& u_grid,
    const std::function<double(double, std::size_t)>& f, int samples,
    std::uint64_t seed, std::uint64_t first_stream = 0);

struct MartingaleReport {
  double slope = 0.0;
  double slope_half_width = 0.0;
  double intercept = 0.0;
  double intercept_half_width = 0.0;
  double coarse_mean = 0.0;  // E mu_{l1}(B)
  double fine_mean = 0.0;    // E mu_{l2}(B)
  double subset_volume = 0.0;
  bool pass = false;
};

// Conditional Monte Carlo: outer draws fix the first `prefix_coarse`
// coefficients, inner draws complete them to `prefix_fine`; the regression
// of the inner mean of mu_fine(B) on mu_coarse(B) must be the identity.
MartingaleReport martingale_check(const GmcBuilder& builder,
                                  const std::vector<std::size_t>& subset,
                                  std::size_t prefix_coarse,
                                  std::size_t prefix_fine, int outer,
                                  int inner, std::uint64_t seed);

struct ConformalMeasureResult {
  LqgMeasure transformed;
  Eigen::VectorXd factor;  // per-point multiplier applied to the weights
  double xi_bar = 0.0;     // <h, e^{n phi}>_g / vol_{g'}
  Eigen::VectorXd phibar;  // kernel-average correction field
};

// Weight the measure into the conformally changed metric. Plain flavor
// multiplies by exp(-gamma xi + (gamma^2/2) phibar + n phi); the adjusted
// flavor's multiplier collapses to exp(-gamma xi + (n + gamma^2/2) phi).
ConformalMeasureResult conformal_measure_transform(
    const GmcBuilder& builder, const field::FieldSample& s,
    const Eigen::VectorXd& phi_grid);

struct BallScalingReport {
  std::vector<double> radii;
  std::vector<double> mean_mass;
  std::vector<double> quantile_mass;
  double mean_slope = 0.0;      // log-log fit, expected about n
  double quantile_slope = 0.0;
  double quantile = 0.0;
};

BallScalingReport ball_scaling_stats(const field::FieldSampler& sampler,
                                     const std::vector<LqgMeasure>& ensemble,
                                     const geom::Point& center,
                                     const std::vector<double>& radii,
                                     double quantile = 0.9);

struct UiFitReport {
  double theta = 0.0;   // slope against log(1 / (d v 1/c))
  double offset = 0.0;  // additive constant
  double max_residual = 0.0;
  int pairs = 0;
};

// Diagnostic least-squares fit of the kernel against its logarithmic
// envelope over random pairs; reported, never gating.
UiFitReport uniform_integrability_fit(const field::FieldSampler& sampler,
                                      int pairs, std::uint64_t seed);

struct MomentEntry {
  double p = 0.0;
  double value = 0.0;
  double cap = 0.0;  // lower mass cap used for negative p (0 otherwise)
};

// Empirical mass moments; negative orders cap the mass from below at
// cap_fraction times the median and report the cap.
std::vector<MomentEntry> moment_summary(const std::vector<double>& masses,
                                        const std::vector<double>& orders,
                                        double cap_fraction = 1e-3);

// JSON ensemble summary:
// {gamma, ell, scheme, mass_mean, mass_var, moments:{p: value}}
std::string ensemble_summary_json(const GmcBuilder& builder,
                                  const std::vector<LqgMeasure>& ensemble,
                                  const std::vector<double>& orders);

// CSV rows: chart coordinates then the weight.
void dump_measure_csv(const field::FieldSampler& sampler, const LqgMeasure& mu,
                      std::ostream& os);

}  // namespace confield::measure
