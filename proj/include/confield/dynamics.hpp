#pragma once
// Brownian motion on the model manifolds, the positive continuous additive
// functional driven by a multiplicative-chaos density, the time-changed
// (Liouville) process, and the random co-polyharmonic operator obtained by
// projecting the quadratic form onto the truncated eigenbasis.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "confield/field.hpp"
#include "confield/geometry.hpp"
#include "confield/measure.hpp"

namespace confield::dynamics {

// Sample path of the generator-Delta Brownian motion on a uniform time grid
// t_i = i * dt.  Flat tori use exact wrapped Gaussian increments (variance
// 2*dt per axis); spheres use a geodesic random walk with an isotropic
// tangent Gaussian step (weak error O(dt)).  `unwrapped` carries the
// increment sums before wrapping on flat tori and is empty otherwise.
struct BrownianPath {
  double dt = 0.0;
  std::vector<geom::Point> positions;
  std::vector<geom::Point> unwrapped;

  std::size_t steps() const { return positions.empty() ? 0 : positions.size() - 1; }
  double time(std::size_t i) const { return dt * double(i); }
  double horizon() const { return dt * double(steps()); }
};

// Consumes stream indices (d+1)*s .. (d+1)*s+d at step s on a sphere with
// embedding dimension d+1, and d*s .. d*s+d-1 on a d-torus.
BrownianPath simulate_bm(const geom::ManifoldModel& m, const geom::Point& x0,
                         double horizon, double dt, std::uint64_t seed,
                         std::uint64_t stream);

// A(t_i): trapezoidal time integral of the chaos density along a path.
struct AdditiveFunctional {
  double dt = 0.0;
  std::vector<double> values;  // A(t_0)=0, nondecreasing
  double gamma = 0.0;
  int truncation = 0;
  // set when |gamma| >= 2, outside the Dirichlet-form regime
  bool beyond_dirichlet_regime = false;

  double total() const { return values.empty() ? 0.0 : values.back(); }
};

// Integrand exp(gamma * h(B_s) - gamma^2/2 * k(B_s,B_s)) with the field and
// its pointwise variance truncated to `prefix` coefficients (negative:
// every coefficient of the sampler).
AdditiveFunctional additive_functional(const field::FieldSampler& sampler,
                                       const BrownianPath& path,
                                       const field::FieldSample& s,
                                       double gamma, int prefix = -1);

// X_t = B_{tau_t} with tau the piecewise-linear right inverse of A,
// evaluated on the uniform output grid k * dt_out up to `horizon`.
struct TimeChangedPath {
  double dt = 0.0;
  std::vector<geom::Point> positions;
  bool truncated = false;    // requested horizon exceeded A(T)
  double reached = 0.0;      // last functional time actually covered
};

TimeChangedPath time_change(const geom::ManifoldModel& m,
                            const BrownianPath& path,
                            const AdditiveFunctional& a, double horizon,
                            double dt_out);

// Occupation identity E_x[int_0^t u(B_s) dA_s] =
// int u(y) (int_0^t p_s(x,y) ds) dmu(y) for one fixed field sample: the
// left side is Monte Carlo over paths, the right a deterministic grid sum
// against the time-integrated heat kernel (image sum for small times, eigen
// expansion for the remainder).  2-torus, plain eigenfunction measures only.
struct RevuzReport {
  double lhs_mean = 0.0;
  double lhs_half_width = 0.0;
  double rhs_mean = 0.0;
  double rhs_half_width = 0.0;  // zero: the right side is not sampled
  bool intervals_overlap = false;
};

RevuzReport revuz_check(const measure::GmcBuilder& builder,
                        const geom::Point& x0,
                        const Eigen::VectorXd& u_coeffs, double t,
                        double path_dt, int trials, std::uint64_t seed,
                        std::uint64_t field_stream = 0);

// int_0^t p_s(x,y) ds for the generator-Delta heat kernel on a flat
// 2-torus, accurate to roughly 1e-12 away from y = x (diverges at y = x).
double heat_kernel_time_integral(const geom::ManifoldModel& m,
                                 const geom::Point& x, const geom::Point& y,
                                 double t);

// Galerkin projection of the random co-polyharmonic form onto the grounded
// modes: stiffness diag(nu_j) against the Gram matrix of the measure.
struct RandomGjmsOperator {
  Eigen::VectorXd nu;       // stiffness diagonal, grounded modes
  Eigen::MatrixXd gram;     // G_ij = sum_g psi_i psi_j w~_g (after regularization)
  Eigen::VectorXd theta;    // generalized eigenvalues, ascending
  Eigen::MatrixXd vectors;  // columns V with V^T G V = I
  double regularization = 0.0;  // ridge added to gram when near singular
};

RandomGjmsOperator random_gjms_assemble(const field::FieldSampler& sampler,
                                        const measure::LqgMeasure& mu,
                                        int prefix = -1);

// e^{-t P^h} u0 in grounded coefficients via the generalized eigenbasis.
// The kernel mode (constants) is not part of the grounded state: the
// operator annihilates it, so its coefficient rides along unchanged and is
// the conserved mass of the flow, while the grounded part decays to zero.
Eigen::VectorXd copoly_heat_flow(const RandomGjmsOperator& op,
                                 const Eigen::VectorXd& u0, double t);

// Energy p(u) = u^T diag(nu) u of the quadratic form.
double copoly_energy(const RandomGjmsOperator& op, const Eigen::VectorXd& u);

// Dissipation ||P^h u||^2 in L^2(mu): u^T A G^{-1} A u via a direct solve
// with the Gram matrix (independent of the eigen decomposition).
double copoly_dissipation(const RandomGjmsOperator& op,
                          const Eigen::VectorXd& u);

// Centered finite difference of the energy along the flow against the
// independently assembled dissipation form, at each requested time. The
// semigroup is the L^2(mu) gradient flow of E(u) = p(u)/2, along which
// dE/dt = -||P^h u_t||^2 exactly.
struct DissipationReport {
  std::vector<double> times;
  std::vector<double> defects;  // |d(p/2)/dt + ||P^h u_t||^2|
  double max_defect = 0.0;
};

DissipationReport energy_dissipation_check(const RandomGjmsOperator& op,
                                           const Eigen::VectorXd& u0,
                                           const std::vector<double>& times,
                                           double fd_step);

// The coefficient-space value p(u,v) = sum_j nu_j u_j v_j of the form, and
// a two-route check that its value is unchanged when assembled through the
// conformally rescaled volume element (the e^{+n phi} and e^{-n phi}
// factors run through separate code paths before cancelling).
double copoly_form(const field::FieldSampler& sampler,
                   const Eigen::VectorXd& u_grid,
                   const Eigen::VectorXd& v_grid);

struct FormInvarianceReport {
  double form_base = 0.0;
  double form_conformal = 0.0;
  double relative_gap = 0.0;
};

FormInvarianceReport conformal_form_invariance_check(
    const field::FieldSampler& sampler, const Eigen::VectorXd& u_grid,
    const Eigen::VectorXd& v_grid, const Eigen::VectorXd& phi_grid);

// CSV dumps: paths as `t,c0,...`, functionals as `t,A`, operator spectra
// as `index,theta`.
void dump_path_csv(const geom::ManifoldModel& m, const BrownianPath& path,
                   std::ostream& os);
void dump_functional_csv(const AdditiveFunctional& a, std::ostream& os);
void dump_spectrum_csv(const RandomGjmsOperator& op, std::ostream& os);

}  // namespace confield::dynamics
