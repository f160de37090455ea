#pragma once

#include <utility>
#include <vector>

#include "rsb/kernel.hpp"
#include "rsb/potentials.hpp"

namespace rsb {

// Two-regime killing model: an active regime with diffusion (and optional
// jumps) plus a frozen dead regime reached at rate V(t). A particle keeps its
// location upon being killed (psi = identity), and the dead regime is
// absorbing (Q_21 = 0).
struct KillingModel {
  static constexpr int kActive = 1;
  static constexpr int kDead = 2;

  ModelSpec base;  // single-regime active dynamics
  Expr V;          // killing rate, nonnegative, over t only
  std::string V_source;
  Pt x0;           // Dirac start
  double T = 1.0;

  double v_at(double t) const;
  double v_integral(double a, double b) const;  // int_a^b V(r) dr

  // True when the base is a constant-coefficient diffusion without jumps, in
  // which case q0 is the Gaussian family and all kernels are analytic.
  bool gaussian_base() const;
  Pt const_drift() const;
  Mat const_sigma() const;

  // q0(t,x,s,y): analytic Gaussian transition density of the base diffusion.
  double q0_density(double t, const Pt& x, double s, const Pt& y) const;
  // q = exp(-int_t^s V) q0 (density with killing)
  double q_density(double t, const Pt& x, double s, const Pt& y) const;
  // p12(t,x,s,y) = int_t^s V(r) q(t,x,r,y) dr (adaptive Simpson, sqrt
  // substitution near the short-time singularity; d = 1 only)
  double p12_density(double t, const Pt& x, double s, const Pt& y, double tol = 1e-8) const;
  // Exact cell average of p12 over [ylo, yhi]: the time integrand carries the
  // Gaussian cell mass (an erf bracket), so the kink of p12 at y = x never
  // meets the spatial quadrature. Kernel columns store these averages; their
  // weighted sums then reproduce killed masses to the Simpson tolerance.
  double p12_cell_average(double t, const Pt& x, double s, double ylo, double yhi,
                          double tol = 1e-8) const;

  // The equivalent two-regime ModelSpec.
  ModelSpec to_model_spec() const;

  void validate() const;
};

// Terminal targets: densities of surviving positions and killing locations.
struct UsbpTarget {
  std::vector<double> active_density;  // size N
  std::vector<double> dead_density;    // size N
  double active_mass = 0, dead_mass = 0;

  // diagnostics evaluated at load
  double kl_to_reference = 0;  // KL(rhoT | R_T) on the grid (finiteness check)
  double sup_g = 0;            // boundedness check on ghat

  Marginal to_marginal(const Grid& grid) const;
};

// Builds a target from nonnegative shape fields, normalized so that the two
// masses sum to one with the given dead fraction.
UsbpTarget make_target(const KillingModel& km, const Grid& grid,
                       const std::vector<double>& active_shape,
                       const std::vector<double>& dead_shape, double dead_fraction);

// (p11, p12) on the grid: p11 = q, p12 by time quadrature of V q.
std::pair<Kernel, Kernel> usbp_kernels(const KillingModel& km, const Grid& grid, double t,
                                       double s);

// Full two-regime kernel: rows (a -> a) = p11, (a -> d) = p12, dead regime
// frozen (unit mass in place).
Kernel usbp_two_regime_kernel(const KillingModel& km, const Grid& grid, double t, double s);

// Boundary field ghat on both regimes (0 off the target supports); throws a
// target-incompatibility error listing nodes where a denominator vanishes on
// the support. fhat == 1 throughout. pointwise_p12 selects the pointwise
// density over the (mass-exact) cell average in the dead denominators.
std::vector<double> usbp_g(const KillingModel& km, const UsbpTarget& target, const Grid& grid,
                           bool pointwise_p12 = false);

// Closed-form Schroedinger potentials on uniform slices (no Sinkhorn needed
// since fhat == 1). Cell-averaged p12 keeps slice masses exact; the pointwise
// variant keeps the fields smooth in time, which the second-order PIDE
// residual checks need.
std::pair<PotentialField, PotentialField> usbp_potentials(const KillingModel& km,
                                                          const UsbpTarget& target,
                                                          const Grid& grid, int slices,
                                                          bool pointwise_p12 = false);

// Tilted killing rate under the bridge: (phi_d / phi_a)(t,x) V(t).
double usbp_killing_rate(const PotentialField& phi, const Expr& V, double t, const Pt& x);

// Both sides of the p^hat_12 relation
//   p^hat_12(t,x,s,y) = int_t^s (phi_d/phi_a)(r,y) V(r) p^hat_11(t,x,r,y) dr,
// the left side from the closed form, the right by quadrature against the
// time-interpolated potential field.
std::pair<double, double> usbp_p12_identity(const KillingModel& km, const PotentialField& phi,
                                            double t, const Pt& x, double s, const Pt& y);

// Unbalanced SCP running cost: the kl_running_cost specialization for the
// two-regime model (the switch term carries the V(t) weight).
double usbp_scp_cost(const SamplePath& path, const ControlTriple& controls,
                     const KillingModel& km);

}  // namespace rsb
