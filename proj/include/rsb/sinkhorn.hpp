#pragma once

#include <string>
#include <vector>

#include "rsb/kernel.hpp"

namespace rsb {

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Endpoint kernel p_ij(0,.,T,.) restricted to supp(rho0) x supp(rhoT).
// Start entries carry target masses (a Dirac start node is a single row);
// end entries carry quadrature weights and target densities.
struct EndpointKernel {
  double t = 0, s = 1;

  std::vector<int> s_regime, s_node;
  std::vector<double> s_mass;  // rho0 mass per start entry

  std::vector<int> e_regime, e_node;
  std::vector<double> e_w;        // quadrature weight (cell volume)
  std::vector<double> e_density;  // rhoT density per end entry
  double e_mass(std::size_t c) const { return e_density[c] * e_w[c]; }

  std::vector<double> p;  // [start][end] transition density, must be > 0
  bool valid = true;      // positivity of p on the restricted support

  std::size_t n_start() const { return s_regime.size(); }
  std::size_t n_end() const { return e_regime.size(); }
  double pat(std::size_t r, std::size_t c) const { return p[r * n_end() + c]; }
};

// Supports are determined by thresholding marginal masses at > 0 exactly.
EndpointKernel restrict_kernel(const Kernel& K, const Marginal& rho0, const Marginal& rhoT);

// The boundary quadruple solving the static system, in the solver's
// normalization ||phihat(T,.)|| = 1 on the combined norm.
struct BoundaryPotentials {
  std::vector<double> phi0;          // phi(0,x,i) on start support
  std::vector<double> phihat0_mass;  // measure phihat(0,dx,i) = fhat * R0, masses
  std::vector<double> phiT;          // phi(T,y,j) = ghat on end support
  std::vector<double> phihatT;       // phihat(T,y,j) on end support
  bool converged = true;
};

struct ConvergenceReport {
  enum class Status { converged, max_iters, invalid_kernel };
  Status status = Status::converged;
  int iterations = 0;
  std::vector<double> residuals;  // combined-norm residual per iteration
  double marginal_error_start = 0;  // max nodewise reconstruction error vs rho0
  double marginal_error_end = 0;    // vs rhoT
};

// Pointwise reciprocal; throws on nonpositive entries.
std::vector<double> map_D(const std::vector<double>& f);

// E_rhoT(f)(x,i) = sum_j int p_ij(0,x,T,y) rhoT(y,j) f(y,j) dy  (end -> start)
std::vector<double> map_E_rhoT(const std::vector<double>& f, const EndpointKernel& K);

// E_rho0(f)(y,j) = sum_i int p_ij(0,x,T,y) rho0(x,i) f(x,i) dx  (start -> end)
std::vector<double> map_E_rho0(const std::vector<double>& f, const EndpointKernel& K);

// Combined norm ||f||^2 = sum_j ||f(.,j)||^2_{L2(A_T^j)} via grid quadrature.
double combined_norm(const std::vector<double>& f, const EndpointKernel& K);

// Normalized fixed-point iteration of C = E_rho0 o D o E_rhoT o D starting
// from f0 on the end support (default f0 = 1).
std::pair<BoundaryPotentials, ConvergenceReport> iterate_C(const EndpointKernel& K,
                                                           const std::vector<double>& f0,
                                                           double tol = 1e-10,
                                                           int max_iters = 10000);
std::pair<BoundaryPotentials, ConvergenceReport> iterate_C(const EndpointKernel& K,
                                                           double tol = 1e-10,
                                                           int max_iters = 10000);

// Coupling masses pi[start][end] = phihat0 * p * phiT * w induced by the
// potentials; its row/column sums reproduce the marginals.
std::vector<double> coupling(const BoundaryPotentials& bp, const EndpointKernel& K);

// The R^{d+1} embedding used as an independent oracle: regimes become unit
// intervals I_i = [2i, 2i+1] on an extra axis (with gap cells between them),
// producing a single-regime kernel and marginals on a (d+1)-dim grid.
struct EmbeddedProblem {
  Grid grid;       // d+1 dimensional
  Kernel kernel;   // single regime; zero on rows/columns of gap cells
  Marginal rho0;
  Marginal rhoT;
  // flat (d+1)-grid node of (regime i, base node k)
  std::vector<int> node_of;  // [(i-1)*N + k]
};

EmbeddedProblem embed_flatten(const Kernel& K, const Marginal& rho0, const Marginal& rhoT);

}  // namespace rsb
