#include "rsb/sinkhorn.hpp"

#include <cmath>

namespace rsb {

EndpointKernel restrict_kernel(const Kernel& K, const Marginal& rho0, const Marginal& rhoT) {
  if (!K.grid.same_as(rho0.grid) || !K.grid.same_as(rhoT.grid))
    throw ConfigError("restrict_kernel: grid mismatch");
  if (K.regimes != rho0.regimes || K.regimes != rhoT.regimes)
    throw ConfigError("restrict_kernel: regime mismatch");
  if (!rhoT.diracs.empty())
    throw ConfigError("restrict_kernel: Dirac components are supported in rho0 only");

  EndpointKernel ek;
  ek.t = K.t;
  ek.s = K.s;
  const int n = K.grid.size();
  const double w = K.grid.cell_weight();

  for (const auto& dd : rho0.diracs) {
    ek.s_regime.push_back(dd.regime);
    ek.s_node.push_back(dd.node);
    ek.s_mass.push_back(dd.m);
  }
  for (int i = 1; i <= K.regimes; ++i)
    for (int x = 0; x < n; ++x)
      if (rho0.at(i, x) > 0) {
        ek.s_regime.push_back(i);
        ek.s_node.push_back(x);
        ek.s_mass.push_back(rho0.at(i, x));
      }
  for (int j = 1; j <= K.regimes; ++j)
    for (int y = 0; y < n; ++y)
      if (rhoT.at(j, y) > 0) {
        ek.e_regime.push_back(j);
        ek.e_node.push_back(y);
        ek.e_w.push_back(w);
        ek.e_density.push_back(rhoT.at(j, y) / w);
      }

  if (ek.n_start() == 0 || ek.n_end() == 0)
    throw SolverError("restrict_kernel: empty marginal support");

  ek.p.resize(ek.n_start() * ek.n_end());
  for (std::size_t r = 0; r < ek.n_start(); ++r)
    for (std::size_t c = 0; c < ek.n_end(); ++c) {
      double v = K.at(ek.s_regime[r], ek.s_node[r], ek.e_regime[c], ek.e_node[c]);
      ek.p[r * ek.n_end() + c] = v;
      if (!(v > 0)) ek.valid = false;
    }
  return ek;
}

std::vector<double> map_D(const std::vector<double>& f) {
  std::vector<double> out(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) {
    if (!(f[k] > 0)) throw SolverError("map_D: nonpositive entry");
    out[k] = 1.0 / f[k];
  }
  return out;
}

std::vector<double> map_E_rhoT(const std::vector<double>& f, const EndpointKernel& K) {
  if (f.size() != K.n_end()) throw SolverError("map_E_rhoT: shape mismatch");
  std::vector<double> out(K.n_start(), 0.0);
  for (std::size_t r = 0; r < K.n_start(); ++r) {
    double s = 0;
    for (std::size_t c = 0; c < K.n_end(); ++c) s += K.pat(r, c) * K.e_mass(c) * f[c];
    out[r] = s;
  }
  return out;
}

std::vector<double> map_E_rho0(const std::vector<double>& f, const EndpointKernel& K) {
  if (f.size() != K.n_start()) throw SolverError("map_E_rho0: shape mismatch");
  std::vector<double> out(K.n_end(), 0.0);
  for (std::size_t c = 0; c < K.n_end(); ++c) {
    double s = 0;
    for (std::size_t r = 0; r < K.n_start(); ++r) s += K.pat(r, c) * K.s_mass[r] * f[r];
    out[c] = s;
  }
  return out;
}

double combined_norm(const std::vector<double>& f, const EndpointKernel& K) {
  double s = 0;
  for (std::size_t c = 0; c < K.n_end(); ++c) s += f[c] * f[c] * K.e_w[c];
  return std::sqrt(s);
}

std::pair<BoundaryPotentials, ConvergenceReport> iterate_C(const EndpointKernel& K, double tol,
                                                           int max_iters) {
  return iterate_C(K, std::vector<double>(K.n_end(), 1.0), tol, max_iters);
}

std::pair<BoundaryPotentials, ConvergenceReport> iterate_C(const EndpointKernel& K,
                                                           const std::vector<double>& f0,
                                                           double tol, int max_iters) {
  ConvergenceReport report;
  if (!K.valid) {
    report.status = ConvergenceReport::Status::invalid_kernel;
    throw SolverError("endpoint kernel is not strictly positive on the marginal supports");
  }
  if (f0.size() != K.n_end()) throw SolverError("iterate_C: f0 shape mismatch");
  for (double v : f0)
    if (!(v > 0)) throw SolverError("iterate_C: f0 must be positive on the end support");

  std::vector<double> f = f0;
  {
    double nrm = combined_norm(f, K);
    for (double& v : f) v /= nrm;
  }

  bool converged = false;
  std::vector<double> prev;
  for (int it = 1; it <= max_iters; ++it) {
    prev = f;
    // C = E_rho0 o D o E_rhoT o D, then normalize in the combined norm
    f = map_E_rho0(map_D(map_E_rhoT(map_D(f), K)), K);
    double nrm = combined_norm(f, K);
    if (!(nrm > 0) || !std::isfinite(nrm)) throw SolverError("iterate_C: degenerate iterate");
    for (double& v : f) v /= nrm;

    double resid = 0;
    for (std::size_t c = 0; c < K.n_end(); ++c) {
      double dlt = f[c] - prev[c];
      resid += dlt * dlt * K.e_w[c];
    }
    resid = std::sqrt(resid);
    report.residuals.push_back(resid);
    report.iterations = it;
    if (resid <= tol) {
      converged = true;
      break;
    }
  }
  report.status =
      converged ? ConvergenceReport::Status::converged : ConvergenceReport::Status::max_iters;

  BoundaryPotentials bp;
  bp.converged = converged;
  bp.phihatT = f;
  bp.phiT.resize(K.n_end());
  for (std::size_t c = 0; c < K.n_end(); ++c) bp.phiT[c] = K.e_density[c] / f[c];
  bp.phi0 = map_E_rhoT(map_D(f), K);
  bp.phihat0_mass.resize(K.n_start());
  for (std::size_t r = 0; r < K.n_start(); ++r) bp.phihat0_mass[r] = K.s_mass[r] / bp.phi0[r];

  // marginal reconstruction errors through the induced coupling
  std::vector<double> pi = coupling(bp, K);
  double err0 = 0, errT = 0;
  for (std::size_t r = 0; r < K.n_start(); ++r) {
    double s = 0;
    for (std::size_t c = 0; c < K.n_end(); ++c) s += pi[r * K.n_end() + c];
    err0 = std::max(err0, std::abs(s - K.s_mass[r]));
  }
  for (std::size_t c = 0; c < K.n_end(); ++c) {
    double s = 0;
    for (std::size_t r = 0; r < K.n_start(); ++r) s += pi[r * K.n_end() + c];
    errT = std::max(errT, std::abs(s - K.e_mass(c)));
  }
  report.marginal_error_start = err0;
  report.marginal_error_end = errT;
  return {bp, report};
}

std::vector<double> coupling(const BoundaryPotentials& bp, const EndpointKernel& K) {
  std::vector<double> pi(K.n_start() * K.n_end());
  for (std::size_t r = 0; r < K.n_start(); ++r)
    for (std::size_t c = 0; c < K.n_end(); ++c)
      pi[r * K.n_end() + c] = bp.phihat0_mass[r] * K.pat(r, c) * bp.phiT[c] * K.e_w[c];
  return pi;
}

EmbeddedProblem embed_flatten(const Kernel& K, const Marginal& rho0, const Marginal& rhoT) {
  if (K.grid.d != 1) throw ConfigError("embed_flatten supports 1-d base grids");
  const int R = K.regimes;
  const int n = K.grid.size();

  if (R == 1) {  // the embedding is an identity restructuring
    EmbeddedProblem em;
    em.grid = K.grid;
    em.kernel = K;
    em.rho0 = rho0;
    em.rhoT = rhoT;
    em.node_of.resize(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) em.node_of[static_cast<std::size_t>(k)] = k;
    return em;
  }

  EmbeddedProblem em;
  // Extra axis spans [2, 2R+1] with unit cells; cell of regime i is the
  // interval I_i = [2i, 2i+1], odd cells are the gaps between intervals.
  GridAxis extra{2.0, 2.0 * R + 1.0, 2 * R - 1};
  em.grid = Grid::make2d(K.grid.ax[0], extra);

  auto flat_node = [&](int i, int k) {
    // base axis is axis 0 of the embedded grid, extra axis is axis 1
    return em.grid.flat(k, 2 * (i - 1));
  };
  em.node_of.assign(static_cast<std::size_t>(R) * n, 0);
  for (int i = 1; i <= R; ++i)
    for (int k = 0; k < n; ++k)
      em.node_of[static_cast<std::size_t>(i - 1) * n + k] = flat_node(i, k);

  em.kernel = Kernel::zeros(em.grid, 1, K.t, K.s);
  for (int i = 1; i <= R; ++i)
    for (int x = 0; x < n; ++x)
      for (int j = 1; j <= R; ++j)
        for (int y = 0; y < n; ++y)
          em.kernel.at(1, flat_node(i, x), 1, flat_node(j, y)) = K.at(i, x, j, y);
  em.kernel.prov = K.prov;

  em.rho0 = Marginal::zeros(em.grid, 1);
  em.rhoT = Marginal::zeros(em.grid, 1);
  // base cell masses carry over; the unit extra axis leaves them unchanged
  for (int i = 1; i <= R; ++i)
    for (int k = 0; k < n; ++k) {
      em.rho0.at(1, flat_node(i, k)) = rho0.at(i, k);
      em.rhoT.at(1, flat_node(i, k)) = rhoT.at(i, k);
    }
  for (const auto& dd : rho0.diracs)
    em.rho0.diracs.push_back({1, flat_node(dd.regime, dd.node), dd.m});
  return em;
}

}  // namespace rsb
