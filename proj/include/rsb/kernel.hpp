#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rsb/expr.hpp"
#include "rsb/grid.hpp"
#include "rsb/model.hpp"

namespace rsb {

// Transition density p_ij(t, x, s, y) discretized on grid x regime pairs.
// values[(i,x),(j,y)] is a density in y (per unit volume). Rows carry a
// recorded leak mass (mass that escaped the grid); leaked mass is reported,
// never renormalized away.
struct Kernel {
  enum class Provenance : std::uint8_t { analytic = 0, monte_carlo = 1, composed = 2 };

  Grid grid;
  int regimes = 1;
  double t = 0, s = 1;
  std::vector<double> values;  // [(R*N) x (R*N)] row-major
  Provenance prov = Provenance::analytic;
  std::int64_t mc_paths = 0;
  double bandwidth = 0;
  std::vector<double> leak;  // per start row (R*N)
  bool leak_warning = false;

  int rows() const { return regimes * grid.size(); }
  int row_index(int i, int x) const { return (i - 1) * grid.size() + x; }

  double& at(int i, int x, int j, int y) {
    return values[static_cast<std::size_t>(row_index(i, x)) * rows() + row_index(j, y)];
  }
  double at(int i, int x, int j, int y) const {
    return values[static_cast<std::size_t>(row_index(i, x)) * rows() + row_index(j, y)];
  }

  static Kernel zeros(const Grid& g, int R, double t, double s) {
    Kernel k;
    k.grid = g;
    k.regimes = R;
    k.t = t;
    k.s = s;
    std::size_t n = static_cast<std::size_t>(R) * g.size();
    k.values.assign(n * n, 0.0);
    k.leak.assign(n, 0.0);
    return k;
  }

  // Quadrature mass of row (i,x): sum over (j,y) of p * cell volume.
  double row_mass(int i, int x) const;
  // Records 1 - row_mass as leak for analytic kernels (tail truncation).
  void record_truncation_leak();

  std::uint64_t content_hash() const;
};

// Single-regime Gaussian kernel for constant drift and diffusion:
// p(t,x,s,y) = N(y; x + b(s-t), sigma sigma^T (s-t)).
Kernel kernel_gaussian(const Grid& grid, double t, double s, const Pt& drift, const Mat& sigma);

// Scales a single-regime conservative kernel by exp(-int_t^s V(r) dr);
// V >= 0 is a function of time only.
Kernel kernel_killing(const Kernel& base, const Expr& V);

// Monte Carlo estimate: from every start node (x,i), N reference paths are
// simulated to time s and their endpoints binned into grid cells.
Kernel kernel_mc(const ModelSpec& model, const Grid& grid, double t, double s, std::int64_t paths,
                 double dt, std::uint64_t seed);

// Chapman-Kolmogorov composition (quadrature-weighted matrix product).
Kernel compose(const Kernel& k1, const Kernel& k2);

// Identity element for compose: unit mass in the cell of x, same regime.
Kernel kernel_identity(const Grid& grid, int regimes, double t);

void save_kernel(const Kernel& k, const std::string& path);
Kernel load_kernel(const std::string& path);

}  // namespace rsb
