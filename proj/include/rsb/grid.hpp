#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rsb/core.hpp"

namespace rsb {

struct GridAxis {
  double lo = 0, hi = 1;
  int n = 2;
  double h() const { return (hi - lo) / n; }
};

// Uniform cell-centered grid on a box in R^d (d = 1 or 2 at desk scale).
// Node k sits at the center of cell k; the midpoint quadrature weight of every
// node is the cell volume.
struct Grid {
  int d = 1;
  std::array<GridAxis, 2> ax{};

  static Grid make1d(double lo, double hi, int n) {
    Grid g;
    g.d = 1;
    g.ax[0] = {lo, hi, n};
    g.check();
    return g;
  }
  static Grid make2d(GridAxis a0, GridAxis a1) {
    Grid g;
    g.d = 2;
    g.ax[0] = a0;
    g.ax[1] = a1;
    g.check();
    return g;
  }
  // "lo:hi:n" or "lo:hi:n,lo:hi:n"
  static Grid parse(const std::string& spec);

  void check() const {
    if (d < 1 || d > 2) throw ConfigError("grid dimension must be 1 or 2");
    for (int a = 0; a < d; ++a) {
      if (ax[a].n < 2) throw ConfigError("grid axis needs at least 2 nodes");
      if (!(ax[a].hi > ax[a].lo)) throw ConfigError("grid axis must have hi > lo");
    }
  }

  int size() const {
    int n = ax[0].n;
    if (d == 2) n *= ax[1].n;
    return n;
  }
  double cell_weight() const {
    double w = ax[0].h();
    if (d == 2) w *= ax[1].h();
    return w;
  }
  double volume() const { return cell_weight() * size(); }

  Pt point(int k) const {
    Pt p(d);
    if (d == 1) {
      p[0] = ax[0].lo + (k + 0.5) * ax[0].h();
    } else {
      int n1 = ax[1].n;
      p[0] = ax[0].lo + (k / n1 + 0.5) * ax[0].h();
      p[1] = ax[1].lo + (k % n1 + 0.5) * ax[1].h();
    }
    return p;
  }

  // Flat index of the cell containing x, or -1 if x is off the grid.
  int locate(const Pt& x) const {
    int idx[2] = {0, 0};
    for (int a = 0; a < d; ++a) {
      double u = (x[a] - ax[a].lo) / ax[a].h();
      if (u < 0 || u >= ax[a].n) return -1;
      idx[a] = static_cast<int>(u);
    }
    return d == 1 ? idx[0] : idx[0] * ax[1].n + idx[1];
  }

  // Axis indices of flat node k.
  void coords(int k, int out[2]) const {
    if (d == 1) {
      out[0] = k;
      out[1] = 0;
    } else {
      out[0] = k / ax[1].n;
      out[1] = k % ax[1].n;
    }
  }
  int flat(int i0, int i1) const { return d == 1 ? i0 : i0 * ax[1].n + i1; }

  bool same_as(const Grid& o, double tol = 1e-12) const {
    if (d != o.d) return false;
    for (int a = 0; a < d; ++a)
      if (std::abs(ax[a].lo - o.ax[a].lo) > tol || std::abs(ax[a].hi - o.ax[a].hi) > tol ||
          ax[a].n != o.ax[a].n)
        return false;
    return true;
  }

  void hash_into(Fnv1a& h) const {
    h.add(d);
    for (int a = 0; a < d; ++a) {
      h.add(ax[a].lo);
      h.add(ax[a].hi);
      h.add(ax[a].n);
    }
  }
};

// A (sub)probability distribution on grid x regimes: cell masses plus an
// optional Dirac component pinned to a node.
struct Marginal {
  Grid grid;
  int regimes = 1;
  std::vector<double> mass;  // [(i-1)*N + node], nonnegative

  struct Dirac {
    int regime = 1;
    int node = 0;
    double m = 1.0;
  };
  std::vector<Dirac> diracs;

  static Marginal zeros(const Grid& g, int R) {
    Marginal m;
    m.grid = g;
    m.regimes = R;
    m.mass.assign(static_cast<std::size_t>(R) * g.size(), 0.0);
    return m;
  }
  static Marginal dirac(const Grid& g, int R, int regime, const Pt& x, double m = 1.0);

  double& at(int regime, int node) { return mass[static_cast<std::size_t>(regime - 1) * grid.size() + node]; }
  double at(int regime, int node) const {
    return mass[static_cast<std::size_t>(regime - 1) * grid.size() + node];
  }
  double total() const {
    double s = 0;
    for (double v : mass) s += v;
    for (const auto& dd : diracs) s += dd.m;
    return s;
  }
  // Density view of the cell masses (mass / cell volume).
  double density(int regime, int node) const { return at(regime, node) / grid.cell_weight(); }

  void validate_probability(double tol = 1e-8) const {
    for (double v : mass)
      if (v < -1e-15) throw NumericError("marginal has negative mass");
    if (std::abs(total() - 1.0) > tol)
      throw NumericError("marginal total mass " + format_g17(total()) + " != 1");
  }
};

}  // namespace rsb
