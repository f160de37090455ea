#pragma once

#include <span>

#include "rsb/grid.hpp"

namespace rsb {

// Interpolation of a nodal field (one regime, size grid.size()) at a point.
// Points outside the grid box are clamped to the boundary unless noted.

namespace detail {

inline double axis_coord(const GridAxis& a, double x) {
  // node-centered coordinate: u = 0 at the first node
  return (x - a.lo) / a.h() - 0.5;
}

inline void linear_stencil(const GridAxis& a, double x, int& i0, double& frac) {
  double u = axis_coord(a, x);
  if (u <= 0) {
    i0 = 0;
    frac = 0;
    return;
  }
  if (u >= a.n - 1) {
    i0 = a.n - 2;
    frac = 1;
    return;
  }
  i0 = static_cast<int>(u);
  frac = u - i0;
}

// 4-point Lagrange weights at offset s in [0,1] between nodes 1 and 2
inline void cubic_weights(double s, double w[4]) {
  w[0] = -s * (s - 1) * (s - 2) / 6.0;
  w[1] = (s + 1) * (s - 1) * (s - 2) / 2.0;
  w[2] = -(s + 1) * s * (s - 2) / 2.0;
  w[3] = (s + 1) * s * (s - 1) / 6.0;
}

}  // namespace detail

inline double interp_linear(const Grid& g, std::span<const double> f, const Pt& x) {
  if (g.d == 1) {
    int i0;
    double s;
    detail::linear_stencil(g.ax[0], x[0], i0, s);
    return (1 - s) * f[static_cast<std::size_t>(i0)] + s * f[static_cast<std::size_t>(i0 + 1)];
  }
  int i0, j0;
  double si, sj;
  detail::linear_stencil(g.ax[0], x[0], i0, si);
  detail::linear_stencil(g.ax[1], x[1], j0, sj);
  auto v = [&](int a, int b) { return f[static_cast<std::size_t>(g.flat(a, b))]; };
  return (1 - si) * ((1 - sj) * v(i0, j0) + sj * v(i0, j0 + 1)) +
         si * ((1 - sj) * v(i0 + 1, j0) + sj * v(i0 + 1, j0 + 1));
}

// Cubic on the interior, linear within one cell of the edge. Returns false if
// x lies outside the grid box (value untouched).
inline bool interp_cubic(const Grid& g, std::span<const double> f, const Pt& x, double& out) {
  for (int a = 0; a < g.d; ++a)
    if (x[a] < g.ax[a].lo || x[a] > g.ax[a].hi) return false;

  if (g.d == 1) {
    double u = detail::axis_coord(g.ax[0], x[0]);
    if (u < 1 || u > g.ax[0].n - 2) {
      out = interp_linear(g, f, x);
      return true;
    }
    int i1 = static_cast<int>(u);
    double s = u - i1;
    double w[4];
    detail::cubic_weights(s, w);
    out = 0;
    for (int k = 0; k < 4; ++k) out += w[k] * f[static_cast<std::size_t>(i1 - 1 + k)];
    return true;
  }

  double u = detail::axis_coord(g.ax[0], x[0]);
  double v = detail::axis_coord(g.ax[1], x[1]);
  if (u < 1 || u > g.ax[0].n - 2 || v < 1 || v > g.ax[1].n - 2) {
    out = interp_linear(g, f, x);
    return true;
  }
  int i1 = static_cast<int>(u), j1 = static_cast<int>(v);
  double su = u - i1, sv = v - j1;
  double wu[4], wv[4];
  detail::cubic_weights(su, wu);
  detail::cubic_weights(sv, wv);
  out = 0;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      out += wu[a] * wv[b] * f[static_cast<std::size_t>(g.flat(i1 - 1 + a, j1 - 1 + b))];
  return true;
}

}  // namespace rsb
