#pragma once

#include <map>
#include <string>
#include <vector>

#include "rsb/model.hpp"
#include "rsb/usbp.hpp"

namespace rsb::testing {

inline std::vector<std::string> tx_vars(int d) {
  std::vector<std::string> v = {"t"};
  for (int k = 1; k <= d; ++k) v.push_back("x" + std::to_string(k));
  return v;
}

inline Expr ex(const std::string& src, int d = 1) { return Expr::parse(src, tx_vars(d)); }

inline Expr exz(const std::string& src, int d = 1, int ell = 1) {
  auto v = tx_vars(d);
  for (int k = 1; k <= ell; ++k) v.push_back("z" + std::to_string(k));
  return Expr::parse(src, v);
}

// single-regime diffusion dX = b dt + sigma dB
inline ModelSpec diffusion_model(const std::string& b = "0", const std::string& sigma = "1",
                                 double T = 1.0) {
  ModelSpec m;
  m.d = 1;
  m.T = T;
  m.regimes.count = 1;
  m.regimes.labels = {"a"};
  m.b = {{ex(b)}};
  m.sigma = {{ex(sigma)}};
  m.validate();
  return m;
}

// two regimes with constant switch rates (zero when empty), same diffusion in
// both regimes unless overridden
inline ModelSpec two_regime_model(const std::string& q12, const std::string& q21,
                                  const std::string& b = "0", const std::string& sigma = "1",
                                  double T = 1.0) {
  ModelSpec m;
  m.d = 1;
  m.T = T;
  m.regimes.count = 2;
  m.regimes.labels = {"a", "b"};
  m.b = {{ex(b)}, {ex(b)}};
  m.sigma = {{ex(sigma)}, {ex(sigma)}};
  m.Q.resize(4);
  if (!q12.empty()) m.Q[1] = ex(q12);
  if (!q21.empty()) m.Q[2] = ex(q21);
  m.validate();
  return m;
}

// adds grid-aligned constant-shift jump atoms gamma(z) = z
inline void add_jumps(ModelSpec& m, const std::vector<std::pair<double, double>>& atoms,
                      bool compensate = false) {
  m.nu.ell = 1;
  for (auto [z, w] : atoms) m.nu.atoms.push_back({Pt{z}, w});
  m.nu.compensate_small = compensate;
  m.gamma.clear();
  m.gamma.resize(static_cast<std::size_t>(m.nregimes()));
  for (int i = 0; i < m.nregimes(); ++i) m.gamma[static_cast<std::size_t>(i)] = {exz("z1")};
  m.validate();
}

// standard killing fixture of the acceptance suite: Brownian active regime,
// constant killing rate, Dirac start at 0
inline KillingModel killing_model(const std::string& v_src = "0.5", double T = 1.0) {
  KillingModel km;
  km.base = diffusion_model("0", "1", T);
  km.V_source = v_src;
  km.V = Expr::parse(v_src, {"t"});
  km.x0 = Pt{0.0};
  km.T = T;
  km.validate();
  return km;
}

// compactly supported C-infinity mollifier bumps for target densities
inline std::vector<double> bump_shape(const Grid& g, double lo, double hi) {
  std::vector<double> out(static_cast<std::size_t>(g.size()), 0.0);
  const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
  for (int k = 0; k < g.size(); ++k) {
    double x = g.point(k)[0];
    if (x <= lo || x >= hi) continue;
    double u = (x - mid) / half;
    out[static_cast<std::size_t>(k)] = std::exp(1.0 - 1.0 / (1.0 - u * u));
  }
  return out;
}

}  // namespace rsb::testing
