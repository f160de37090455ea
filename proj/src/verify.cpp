#include "rsb/verify.hpp"

#include <cmath>
#include <limits>

#include "rsb/interp.hpp"

namespace rsb {

namespace {

// finite-difference helpers on one regime slice (size N)
struct Fd {
  const Grid& g;
  const double* f;

  double value(int node) const { return f[node]; }

  double d1(int node, int axis) const {
    int c[2];
    g.coords(node, c);
    const double h = g.ax[axis].h();
    const int n = g.ax[axis].n;
    auto fv = [&](int shift) {
      int cc[2] = {c[0], c[1]};
      cc[axis] += shift;
      return f[g.flat(cc[0], cc[1])];
    };
    int k = c[axis];
    if (k > 0 && k < n - 1) return (fv(1) - fv(-1)) / (2 * h);
    if (k == 0) return (-3 * fv(0) + 4 * fv(1) - fv(2)) / (2 * h);
    return (3 * fv(0) - 4 * fv(-1) + fv(-2)) / (2 * h);
  }

  double d2(int node, int axis) const {
    int c[2];
    g.coords(node, c);
    const double h = g.ax[axis].h();
    const int n = g.ax[axis].n;
    auto fv = [&](int shift) {
      int cc[2] = {c[0], c[1]};
      cc[axis] += shift;
      return f[g.flat(cc[0], cc[1])];
    };
    int k = c[axis];
    if (k > 0 && k < n - 1) return (fv(1) - 2 * fv(0) + fv(-1)) / (h * h);
    if (k == 0) return (2 * fv(0) - 5 * fv(1) + 4 * fv(2) - fv(3)) / (h * h);
    return (2 * fv(0) - 5 * fv(-1) + 4 * fv(-2) - fv(-3)) / (h * h);
  }

  double dxy(int node) const {  // mixed second derivative, d = 2 only
    int c[2];
    g.coords(node, c);
    const double hx = g.ax[0].h(), hy = g.ax[1].h();
    int i = c[0], j = c[1];
    // clamp to one-sided first derivatives at edges via nested d1
    if (i == 0 || i == g.ax[0].n - 1 || j == 0 || j == g.ax[1].n - 1) {
      // fall back to nested differencing of d1 along axis 1
      Fd self{g, f};
      auto d1y = [&](int ii) {
        int node2 = g.flat(ii, j);
        return self.d1(node2, 1);
      };
      if (i > 0 && i < g.ax[0].n - 1) return (d1y(i + 1) - d1y(i - 1)) / (2 * hx);
      if (i == 0) return (-3 * d1y(0) + 4 * d1y(1) - d1y(2)) / (2 * hx);
      return (3 * d1y(i) - 4 * d1y(i - 1) + d1y(i - 2)) / (2 * hx);
    }
    return (f[g.flat(i + 1, j + 1)] - f[g.flat(i + 1, j - 1)] - f[g.flat(i - 1, j + 1)] +
            f[g.flat(i - 1, j - 1)]) /
           (4 * hx * hy);
  }
};

// Affine map m(x) = A x + c fitted by probing; affine = false when the probe
// residual exceeds tolerance.
struct AffineMap {
  Mat A;
  Pt c;
  bool affine = true;
};

AffineMap probe_affine(const std::function<Pt(const Pt&)>& map, const Grid& g) {
  const int d = g.d;
  AffineMap out;
  out.A = Mat(d, d);
  Pt center(d);
  for (int a = 0; a < d; ++a) center[a] = 0.5 * (g.ax[a].lo + g.ax[a].hi);
  Pt m0 = map(center);
  for (int a = 0; a < d; ++a) {
    Pt xa = center;
    double step = 0.25 * (g.ax[a].hi - g.ax[a].lo);
    xa[a] += step;
    Pt ma = map(xa);
    for (int r = 0; r < d; ++r) out.A(r, a) = (ma[r] - m0[r]) / step;
  }
  out.c = m0 - out.A.mul(center);
  // verify affinity at a few probe points
  double scale = 1.0;
  for (int a = 0; a < d; ++a) scale = std::max(scale, std::abs(g.ax[a].hi - g.ax[a].lo));
  const double probes[3] = {0.13, 0.57, 0.91};
  for (double s : probes) {
    Pt x(d);
    for (int a = 0; a < d; ++a) x[a] = g.ax[a].lo + s * (g.ax[a].hi - g.ax[a].lo);
    Pt pred = out.A.mul(x) + out.c;
    Pt actual = map(x);
    for (int r = 0; r < d; ++r)
      if (std::abs(pred[r] - actual[r]) > 1e-9 * scale) out.affine = false;
  }
  return out;
}

double interp_or_flag(const Grid& g, std::span<const double> f, const Pt& x, bool& ok) {
  double v = 0;
  if (!interp_cubic(g, f, x, v)) {
    ok = false;
    return 0;
  }
  return v;
}

// second-order gradient of log f along an axis; false when the stencil
// touches a nonpositive value
bool grad_log_field(const Grid& g, const double* f, int node, int axis, double& out) {
  int c[2];
  g.coords(node, c);
  const GridAxis& a = g.ax[axis];
  const double h = a.h();
  auto fv = [&](int shift) {
    int cc[2] = {c[0], c[1]};
    cc[axis] += shift;
    return f[g.flat(cc[0], cc[1])];
  };
  int k = c[axis];
  if (k > 0 && k < a.n - 1) {
    double fm = fv(-1), fp = fv(1);
    if (!(fm > 0) || !(fp > 0)) return false;
    out = (std::log(fp) - std::log(fm)) / (2 * h);
    return true;
  }
  if (k == 0) {
    double f0 = fv(0), f1 = fv(1), f2 = fv(2);
    if (!(f0 > 0) || !(f1 > 0) || !(f2 > 0)) return false;
    out = (-3 * std::log(f0) + 4 * std::log(f1) - std::log(f2)) / (2 * h);
    return true;
  }
  double f0 = fv(0), f1 = fv(-1), f2 = fv(-2);
  if (!(f0 > 0) || !(f1 > 0) || !(f2 > 0)) return false;
  out = (3 * std::log(f0) - 4 * std::log(f1) + std::log(f2)) / (2 * h);
  return true;
}

}  // namespace

std::vector<double> apply_L(std::span<const double> f, const ModelSpec& model, const Grid& grid,
                            double t, std::vector<char>* excluded) {
  const int N = grid.size();
  const int R = model.nregimes();
  const int d = model.d;
  if (f.size() != static_cast<std::size_t>(R) * N) throw ConfigError("apply_L: field size");
  std::vector<double> out(f.size(), 0.0);
  if (excluded) excluded->assign(f.size(), 0);

  for (int i = 1; i <= R; ++i) {
    const double* fi = f.data() + static_cast<std::size_t>(i - 1) * N;
    Fd fd{grid, fi};
    for (int k = 0; k < N; ++k) {
      const Pt x = grid.point(k);
      bool ok = true;
      Pt b = model.drift(t, x, i);
      Mat aa = model.diffusion_aa(t, x, i);

      double val = 0;
      Pt gradf(d);
      for (int a = 0; a < d; ++a) gradf[a] = fd.d1(k, a);
      val += dot(b, gradf);
      for (int a = 0; a < d; ++a) val += 0.5 * aa(a, a) * fd.d2(k, a);
      if (d == 2) val += aa(0, 1) * fd.dxy(k);  // a_{01} = a_{10} by symmetry

      for (const auto& atom : model.nu.atoms) {
        Pt xz = x + model.gamma_at(t, x, i, atom.z);
        double fz = interp_or_flag(grid, std::span<const double>(fi, static_cast<std::size_t>(N)),
                                   xz, ok);
        double term = fz - fi[k];
        if (model.nu.compensate_small && atom.z.norm() <= JumpMeasure::kSmallJumpRadius)
          term -= dot(model.gamma_at(t, x, i, atom.z), gradf);
        val += atom.weight * term;
      }

      for (int j = 1; j <= R; ++j) {
        if (j == i) continue;
        double q = model.switch_rate(t, x, i, j);
        if (q == 0) continue;
        Pt xp = model.psi_at(t, x, i, j);
        const double* fj = f.data() + static_cast<std::size_t>(j - 1) * N;
        double fp = interp_or_flag(grid, std::span<const double>(fj, static_cast<std::size_t>(N)),
                                   xp, ok);
        val += q * (fp - fi[k]);
      }

      out[static_cast<std::size_t>(i - 1) * N + k] = val;
      if (!ok && excluded) (*excluded)[static_cast<std::size_t>(i - 1) * N + k] = 1;
    }
  }
  return out;
}

namespace {

// shared core of L* and the bridge-tilted L*; tilt == nullptr gives plain L*.
// tilt provides phi values per regime slice for the ratio factors.
std::vector<double> lstar_impl(std::span<const double> f, const ModelSpec& model, const Grid& grid,
                               double t, const PotentialField* tilt, int tilt_slice,
                               std::vector<char>* excluded) {
  const int N = grid.size();
  const int R = model.nregimes();
  const int d = model.d;
  if (f.size() != static_cast<std::size_t>(R) * N) throw ConfigError("apply_Lstar: field size");
  std::vector<double> out(f.size(), 0.0);
  if (excluded) excluded->assign(f.size(), 0);

  auto phi_at = [&](int regime, const Pt& x, bool& ok) -> double {
    const auto& sl = tilt->slices[static_cast<std::size_t>(tilt_slice)];
    const double* p = sl.data() + static_cast<std::size_t>(regime - 1) * N;
    return interp_or_flag(grid, std::span<const double>(p, static_cast<std::size_t>(N)), x, ok);
  };
  auto phi_node = [&](int regime, int node) -> double {
    return tilt->slices[static_cast<std::size_t>(tilt_slice)]
                       [static_cast<std::size_t>(regime - 1) * N + node];
  };

  // probe jump maps per atom/regime and psi per pair once per call
  struct JumpMapData {
    AffineMap phi_map;   // x + gamma
    Mat inv;             // (I+G)^{-1}
    Pt inv_c;            // phi^{-1}(y) = inv (y - c)
    double det_inv = 1;  // |det phi^{-1} jacobian|
  };
  std::vector<JumpMapData> jmaps;  // [regime-1][atom] flattened
  const int natoms = static_cast<int>(model.nu.atoms.size());
  jmaps.resize(static_cast<std::size_t>(R) * natoms);
  for (int i = 1; i <= R; ++i)
    for (int a = 0; a < natoms; ++a) {
      const auto& atom = model.nu.atoms[static_cast<std::size_t>(a)];
      auto map = [&](const Pt& x) { return x + model.gamma_at(t, x, i, atom.z); };
      AffineMap am = probe_affine(map, grid);
      if (!am.affine)
        throw UnsupportedModelError(
            "apply_Lstar: jump amplitude is not affine in x; adjoint jump term undefined");
      JumpMapData jd;
      jd.phi_map = am;
      double dv = det(am.A);
      if (std::abs(dv) < 1e-14)
        throw UnsupportedModelError("apply_Lstar: jump map x + gamma is not invertible");
      jd.inv = inverse(am.A);
      jd.inv_c = am.c;
      jd.det_inv = std::abs(1.0 / dv);
      jmaps[static_cast<std::size_t>(i - 1) * natoms + a] = jd;
    }

  struct PsiMapData {
    bool present = false;
    AffineMap am;
    Mat inv;
    Pt c;
    double det_inv = 1;
  };
  std::vector<PsiMapData> pmaps(static_cast<std::size_t>(R) * R);
  for (int i = 1; i <= R; ++i)
    for (int j = 1; j <= R; ++j) {
      if (i == j) continue;
      auto map = [&](const Pt& x) { return model.psi_at(t, x, i, j); };
      AffineMap am = probe_affine(map, grid);
      if (!am.affine)
        throw UnsupportedModelError("apply_Lstar: psi_" + std::to_string(i) + std::to_string(j) +
                                    " is not affine in x");
      double dv = det(am.A);
      if (std::abs(dv) < 1e-14)
        throw UnsupportedModelError("apply_Lstar: psi map is not invertible");
      PsiMapData pd;
      pd.present = true;
      pd.am = am;
      pd.inv = inverse(am.A);
      pd.c = am.c;
      pd.det_inv = std::abs(1.0 / dv);
      pmaps[static_cast<std::size_t>(i - 1) * R + (j - 1)] = pd;
    }

  // node products b_m f and a_{mn} f per regime, then stencil differences;
  // under the tilt the drift is b^phi = b + a grad log phi + the compensated
  // jump correction
  for (int i = 1; i <= R; ++i) {
    const double* fi = f.data() + static_cast<std::size_t>(i - 1) * N;
    const double* phi_slice =
        tilt ? tilt->slices[static_cast<std::size_t>(tilt_slice)].data() +
                   static_cast<std::size_t>(i - 1) * N
             : nullptr;

    std::vector<double> bf(static_cast<std::size_t>(N) * d);
    std::vector<double> af(static_cast<std::size_t>(N) * d * d);
    std::vector<double> gf;  // gamma_m f r_z per atom when compensating
    if (model.nu.compensate_small) gf.resize(static_cast<std::size_t>(N) * d * std::max(natoms, 1));
    for (int k = 0; k < N; ++k) {
      const Pt x = grid.point(k);
      Pt b = model.drift(t, x, i);
      Mat aa = model.diffusion_aa(t, x, i);
      if (tilt) {
        bool have_aa = false;
        for (int a = 0; a < d * d; ++a)
          if (aa.m[static_cast<std::size_t>(a)] != 0.0) have_aa = true;
        Pt glog(d);
        bool ok_grad = true;
        for (int a = 0; a < d; ++a)
          ok_grad = ok_grad && grad_log_field(grid, phi_slice, k, a, glog[a]);
        if (ok_grad) {
          b += aa.mul(glog);
        } else if (have_aa && excluded) {
          (*excluded)[static_cast<std::size_t>(i - 1) * N + k] = 1;
        }
        for (int aIdx = 0; aIdx < natoms; ++aIdx) {
          const auto& atom = model.nu.atoms[static_cast<std::size_t>(aIdx)];
          if (!model.nu.compensate_small ||
              atom.z.norm() > JumpMeasure::kSmallJumpRadius)
            continue;
          bool okz = true;
          Pt gz = model.gamma_at(t, x, i, atom.z);
          double ph_x = phi_slice[k];
          double ph_z = phi_at(i, x + gz, okz);
          if (okz && ph_x > 0) b += (ph_z / ph_x - 1.0) * atom.weight * gz;
        }
      }
      for (int a = 0; a < d; ++a) bf[static_cast<std::size_t>(k) * d + a] = b[a] * fi[k];
      for (int a = 0; a < d; ++a)
        for (int bb = 0; bb < d; ++bb)
          af[(static_cast<std::size_t>(k) * d + a) * d + bb] = aa(a, bb) * fi[k];
      if (model.nu.compensate_small) {
        for (int aIdx = 0; aIdx < natoms; ++aIdx) {
          const auto& atom = model.nu.atoms[static_cast<std::size_t>(aIdx)];
          double rz = 1.0;
          if (tilt) {
            bool ok_r = true;
            Pt xz = x + model.gamma_at(t, x, i, atom.z);
            double ph_x = phi_node(i, k);
            double ph_z = phi_at(i, xz, ok_r);
            rz = (ok_r && ph_x > 0) ? ph_z / ph_x : 0.0;
          }
          Pt gm = model.gamma_at(t, x, i, atom.z);
          for (int a = 0; a < d; ++a)
            gf[(static_cast<std::size_t>(k) * std::max(natoms, 1) + aIdx) * d + a] =
                gm[a] * fi[k] * rz;
        }
      }
    }

    auto column = [&](const std::vector<double>& tab, int stride, int offset) {
      std::vector<double> col(static_cast<std::size_t>(N));
      for (int k = 0; k < N; ++k) col[static_cast<std::size_t>(k)] = tab[static_cast<std::size_t>(k) * stride + offset];
      return col;
    };

    // -div(b f) and 1/2 sum d2(a_{mn} f)
    std::vector<double> acc(static_cast<std::size_t>(N), 0.0);
    for (int a = 0; a < d; ++a) {
      std::vector<double> col = column(bf, d, a);
      Fd fd{grid, col.data()};
      for (int k = 0; k < N; ++k) acc[static_cast<std::size_t>(k)] -= fd.d1(k, a);
    }
    for (int a = 0; a < d; ++a)
      for (int bb = 0; bb < d; ++bb) {
        std::vector<double> col = column(af, d * d, a * d + bb);
        Fd fd{grid, col.data()};
        for (int k = 0; k < N; ++k) {
          double term;
          if (a == bb)
            term = fd.d2(k, a);
          else
            term = fd.dxy(k);
          acc[static_cast<std::size_t>(k)] += 0.5 * term;
        }
      }

    // jump adjoint
    for (int aIdx = 0; aIdx < natoms; ++aIdx) {
      const auto& atom = model.nu.atoms[static_cast<std::size_t>(aIdx)];
      const auto& jd = jmaps[static_cast<std::size_t>(i - 1) * natoms + aIdx];
      const bool small = atom.z.norm() <= JumpMeasure::kSmallJumpRadius;
      std::vector<double> div_gf(static_cast<std::size_t>(N), 0.0);
      if (model.nu.compensate_small && small) {
        for (int a = 0; a < d; ++a) {
          std::vector<double> col(static_cast<std::size_t>(N));
          for (int k = 0; k < N; ++k)
            col[static_cast<std::size_t>(k)] =
                gf[(static_cast<std::size_t>(k) * std::max(natoms, 1) + aIdx) * d + a];
          Fd fd{grid, col.data()};
          for (int k = 0; k < N; ++k) div_gf[static_cast<std::size_t>(k)] += fd.d1(k, a);
        }
      }
      for (int k = 0; k < N; ++k) {
        const Pt x = grid.point(k);
        bool ok = true;
        Pt xinv = jd.inv.mul(x - jd.inv_c);
        double finv = interp_or_flag(
            grid, std::span<const double>(fi, static_cast<std::size_t>(N)), xinv, ok);
        double term;
        if (tilt) {
          bool ok2 = true;
          double ph_x = phi_node(i, k);
          double ph_inv = phi_at(i, xinv, ok2);
          double ratio_in = (ok2 && ph_inv > 0) ? ph_x / ph_inv : 0.0;
          Pt xz = x + model.gamma_at(t, x, i, atom.z);
          double ph_z = phi_at(i, xz, ok2);
          double rz = ph_x > 0 ? ph_z / ph_x : 0.0;
          term = jd.det_inv * finv * ratio_in - fi[k] * rz;
          ok = ok && ok2;
        } else {
          term = jd.det_inv * finv - fi[k];
        }
        if (model.nu.compensate_small && small) term += div_gf[static_cast<std::size_t>(k)];
        out[static_cast<std::size_t>(i - 1) * N + k] += atom.weight * term;
        if (!ok && excluded) (*excluded)[static_cast<std::size_t>(i - 1) * N + k] = 1;
      }
    }

    for (int k = 0; k < N; ++k) out[static_cast<std::size_t>(i - 1) * N + k] += acc[static_cast<std::size_t>(k)];
  }

  // regime adjoint: sum_j |det psi_ji^{-1}| Q_ji(psi_ji^{-1} x) [ratio] f_j(psi_ji^{-1} x)
  //                 - Q_ij(x) [ratio] f_i(x)
  for (int i = 1; i <= R; ++i) {
    for (int k = 0; k < N; ++k) {
      const Pt x = grid.point(k);
      bool ok = true;
      double val = 0;
      for (int j = 1; j <= R; ++j) {
        if (j == i) continue;
        // incoming term from regime j (map psi_ji)
        const auto& pd = pmaps[static_cast<std::size_t>(j - 1) * R + (i - 1)];
        if (pd.present) {
          Pt xinv = pd.inv.mul(x - pd.c);
          double qj = model.switch_rate(t, xinv, j, i);
          if (qj != 0) {
            const double* fj = f.data() + static_cast<std::size_t>(j - 1) * N;
            double fval = interp_or_flag(
                grid, std::span<const double>(fj, static_cast<std::size_t>(N)), xinv, ok);
            double ratio = 1.0;
            if (tilt) {
              bool ok2 = true;
              double ph_i = phi_node(i, k);
              double ph_j = phi_at(j, xinv, ok2);
              ratio = (ok2 && ph_j > 0) ? ph_i / ph_j : 0.0;
            }
            val += pd.det_inv * qj * ratio * fval;
          }
        }
        // outgoing term
        double qi = model.switch_rate(t, x, i, j);
        if (qi != 0) {
          double ratio = 1.0;
          if (tilt) {
            bool ok2 = true;
            Pt xp = model.psi_at(t, x, i, j);
            double ph_i = phi_node(i, k);
            double ph_j = phi_at(j, xp, ok2);
            ratio = (ok2 && ph_i > 0) ? ph_j / ph_i : 0.0;
          }
          val -= qi * ratio * f[static_cast<std::size_t>(i - 1) * N + k];
        }
      }
      out[static_cast<std::size_t>(i - 1) * N + k] += val;
      if (!ok && excluded) (*excluded)[static_cast<std::size_t>(i - 1) * N + k] = 1;
    }
  }
  return out;
}

}  // namespace

std::vector<double> apply_Lstar(std::span<const double> f, const ModelSpec& model,
                                const Grid& grid, double t, std::vector<char>* excluded) {
  return lstar_impl(f, model, grid, t, nullptr, -1, excluded);
}

std::vector<double> apply_Lstar_bridge(std::span<const double> f, const ModelSpec& model,
                                       const PotentialField& phi, double t,
                                       std::vector<char>* excluded) {
  int m = phi.slice_at(t);
  if (m < 0) throw ConfigError("apply_Lstar_bridge: phi has no slice at t");
  return lstar_impl(f, model, phi.grid, t, &phi, m, excluded);
}

namespace {

struct WindowAccum {
  double max_resid = 0;
  double sumsq = 0;
  double wsum = 0;
  int excluded = 0;
  int evaluated = 0;

  void add(double resid, double w, bool skip) {
    if (skip) {
      ++excluded;
      return;
    }
    ++evaluated;
    max_resid = std::max(max_resid, std::abs(resid));
    sumsq += resid * resid * w;
    wsum += w;
  }
  double l2() const { return wsum > 0 ? std::sqrt(sumsq / wsum) : 0.0; }
};

bool in_margin(const Grid& g, int node, int margin) {
  int c[2];
  g.coords(node, c);
  for (int a = 0; a < g.d; ++a)
    if (c[a] < margin || c[a] > g.ax[a].n - 1 - margin) return true;
  return false;
}

template <typename OpFn>
ResidualReport residual_check(const PotentialField& field, const CheckWindow& win, bool forward,
                              const std::string& name, OpFn&& op) {
  const int M = field.nslices();
  if (M < 3) throw ConfigError(name + ": need at least 3 time slices");
  const int N = field.grid.size();
  const int R = field.regimes;
  const double span = field.times.back() - field.times.front();
  const double t_lo = field.times.front() + win.t_lo_frac * span;
  const double t_hi = field.times.front() + win.t_hi_frac * span;

  WindowAccum acc;
  const double w = field.grid.cell_weight();
  for (int m = 1; m + 1 < M; ++m) {
    double t = field.times[static_cast<std::size_t>(m)];
    if (t < t_lo - 1e-12 || t > t_hi + 1e-12) continue;
    std::vector<char> excluded;
    std::vector<double> opv = op(field.slices[static_cast<std::size_t>(m)], t, &excluded);
    double dt2 = field.times[static_cast<std::size_t>(m) + 1] -
                 field.times[static_cast<std::size_t>(m) - 1];
    for (int i = 1; i <= R; ++i)
      for (int k = 0; k < N; ++k) {
        std::size_t idx = static_cast<std::size_t>(i - 1) * N + k;
        double ddt = (field.slices[static_cast<std::size_t>(m) + 1][idx] -
                      field.slices[static_cast<std::size_t>(m) - 1][idx]) /
                     dt2;
        double resid = forward ? (ddt - opv[idx]) : (ddt + opv[idx]);
        bool skip = in_margin(field.grid, k, win.spatial_margin) ||
                    (excluded.size() > idx && excluded[idx]) || !std::isfinite(resid);
        acc.add(resid, w, skip);
      }
  }

  ResidualReport rep;
  rep.identity = name;
  rep.grid_h = field.grid.ax[0].h();
  rep.dt = M > 1 ? (field.times.back() - field.times.front()) / (M - 1) : 0;
  rep.max_resid = acc.max_resid;
  rep.l2_resid = acc.l2();
  rep.excluded_nodes = acc.excluded;
  rep.evaluated_nodes = acc.evaluated;
  return rep;
}

}  // namespace

ResidualReport check_backward(const PotentialField& phi, const ModelSpec& model,
                              const CheckWindow& win) {
  return residual_check(
      phi, win, /*forward=*/false, "backward:(d/dt + L) phi = 0",
      [&](const std::vector<double>& slice, double t, std::vector<char>* ex) {
        return apply_L(slice, model, phi.grid, t, ex);
      });
}

ResidualReport check_forward(const PotentialField& phihat, const ModelSpec& model,
                             const CheckWindow& win) {
  return residual_check(
      phihat, win, /*forward=*/true, "forward:(-d/ds + L*) phihat = 0",
      [&](const std::vector<double>& slice, double t, std::vector<char>* ex) {
        return apply_Lstar(slice, model, phihat.grid, t, ex);
      });
}

ResidualReport check_bridge_forward(const PotentialField& phi, const PotentialField& phihat,
                                    const ModelSpec& model, const CheckWindow& win) {
  if (phi.nslices() != phihat.nslices()) throw ConfigError("check_bridge_forward: slice mismatch");
  PotentialField rho = phihat;  // product density on the same slice grid
  rho.slice0_measure.reset();
  for (int m = 0; m < rho.nslices(); ++m) {
    if (std::abs(phi.times[static_cast<std::size_t>(m)] - phihat.times[static_cast<std::size_t>(m)]) > 1e-9)
      throw ConfigError("check_bridge_forward: slice times differ");
    for (std::size_t k = 0; k < rho.slices[static_cast<std::size_t>(m)].size(); ++k)
      rho.slices[static_cast<std::size_t>(m)][k] =
          phi.slices[static_cast<std::size_t>(m)][k] * phihat.slices[static_cast<std::size_t>(m)][k];
  }
  return residual_check(
      rho, win, /*forward=*/true, "bridge-forward:(d/dt) rho = L*_Phat rho",
      [&](const std::vector<double>& slice, double t, std::vector<char>* ex) {
        return apply_Lstar_bridge(slice, model, phi, t, ex);
      });
}

ResidualReport check_logphi_identity(const PotentialField& phi, const ModelSpec& model,
                                     const CheckWindow& win) {
  // residual of (d/dt + L)(log phi) - RHS with ratio terms from phi itself
  const int N = phi.grid.size();
  const int R = phi.regimes;
  PotentialField logphi = phi;
  for (auto& slice : logphi.slices)
    for (auto& v : slice) v = v > 0 ? std::log(v) : std::numeric_limits<double>::quiet_NaN();

  return residual_check(
      logphi, win, /*forward=*/false, "girsanov:-log phi identity",
      [&](const std::vector<double>& slice, double t, std::vector<char>* ex) {
        std::vector<double> lhs = apply_L(slice, model, phi.grid, t, ex);
        int m = phi.slice_at(t);
        const auto& pv = phi.slices[static_cast<std::size_t>(m)];
        for (int i = 1; i <= R; ++i) {
          const double* fi = pv.data() + static_cast<std::size_t>(i - 1) * N;
          std::span<const double> fspan(fi, static_cast<std::size_t>(N));
          for (int k = 0; k < N; ++k) {
            const Pt x = phi.grid.point(k);
            std::size_t idx = static_cast<std::size_t>(i - 1) * N + k;
            double fx = fi[k];
            if (!(fx > 0)) {
              if (ex) (*ex)[idx] = 1;
              continue;
            }
            // RHS = -1/2 |sigma^T grad log phi|^2 + jump and switch brackets
            Fd fd{phi.grid, slice.data() + static_cast<std::size_t>(i - 1) * N};
            Pt g(model.d);
            for (int a = 0; a < model.d; ++a) g[a] = fd.d1(k, a);
            Mat sg = model.sigma_at(t, x, i);
            Pt sTg = sg.transposed().mul(g);
            double rhs = -0.5 * dot(sTg, sTg);
            bool ok = true;
            for (const auto& atom : model.nu.atoms) {
              Pt xz = x + model.gamma_at(t, x, i, atom.z);
              double fz = interp_or_flag(phi.grid, fspan, xz, ok);
              double r = fz / fx;
              if (!(r > 0)) {
                ok = false;
                continue;
              }
              rhs += atom.weight * (std::log(r) - (r - 1.0));
            }
            for (int j = 1; j <= R; ++j) {
              if (j == i) continue;
              double q = model.switch_rate(t, x, i, j);
              if (q == 0) continue;
              Pt xp = model.psi_at(t, x, i, j);
              const double* fj = pv.data() + static_cast<std::size_t>(j - 1) * N;
              double fp = interp_or_flag(
                  phi.grid, std::span<const double>(fj, static_cast<std::size_t>(N)), xp, ok);
              double r = fp / fx;
              if (!(r > 0)) {
                ok = false;
                continue;
              }
              rhs += q * (std::log(r) - (r - 1.0));
            }
            lhs[idx] -= rhs;
            if (!ok && ex) (*ex)[idx] = 1;
          }
        }
        return lhs;
      });
}

double bracket(const Grid& grid, int regimes, std::span<const double> times,
               const std::vector<std::vector<double>>& f,
               const std::vector<std::vector<double>>& g) {
  if (f.size() != times.size() || g.size() != times.size())
    throw ConfigError("bracket: slice count mismatch");
  double total = 0;
  const double w = grid.cell_weight();
  for (std::size_t m = 0; m < times.size(); ++m) {
    double wt;  // time quadrature weight (trapezoid on the slice grid)
    if (times.size() == 1)
      wt = 1.0;
    else if (m == 0)
      wt = 0.5 * (times[1] - times[0]);
    else if (m + 1 == times.size())
      wt = 0.5 * (times[m] - times[m - 1]);
    else
      wt = 0.5 * (times[m + 1] - times[m - 1]);
    double s = 0;
    for (std::size_t k = 0; k < f[m].size(); ++k) s += f[m][k] * g[m][k];
    total += wt * s * w;
  }
  (void)regimes;
  return total;
}

AnalyticField analytic_product(const AnalyticField& a, const AnalyticField& b) {
  AnalyticField p;
  p.value = [a, b](double t, const Pt& x, int i) { return a.value(t, x, i) * b.value(t, x, i); };
  p.grad = [a, b](double t, const Pt& x, int i) {
    Pt ga = a.grad(t, x, i), gb = b.grad(t, x, i);
    double va = a.value(t, x, i), vb = b.value(t, x, i);
    Pt out(x.d);
    for (int k = 0; k < x.d; ++k) out[k] = ga[k] * vb + va * gb[k];
    return out;
  };
  p.hess = [a, b](double t, const Pt& x, int i) {
    Mat ha = a.hess(t, x, i), hb = b.hess(t, x, i);
    Pt ga = a.grad(t, x, i), gb = b.grad(t, x, i);
    double va = a.value(t, x, i), vb = b.value(t, x, i);
    Mat out(x.d, x.d);
    for (int m = 0; m < x.d; ++m)
      for (int n = 0; n < x.d; ++n)
        out(m, n) = ha(m, n) * vb + va * hb(m, n) + ga[m] * gb[n] + ga[n] * gb[m];
    return out;
  };
  p.dt = [a, b](double t, const Pt& x, int i) {
    return a.dt(t, x, i) * b.value(t, x, i) + a.value(t, x, i) * b.dt(t, x, i);
  };
  return p;
}

double generator_apply(const ModelSpec& model, const AnalyticField& g, double t, const Pt& x,
                       int i) {
  const int d = model.d;
  double out = g.dt(t, x, i);
  Pt grad = g.grad(t, x, i);
  Mat hess = g.hess(t, x, i);
  out += dot(model.drift(t, x, i), grad);
  Mat aa = model.diffusion_aa(t, x, i);
  for (int m = 0; m < d; ++m)
    for (int n = 0; n < d; ++n) out += 0.5 * aa(m, n) * hess(m, n);
  for (const auto& atom : model.nu.atoms) {
    Pt gz = model.gamma_at(t, x, i, atom.z);
    double term = g.value(t, x + gz, i) - g.value(t, x, i);
    if (model.nu.compensate_small && atom.z.norm() <= JumpMeasure::kSmallJumpRadius)
      term -= dot(gz, grad);
    out += atom.weight * term;
  }
  for (int j = 1; j <= model.nregimes(); ++j) {
    if (j == i) continue;
    double q = model.switch_rate(t, x, i, j);
    if (q == 0) continue;
    out += q * (g.value(t, model.psi_at(t, x, i, j), j) - g.value(t, x, i));
  }
  return out;
}

double bridge_generator_apply(const ModelSpec& model, const AnalyticField& phi,
                              const AnalyticField& f, double t, const Pt& x, int i) {
  const int d = model.d;
  double phix = phi.value(t, x, i);
  if (!(phix > 0)) throw NumericError("bridge_generator_apply: phi <= 0");
  Pt grad_logphi = phi.grad(t, x, i);
  for (int k = 0; k < d; ++k) grad_logphi[k] /= phix;

  Mat aa = model.diffusion_aa(t, x, i);
  Pt bphi = model.drift(t, x, i) + aa.mul(grad_logphi);
  for (const auto& atom : model.nu.atoms) {
    if (atom.z.norm() <= JumpMeasure::kSmallJumpRadius && model.nu.compensate_small) {
      Pt gz = model.gamma_at(t, x, i, atom.z);
      double r = phi.value(t, x + gz, i) / phix;
      bphi += (r - 1.0) * atom.weight * gz;
    }
  }

  double out = f.dt(t, x, i) + dot(bphi, f.grad(t, x, i));
  Mat hess = f.hess(t, x, i);
  for (int m = 0; m < d; ++m)
    for (int n = 0; n < d; ++n) out += 0.5 * aa(m, n) * hess(m, n);
  for (const auto& atom : model.nu.atoms) {
    Pt gz = model.gamma_at(t, x, i, atom.z);
    double r = phi.value(t, x + gz, i) / phix;
    double term = f.value(t, x + gz, i) - f.value(t, x, i);
    if (model.nu.compensate_small && atom.z.norm() <= JumpMeasure::kSmallJumpRadius)
      term -= dot(gz, f.grad(t, x, i));
    out += atom.weight * r * term;
  }
  for (int j = 1; j <= model.nregimes(); ++j) {
    if (j == i) continue;
    double q = model.switch_rate(t, x, i, j);
    if (q == 0) continue;
    Pt xp = model.psi_at(t, x, i, j);
    double r = phi.value(t, xp, j) / phix;
    out += q * r * (f.value(t, xp, j) - f.value(t, x, i));
  }
  return out;
}

double h_transform_residual(const ModelSpec& model, const AnalyticField& phi,
                            const AnalyticField& f, double t, const Pt& x, int i) {
  double lhs = bridge_generator_apply(model, phi, f, t, x, i);
  double rhs = generator_apply(model, analytic_product(phi, f), t, x, i) / phi.value(t, x, i);
  double scale = std::max({std::abs(lhs), std::abs(rhs), 1e-12});
  return std::abs(lhs - rhs) / scale;
}

}  // namespace rsb
