#include "rsb/potentials.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

#include "rsb/interp.hpp"
#include "rsb/threads.hpp"

namespace rsb {

namespace {

// out(i,x) = sum_j sum_y p_ij(t,x,s,y) w g(j,y)
std::vector<double> kernel_backward(const Kernel& K, const std::vector<double>& g) {
  const int n = K.rows();
  const double w = K.grid.cell_weight();
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  parallel_for(n, [&](int r) {
    const double* row = K.values.data() + static_cast<std::size_t>(r) * n;
    double s = 0;
    for (int c = 0; c < n; ++c) s += row[c] * g[static_cast<std::size_t>(c)];
    out[static_cast<std::size_t>(r)] = s * w;
  });
  return out;
}

// out(j,y) = sum_i sum_x v(i,x) w p_ij(t,x,s,y)
std::vector<double> kernel_forward_values(const Kernel& K, const std::vector<double>& v) {
  const int n = K.rows();
  const double w = K.grid.cell_weight();
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (int r = 0; r < n; ++r) {
    double vr = v[static_cast<std::size_t>(r)] * w;
    if (vr == 0.0) continue;
    const double* row = K.values.data() + static_cast<std::size_t>(r) * n;
    for (int c = 0; c < n; ++c) out[static_cast<std::size_t>(c)] += vr * row[c];
  }
  return out;
}

// out(j,y) = sum over measure entries mass(i,x) p_ij(t,x,s,y)
std::vector<double> kernel_forward_measure(const Kernel& K, const Marginal& mu) {
  const int n = K.rows();
  const int N = K.grid.size();
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  auto add_row = [&](int regime, int node, double mass) {
    if (mass == 0.0) return;
    int r = K.row_index(regime, node);
    const double* row = K.values.data() + static_cast<std::size_t>(r) * n;
    for (int c = 0; c < n; ++c) out[static_cast<std::size_t>(c)] += mass * row[c];
  };
  for (const auto& dd : mu.diracs) add_row(dd.regime, dd.node, dd.m);
  for (int i = 1; i <= mu.regimes; ++i)
    for (int x = 0; x < N; ++x) add_row(i, x, mu.at(i, x));
  return out;
}

enum class KernelLayout { chain, direct };

KernelLayout detect_layout(const std::vector<Kernel>& ks, bool backward) {
  if (ks.empty()) throw ConfigError("potential propagation needs at least one kernel");
  const double tol = 1e-9;
  bool chain = true;
  for (std::size_t m = 0; m + 1 < ks.size(); ++m)
    if (std::abs(ks[m].s - ks[m + 1].t) > tol) chain = false;
  if (ks.size() == 1) return KernelLayout::chain;  // single hop: both readings agree
  if (chain) return KernelLayout::chain;
  bool direct = true;
  if (backward) {
    for (std::size_t m = 0; m + 1 < ks.size(); ++m) {
      if (std::abs(ks[m].s - ks.back().s) > tol) direct = false;
      if (!(ks[m].t < ks[m + 1].t)) direct = false;
    }
  } else {
    for (std::size_t m = 0; m + 1 < ks.size(); ++m) {
      if (std::abs(ks[m].t - ks.front().t) > tol) direct = false;
      if (!(ks[m].s < ks[m + 1].s)) direct = false;
    }
  }
  if (!direct)
    throw ConfigError("kernel list is neither a chain nor a set of direct hops (missing kernel "
                      "for a slice?)");
  return KernelLayout::direct;
}

void check_same_geometry(const std::vector<Kernel>& ks) {
  for (std::size_t m = 1; m < ks.size(); ++m)
    if (!ks[m].grid.same_as(ks[0].grid) || ks[m].regimes != ks[0].regimes)
      throw ConfigError("kernel list mixes grids or regime counts");
}

}  // namespace

PotentialField propagate_phi(const std::vector<double>& g_at_T,
                             const std::vector<Kernel>& kernels) {
  check_same_geometry(kernels);
  const auto layout = detect_layout(kernels, /*backward=*/true);
  const int M = static_cast<int>(kernels.size());

  PotentialField phi;
  phi.grid = kernels[0].grid;
  phi.regimes = kernels[0].regimes;
  phi.kind = PotentialField::Kind::phi;
  if (g_at_T.size() != static_cast<std::size_t>(phi.regimes) * phi.grid.size())
    throw ConfigError("propagate_phi: boundary field has wrong size");
  for (double v : g_at_T)
    if (v < 0) throw ConfigError("propagate_phi: ghat must be nonnegative");

  phi.times.resize(static_cast<std::size_t>(M) + 1);
  phi.slices.resize(static_cast<std::size_t>(M) + 1);
  if (layout == KernelLayout::chain) {
    for (int m = 0; m < M; ++m) phi.times[static_cast<std::size_t>(m)] = kernels[m].t;
    phi.times[static_cast<std::size_t>(M)] = kernels[M - 1].s;
    phi.slices[static_cast<std::size_t>(M)] = g_at_T;
    for (int m = M - 1; m >= 0; --m)
      phi.slices[static_cast<std::size_t>(m)] =
          kernel_backward(kernels[m], phi.slices[static_cast<std::size_t>(m) + 1]);
  } else {
    for (int m = 0; m < M; ++m) phi.times[static_cast<std::size_t>(m)] = kernels[m].t;
    phi.times[static_cast<std::size_t>(M)] = kernels[M - 1].s;
    phi.slices[static_cast<std::size_t>(M)] = g_at_T;
    for (int m = 0; m < M; ++m)
      phi.slices[static_cast<std::size_t>(m)] = kernel_backward(kernels[m], g_at_T);
  }
  return phi;
}

PotentialField propagate_phihat(const Marginal& fhat_R0, const std::vector<Kernel>& kernels) {
  check_same_geometry(kernels);
  if (!kernels[0].grid.same_as(fhat_R0.grid) || kernels[0].regimes != fhat_R0.regimes)
    throw ConfigError("propagate_phihat: start measure geometry mismatch");
  const auto layout = detect_layout(kernels, /*backward=*/false);
  const int M = static_cast<int>(kernels.size());
  const double w = fhat_R0.grid.cell_weight();

  PotentialField ph;
  ph.grid = kernels[0].grid;
  ph.regimes = kernels[0].regimes;
  ph.kind = PotentialField::Kind::phihat;
  ph.slice0_measure = fhat_R0;
  ph.times.resize(static_cast<std::size_t>(M) + 1);
  ph.slices.resize(static_cast<std::size_t>(M) + 1);
  ph.times[0] = kernels[0].t;

  // slice 0 stores the measure; the value view is its density on cells
  std::vector<double>& s0 = ph.slices[0];
  s0.assign(static_cast<std::size_t>(ph.regimes) * ph.grid.size(), 0.0);
  for (int i = 1; i <= ph.regimes; ++i)
    for (int x = 0; x < ph.grid.size(); ++x)
      s0[static_cast<std::size_t>(i - 1) * ph.grid.size() + x] = fhat_R0.at(i, x) / w;

  if (layout == KernelLayout::chain) {
    for (int m = 0; m < M; ++m) ph.times[static_cast<std::size_t>(m) + 1] = kernels[m].s;
    ph.slices[1] = kernel_forward_measure(kernels[0], fhat_R0);
    for (int m = 1; m < M; ++m)
      ph.slices[static_cast<std::size_t>(m) + 1] =
          kernel_forward_values(kernels[m], ph.slices[static_cast<std::size_t>(m)]);
  } else {
    for (int m = 0; m < M; ++m) ph.times[static_cast<std::size_t>(m) + 1] = kernels[m].s;
    for (int m = 0; m < M; ++m)
      ph.slices[static_cast<std::size_t>(m) + 1] = kernel_forward_measure(kernels[m], fhat_R0);
  }
  return ph;
}

Kernel bridge_kernel(const PotentialField& phi, const Kernel& K) {
  int mt = phi.slice_at(K.t), ms = phi.slice_at(K.s);
  if (mt < 0 || ms < 0) throw ConfigError("bridge_kernel: phi has no slice at the kernel times");
  if (!phi.grid.same_as(K.grid) || phi.regimes != K.regimes)
    throw ConfigError("bridge_kernel: geometry mismatch");
  Kernel out = K;
  const int N = K.grid.size();
  for (int i = 1; i <= K.regimes; ++i)
    for (int x = 0; x < N; ++x) {
      double ptx = phi.value(mt, i, x);
      for (int j = 1; j <= K.regimes; ++j)
        for (int y = 0; y < N; ++y) {
          if (ptx > 0)
            out.at(i, x, j, y) = phi.value(ms, j, y) / ptx * K.at(i, x, j, y);
          else
            out.at(i, x, j, y) = 0.0;  // trivial otherwise
        }
    }
  return out;
}

Marginal bridge_marginal(const PotentialField& phi, const PotentialField& phihat, double t) {
  int mp = phi.slice_at(t), mh = phihat.slice_at(t);
  if (mp < 0 || mh < 0) throw ConfigError("bridge_marginal: no slice at requested time");
  if (!phi.grid.same_as(phihat.grid) || phi.regimes != phihat.regimes)
    throw ConfigError("bridge_marginal: field geometry mismatch");

  Marginal out = Marginal::zeros(phi.grid, phi.regimes);
  if (mh == 0 && phihat.slice0_measure && !phihat.slice0_measure->diracs.empty()) {
    const Marginal& mu = *phihat.slice0_measure;
    out = Marginal::zeros(phi.grid, phi.regimes);
    for (const auto& dd : mu.diracs)
      out.diracs.push_back({dd.regime, dd.node, phi.value(mp, dd.regime, dd.node) * dd.m});
    for (int i = 1; i <= phi.regimes; ++i)
      for (int x = 0; x < phi.grid.size(); ++x)
        out.at(i, x) = phi.value(mp, i, x) * mu.at(i, x);
    return out;
  }
  const double w = phi.grid.cell_weight();
  for (int i = 1; i <= phi.regimes; ++i)
    for (int x = 0; x < phi.grid.size(); ++x)
      out.at(i, x) = phi.value(mp, i, x) * phihat.value(mh, i, x) * w;
  return out;
}

namespace {

struct ControlTables {
  Grid grid;
  int regimes = 1, d = 1, natoms = 0;
  std::vector<double> times;
  // tables parallel to PotentialField slices
  std::vector<std::vector<double>> phi;       // [(i-1)*N + k]
  std::vector<std::vector<double>> u;         // [((i-1)*N + k)*d + dim]
  std::vector<std::vector<double>> jmult;     // [((i-1)*N + k)*natoms + a]
  std::vector<std::vector<double>> smult;     // [((i-1)*N + k)*R + (j-1)]
  std::vector<std::vector<double>> grad_logphi;  // [((i-1)*N + k)*d + dim]
  double t_clamp_hi = std::numeric_limits<double>::infinity();

  double clamp_time(double t) const {
    double lo = times.front(), hi = std::min(times.back(), t_clamp_hi);
    return std::min(std::max(t, lo), hi);
  }
  // bracketing slices and linear weight
  void bracket(double t, int& m0, int& m1, double& a) const {
    double tc = clamp_time(t);
    auto it = std::upper_bound(times.begin(), times.end(), tc);
    int hi = static_cast<int>(it - times.begin());
    if (hi <= 0) {
      m0 = m1 = 0;
      a = 0;
      return;
    }
    if (hi >= static_cast<int>(times.size())) {
      m0 = m1 = static_cast<int>(times.size()) - 1;
      a = 0;
      return;
    }
    m0 = hi - 1;
    m1 = hi;
    double span = times[static_cast<std::size_t>(m1)] - times[static_cast<std::size_t>(m0)];
    a = span > 0 ? (tc - times[static_cast<std::size_t>(m0)]) / span : 0.0;
  }

  double interp(const std::vector<std::vector<double>>& tab, int stride, int offset, double t,
                const Pt& x, int regime) const {
    int m0, m1;
    double a;
    bracket(t, m0, m1, a);
    const int N = grid.size();
    auto slice_val = [&](int m) {
      // gather the per-node channel into a stencil evaluation
      const std::vector<double>& tv = tab[static_cast<std::size_t>(m)];
      // multilinear interpolation over nodes of this regime/channel
      if (grid.d == 1) {
        int i0;
        double s;
        detail::linear_stencil(grid.ax[0], x[0], i0, s);
        auto at = [&](int k) {
          return tv[(static_cast<std::size_t>(regime - 1) * N + k) * stride + offset];
        };
        return (1 - s) * at(i0) + s * at(i0 + 1);
      }
      int i0, j0;
      double si, sj;
      detail::linear_stencil(grid.ax[0], x[0], i0, si);
      detail::linear_stencil(grid.ax[1], x[1], j0, sj);
      auto at = [&](int ia, int jb) {
        return tv[(static_cast<std::size_t>(regime - 1) * N + grid.flat(ia, jb)) * stride +
                  offset];
      };
      return (1 - si) * ((1 - sj) * at(i0, j0) + sj * at(i0, j0 + 1)) +
             si * ((1 - sj) * at(i0 + 1, j0) + sj * at(i0 + 1, j0 + 1));
    };
    double v0 = slice_val(m0);
    if (m1 == m0 || a == 0) return v0;
    return (1 - a) * v0 + a * slice_val(m1);
  }
};

// second-order gradient of log phi with one-sided stencils at grid edges;
// returns false if any stencil value is nonpositive
bool grad_log_axis(const Grid& g, const double* f, int node, int axis, double& out) {
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

std::shared_ptr<ControlTables> build_tables(const PotentialField& phi, const ModelSpec& model,
                                            bool strict) {
  if (phi.kind != PotentialField::Kind::phi)
    throw ConfigError("optimal_controls expects a backward potential field");
  if (!phi.grid.same_as(phi.grid)) throw ConfigError("unreachable");
  if (phi.regimes != model.nregimes() || phi.grid.d != model.d)
    throw ConfigError("optimal_controls: field/model geometry mismatch");

  auto tabs = std::make_shared<ControlTables>();
  tabs->grid = phi.grid;
  tabs->regimes = phi.regimes;
  tabs->d = model.d;
  tabs->natoms = static_cast<int>(model.nu.atoms.size());
  tabs->times = phi.times;

  const int N = phi.grid.size();
  const int R = phi.regimes;
  const int d = model.d;
  const int natoms = tabs->natoms;
  const int M = phi.nslices();
  std::vector<std::string> zero_nodes;

  tabs->phi.resize(static_cast<std::size_t>(M));
  tabs->u.resize(static_cast<std::size_t>(M));
  tabs->jmult.resize(static_cast<std::size_t>(M));
  tabs->smult.resize(static_cast<std::size_t>(M));
  tabs->grad_logphi.resize(static_cast<std::size_t>(M));

  for (int m = 0; m < M; ++m) {
    const double t = phi.times[static_cast<std::size_t>(m)];
    const auto& pv = phi.slices[static_cast<std::size_t>(m)];
    tabs->phi[static_cast<std::size_t>(m)] = pv;
    auto& ut = tabs->u[static_cast<std::size_t>(m)];
    auto& jt = tabs->jmult[static_cast<std::size_t>(m)];
    auto& st = tabs->smult[static_cast<std::size_t>(m)];
    auto& gt = tabs->grad_logphi[static_cast<std::size_t>(m)];
    ut.assign(static_cast<std::size_t>(R) * N * d, 0.0);
    jt.assign(static_cast<std::size_t>(R) * N * std::max(natoms, 1), 1.0);
    st.assign(static_cast<std::size_t>(R) * N * R, 1.0);
    gt.assign(static_cast<std::size_t>(R) * N * d, 0.0);

    for (int i = 1; i <= R; ++i) {
      const double* f = pv.data() + static_cast<std::size_t>(i - 1) * N;
      std::span<const double> fspan(f, static_cast<std::size_t>(N));
      for (int k = 0; k < N; ++k) {
        const Pt x = phi.grid.point(k);
        double fx = f[k];
        std::size_t base = static_cast<std::size_t>(i - 1) * N + k;
        if (!(fx > 0)) {
          if (strict && m < M - 1) {
            std::ostringstream os;
            os << "(t=" << t << ", node=" << k << ", regime=" << i << ")";
            zero_nodes.push_back(os.str());
          }
          continue;  // identity controls on the zero set
        }
        // u* = -sigma^T grad log phi when the stencil stays positive
        Pt g(d);
        bool ok = true;
        for (int a = 0; a < d; ++a) ok = ok && grad_log_axis(phi.grid, f, k, a, g[a]);
        if (ok) {
          Mat sg = model.sigma_at(t, x, i);
          Pt u = sg.transposed().mul(g);
          for (int a = 0; a < d; ++a) {
            ut[base * d + a] = -u[a];
            gt[base * d + a] = g[a];
          }
        } else if (strict && m < M - 1) {
          std::ostringstream os;
          os << "(t=" << t << ", node=" << k << ", regime=" << i << ", stencil)";
          zero_nodes.push_back(os.str());
        }
        for (int a = 0; a < natoms; ++a) {
          Pt xz = x + model.gamma_at(t, x, i, model.nu.atoms[static_cast<std::size_t>(a)].z);
          double fz = interp_linear(phi.grid, fspan, xz);
          jt[base * natoms + a] = std::max(fz, 0.0) / fx;
        }
        for (int j = 1; j <= R; ++j) {
          if (j == i) continue;
          Pt xp = model.psi_at(t, x, i, j);
          const double* fj = pv.data() + static_cast<std::size_t>(j - 1) * N;
          double fp = interp_linear(phi.grid, std::span<const double>(fj, static_cast<std::size_t>(N)), xp);
          st[base * R + (j - 1)] = std::max(fp, 0.0) / fx;
        }
      }
    }
  }

  if (strict && !zero_nodes.empty()) {
    std::string msg = "optimal_controls: phi vanishes at interior nodes:";
    for (std::size_t k = 0; k < std::min<std::size_t>(zero_nodes.size(), 8); ++k)
      msg += " " + zero_nodes[k];
    if (zero_nodes.size() > 8) msg += " ... (" + std::to_string(zero_nodes.size()) + " nodes)";
    throw NumericError(msg);
  }
  return tabs;
}

ControlTriple controls_from_tables(std::shared_ptr<ControlTables> tabs) {
  ControlTriple c;
  const int d = tabs->d;
  const int natoms = std::max(tabs->natoms, 1);
  const int R = tabs->regimes;
  c.u = [tabs, d](double t, const Pt& x, int i) {
    // visiting a state with vanishing phi before the horizon is a bridge
    // domain error; the rejection sampler relies on this signal
    double fx = tabs->interp(tabs->phi, 1, 0, t, x, i);
    if (!(fx > 0))
      throw NumericError("bridge domain error: phi <= 0 at visited state (regime " +
                         std::to_string(i) + ")");
    Pt out(d);
    for (int a = 0; a < d; ++a) out[a] = tabs->interp(tabs->u, d, a, t, x, i);
    return out;
  };
  c.theta = [tabs, natoms](double t, const Pt& x, int i, int atom) {
    double mult = tabs->interp(tabs->jmult, natoms, atom, t, x, i);
    return 1.0 - std::max(mult, 0.0);
  };
  c.xi = [tabs, R](double t, const Pt& x, int i, int j) {
    if (i == j) return 1.0;
    double mult = tabs->interp(tabs->smult, R, j - 1, t, x, i);
    return std::max(mult, 0.0);
  };
  return c;
}

}  // namespace

ControlTriple optimal_controls(const PotentialField& phi, const ModelSpec& model, bool strict) {
  return controls_from_tables(build_tables(phi, model, strict));
}

BridgeCoefficients bridge_coefficients(const PotentialField& phi, const ModelSpec& model,
                                       bool strict) {
  auto tabs = build_tables(phi, model, strict);
  BridgeCoefficients bc;
  bc.grid = phi.grid;
  bc.regimes = phi.regimes;
  bc.times = phi.times;
  bc.d = model.d;
  bc.natoms = tabs->natoms;

  const int N = phi.grid.size();
  const int R = phi.regimes;
  const int d = model.d;
  const int natoms = tabs->natoms;
  const int M = phi.nslices();

  bc.drift.resize(static_cast<std::size_t>(M));
  bc.jump_mult = tabs->jmult;
  bc.switch_mult = tabs->smult;

  double max_err = 0;
  for (int m = 0; m < M; ++m) {
    const double t = phi.times[static_cast<std::size_t>(m)];
    auto& dt_ = bc.drift[static_cast<std::size_t>(m)];
    dt_.assign(static_cast<std::size_t>(R) * N * d, 0.0);
    for (int i = 1; i <= R; ++i)
      for (int k = 0; k < N; ++k) {
        const Pt x = phi.grid.point(k);
        std::size_t base = static_cast<std::size_t>(i - 1) * N + k;
        Pt b = model.drift(t, x, i);
        Mat aa = model.diffusion_aa(t, x, i);
        Pt g(d);
        for (int a = 0; a < d; ++a) g[a] = tabs->grad_logphi[static_cast<std::size_t>(m)][base * d + a];
        Pt bphi = b + aa.mul(g);
        // jump correction: sum over |z| <= 1 of (mult - 1) gamma nu_w
        for (int a = 0; a < natoms; ++a) {
          const auto& atom = model.nu.atoms[static_cast<std::size_t>(a)];
          if (atom.z.norm() <= JumpMeasure::kSmallJumpRadius) {
            double mult = tabs->jmult[static_cast<std::size_t>(m)][base * natoms + a];
            bphi += (mult - 1.0) * atom.weight * model.gamma_at(t, x, i, atom.z);
          }
        }
        for (int a = 0; a < d; ++a) dt_[base * d + a] = bphi[a];

        // consistency with the control-triple route:
        // b - sigma u* - sum_{|z|<=1} theta* gamma nu
        Mat sg = model.sigma_at(t, x, i);
        Pt u(d);
        for (int a = 0; a < d; ++a) u[a] = tabs->u[static_cast<std::size_t>(m)][base * d + a];
        Pt alt = b - sg.mul(u);
        for (int a = 0; a < natoms; ++a) {
          const auto& atom = model.nu.atoms[static_cast<std::size_t>(a)];
          if (atom.z.norm() <= JumpMeasure::kSmallJumpRadius) {
            double th = 1.0 - tabs->jmult[static_cast<std::size_t>(m)][base * natoms + a];
            alt -= th * atom.weight * model.gamma_at(t, x, i, atom.z);
          }
        }
        for (int a = 0; a < d; ++a) max_err = std::max(max_err, std::abs(alt[a] - bphi[a]));
      }
  }
  bc.max_consistency_error = max_err;
  if (max_err > 1e-10)
    throw NumericError("bridge_coefficients: drift assembly inconsistency " + format_g17(max_err));
  return bc;
}

BridgeSampler::BridgeSampler(const ModelSpec& model, const PotentialField& phi, Marginal rho0,
                             double dt, int clamp_steps, bool strict)
    : model_(model), rho0_(std::move(rho0)), dt_(dt) {
  auto tabs = build_tables(phi, model, strict);
  tabs->t_clamp_hi = model.T - clamp_steps * dt;
  controls_ = controls_from_tables(std::move(tabs));
}

SamplePath BridgeSampler::sample(RngStream& rng) const {
  auto start = sample_start(rho0_, 0.0, rng);
  return simulate_controlled(model_, controls_, start.t, start.x, start.regime, dt_, rng);
}

BridgeSampler::Batch BridgeSampler::sample_batch(std::uint64_t seed, int n_paths,
                                                 bool keep_paths) const {
  Batch batch;
  if (keep_paths) batch.paths.reserve(static_cast<std::size_t>(n_paths));
  std::uint64_t stream = 0;
  for (int p = 0; p < n_paths; ++p) {
    for (;;) {
      RngStream rng(seed, stream++);
      try {
        SamplePath path = sample(rng);
        if (keep_paths) batch.paths.push_back(std::move(path));
        break;
      } catch (const NumericError&) {
        ++batch.rejected;
        if (batch.rejected > 100 * static_cast<long>(n_paths) + 1000)
          throw NumericError("bridge sampling: rejection rate too high");
      }
    }
  }
  return batch;
}

SamplePath simulate_bridge(const ModelSpec& model, const PotentialField& phi,
                           const Marginal& rho0, double dt, RngStream& rng) {
  BridgeSampler sampler(model, phi, rho0, dt, /*clamp_steps=*/2, /*strict=*/false);
  return sampler.sample(rng);
}

}  // namespace rsb
