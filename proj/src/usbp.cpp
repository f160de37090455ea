#include "rsb/usbp.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "rsb/quadrature.hpp"
#include "rsb/simulate.hpp"
#include "rsb/threads.hpp"

namespace rsb {

double KillingModel::v_at(double t) const {
  double slot = t;
  double v = V.eval(std::span<const double>(&slot, 1));
  if (v < 0) throw NumericError("killing rate V must be nonnegative");
  return v;
}

double KillingModel::v_integral(double a, double b) const {
  return adaptive_simpson([this](double r) { return v_at(r); }, a, b, 1e-10);
}

bool KillingModel::gaussian_base() const {
  if (!base.nu.atoms.empty()) return false;
  const double probes_t[3] = {0.0, 0.37 * T, 0.91 * T};
  Pt x1(base.d), x2(base.d);
  for (int k = 0; k < base.d; ++k) {
    x1[k] = 0.3 + 0.2 * k;
    x2[k] = -1.1 + 0.7 * k;
  }
  Pt b0 = base.drift(probes_t[0], x1, 1);
  Mat s0 = base.sigma_at(probes_t[0], x1, 1);
  for (double tp : probes_t)
    for (const Pt& xp : {x1, x2}) {
      Pt bb = base.drift(tp, xp, 1);
      Mat ss = base.sigma_at(tp, xp, 1);
      for (int k = 0; k < base.d; ++k)
        if (std::abs(bb[k] - b0[k]) > 1e-12) return false;
      for (int k = 0; k < base.d * base.d; ++k)
        if (std::abs(ss.m[static_cast<std::size_t>(k)] - s0.m[static_cast<std::size_t>(k)]) >
            1e-12)
          return false;
    }
  return true;
}

Pt KillingModel::const_drift() const { return base.drift(0.0, Pt(base.d), 1); }
Mat KillingModel::const_sigma() const { return base.sigma_at(0.0, Pt(base.d), 1); }

double KillingModel::q0_density(double t, const Pt& x, double s, const Pt& y) const {
  const int d = base.d;
  const double tau = s - t;
  if (!(tau > 0)) throw NumericError("q0_density requires s > t");
  Mat sg = const_sigma();
  Mat cov = sg * sg.transposed();
  for (int k = 0; k < d * d; ++k) cov.m[static_cast<std::size_t>(k)] *= tau;
  double dv = det(cov);
  Mat prec = inverse(cov);
  Pt u = y - (x + tau * const_drift());
  double q = 0;
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) q += u[a] * prec(a, b) * u[b];
  return std::exp(-0.5 * q) / (std::pow(2.0 * M_PI, 0.5 * d) * std::sqrt(dv));
}

double KillingModel::q_density(double t, const Pt& x, double s, const Pt& y) const {
  return std::exp(-v_integral(t, s)) * q0_density(t, x, s, y);
}

double KillingModel::p12_density(double t, const Pt& x, double s, const Pt& y, double tol) const {
  if (base.d != 1)
    throw UnsupportedModelError("analytic p12 quadrature is implemented for d = 1");
  if (!(s > t)) return 0.0;
  // substitute r = t + u^2: the integrand 2 u V(t+u^2) q(t,x,t+u^2,y) is
  // bounded at u = 0 (limit 2 V(t) / sqrt(2 pi a) at y = x, 0 otherwise).
  // A subcell offset |y - x| would put an unresolvable transition at
  // u ~ |y - x|; snap it to the aligned case.
  Mat sg = const_sigma();
  const double a = (sg * sg.transposed())(0, 0);
  const double b = const_drift()[0];
  double off = y[0] - x[0];
  if (std::abs(off) < 1e-9) off = 0.0;
  auto integrand = [&](double u) {
    double tau = u * u;
    if (tau <= 0) {
      return off == 0.0 ? 2.0 * v_at(t) / std::sqrt(2.0 * M_PI * a) : 0.0;
    }
    double r = t + tau;
    double dev = off - b * tau;
    double q0v = std::exp(-0.5 * dev * dev / (a * tau)) / std::sqrt(2.0 * M_PI * a * tau);
    return 2.0 * u * v_at(r) * std::exp(-v_integral(t, r)) * q0v;
  };
  return adaptive_simpson(integrand, 0.0, std::sqrt(s - t), tol);
}

double KillingModel::p12_cell_average(double t, const Pt& x, double s, double ylo, double yhi,
                                      double tol) const {
  if (base.d != 1)
    throw UnsupportedModelError("analytic p12 quadrature is implemented for d = 1");
  if (!(s > t)) return 0.0;
  Mat sg = const_sigma();
  const double a = (sg * sg.transposed())(0, 0);
  const double b = const_drift()[0];
  const double width = yhi - ylo;
  auto cdf = [](double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); };
  auto integrand = [&](double u) {
    double tau = u * u;
    if (tau <= 0) return 0.0;  // the cell mass bracket is bounded by 1
    double r = t + tau;
    double m = x[0] + b * tau;
    double sd = std::sqrt(a * tau);
    double bracket = cdf((yhi - m) / sd) - cdf((ylo - m) / sd);
    return 2.0 * u * v_at(r) * std::exp(-v_integral(t, r)) * bracket / width;
  };
  return adaptive_simpson(integrand, 0.0, std::sqrt(s - t), tol);
}

ModelSpec KillingModel::to_model_spec() const {
  ModelSpec m;
  m.d = base.d;
  m.T = T;
  m.regimes.count = 2;
  m.regimes.labels = {"a", "d"};
  m.b.resize(2);
  m.sigma.resize(2);
  m.b[0] = base.b[0];
  m.sigma[0] = base.sigma[0];
  for (int k = 0; k < m.d; ++k) m.b[1].push_back(Expr::constant(0.0));
  for (int k = 0; k < m.d * m.d; ++k) m.sigma[1].push_back(Expr::constant(0.0));
  if (!base.gamma.empty()) {
    m.gamma.resize(2);
    m.gamma[0] = base.gamma[0];
    for (int k = 0; k < m.d; ++k) m.gamma[1].push_back(Expr::constant(0.0));
  }
  m.nu = base.nu;
  m.Q.resize(4);
  // Q_12 = V(t); V depends on t only but is parsed against the full slot set
  std::vector<std::string> vars = {"t"};
  for (int k = 1; k <= m.d; ++k) vars.push_back("x" + std::to_string(k));
  m.Q[1] = Expr::parse(V_source.empty() ? "0" : V_source, vars);
  m.validate();
  return m;
}

void KillingModel::validate() const {
  base.validate();
  if (base.nregimes() != 1) throw ConfigError("killing model base must have one regime");
  if (x0.d != base.d) throw ConfigError("killing model start dimension mismatch");
  if (T <= 0) throw ConfigError("killing model horizon must be positive");
  v_at(0.0);
  v_at(T);
}

namespace {
inline std::pair<double, double> cell_bounds(const Grid& g, int node) {
  double c = g.point(node)[0], h = g.ax[0].h();
  return {c - 0.5 * h, c + 0.5 * h};
}
}  // namespace

Marginal UsbpTarget::to_marginal(const Grid& grid) const {
  Marginal m = Marginal::zeros(grid, 2);
  const double w = grid.cell_weight();
  for (int k = 0; k < grid.size(); ++k) {
    m.at(KillingModel::kActive, k) = active_density[static_cast<std::size_t>(k)] * w;
    m.at(KillingModel::kDead, k) = dead_density[static_cast<std::size_t>(k)] * w;
  }
  return m;
}

UsbpTarget make_target(const KillingModel& km, const Grid& grid,
                       const std::vector<double>& active_shape,
                       const std::vector<double>& dead_shape, double dead_fraction) {
  if (dead_fraction < 0 || dead_fraction > 1) throw ConfigError("dead fraction must be in [0,1]");
  const int n = grid.size();
  if (static_cast<int>(active_shape.size()) != n || static_cast<int>(dead_shape.size()) != n)
    throw ConfigError("target shape size mismatch");
  UsbpTarget tg;
  tg.active_density = active_shape;
  tg.dead_density = dead_shape;
  const double w = grid.cell_weight();
  double sa = 0, sd = 0;
  for (int k = 0; k < n; ++k) {
    if (active_shape[static_cast<std::size_t>(k)] < 0 || dead_shape[static_cast<std::size_t>(k)] < 0)
      throw ConfigError("target shapes must be nonnegative");
    sa += active_shape[static_cast<std::size_t>(k)] * w;
    sd += dead_shape[static_cast<std::size_t>(k)] * w;
  }
  if (sa <= 0 && dead_fraction < 1) throw ConfigError("active target shape has no mass");
  if (sd <= 0 && dead_fraction > 0) throw ConfigError("dead target shape has no mass");
  for (int k = 0; k < n; ++k) {
    tg.active_density[static_cast<std::size_t>(k)] *= sa > 0 ? (1.0 - dead_fraction) / sa : 0.0;
    tg.dead_density[static_cast<std::size_t>(k)] *= sd > 0 ? dead_fraction / sd : 0.0;
  }
  tg.active_mass = 1.0 - dead_fraction;
  tg.dead_mass = dead_fraction;

  // load-time diagnostics: KL(rhoT | R_T) finiteness and sup ghat boundedness
  double kl = 0, supg = 0;
  for (int k = 0; k < n; ++k) {
    Pt y = grid.point(k);
    double ra = tg.active_density[static_cast<std::size_t>(k)];
    double rd = tg.dead_density[static_cast<std::size_t>(k)];
    if (ra > 0) {
      double ref = km.q_density(0, km.x0, km.T, y);
      if (ref <= 0) {
        kl = std::numeric_limits<double>::infinity();
      } else {
        kl += ra * std::log(ra / ref) * w;
        supg = std::max(supg, ra / ref);
      }
    }
    if (rd > 0) {
      auto [lo, hi] = cell_bounds(grid, k);
      double ref = km.p12_cell_average(0, km.x0, km.T, lo, hi);
      if (ref <= 0) {
        kl = std::numeric_limits<double>::infinity();
      } else {
        kl += rd * std::log(rd / ref) * w;
        supg = std::max(supg, rd / ref);
      }
    }
  }
  tg.kl_to_reference = kl;
  tg.sup_g = supg;
  return tg;
}

std::pair<Kernel, Kernel> usbp_kernels(const KillingModel& km, const Grid& grid, double t,
                                       double s) {
  if (!km.gaussian_base())
    throw UnsupportedModelError(
        "usbp_kernels: base is not in the Gaussian family; use kernel_mc on the two-regime model");
  Kernel q0 = kernel_gaussian(grid, t, s, km.const_drift(), km.const_sigma());
  Kernel p11 = kernel_killing(q0, km.V);

  Kernel p12 = Kernel::zeros(grid, 1, t, s);
  const int n = grid.size();
  parallel_for(n, [&](int xi) {
    Pt x = grid.point(xi);
    for (int yi = 0; yi < n; ++yi) {
      auto [lo, hi] = cell_bounds(grid, yi);
      p12.at(1, xi, 1, yi) = km.p12_cell_average(t, x, s, lo, hi);
    }
  });
  p12.prov = Kernel::Provenance::analytic;
  return {std::move(p11), std::move(p12)};
}

Kernel usbp_two_regime_kernel(const KillingModel& km, const Grid& grid, double t, double s) {
  auto [p11, p12] = usbp_kernels(km, grid, t, s);
  const int n = grid.size();
  Kernel k = Kernel::zeros(grid, 2, t, s);
  const double inv_w = 1.0 / grid.cell_weight();
  for (int x = 0; x < n; ++x) {
    for (int y = 0; y < n; ++y) {
      k.at(KillingModel::kActive, x, KillingModel::kActive, y) = p11.at(1, x, 1, y);
      k.at(KillingModel::kActive, x, KillingModel::kDead, y) = p12.at(1, x, 1, y);
    }
    // dead regime is frozen: unit mass stays in its cell
    k.at(KillingModel::kDead, x, KillingModel::kDead, x) = inv_w;
  }
  k.prov = Kernel::Provenance::analytic;
  k.record_truncation_leak();
  return k;
}

std::vector<double> usbp_g(const KillingModel& km, const UsbpTarget& target, const Grid& grid,
                           bool pointwise_p12) {
  const int n = grid.size();
  std::vector<double> g(static_cast<std::size_t>(2) * n, 0.0);
  std::vector<int> bad;
  for (int k = 0; k < n; ++k) {
    Pt y = grid.point(k);
    double ra = target.active_density[static_cast<std::size_t>(k)];
    if (ra > 0) {
      double denom = km.q_density(0, km.x0, km.T, y);
      if (denom <= 0)
        bad.push_back(k);
      else
        g[static_cast<std::size_t>(k)] = ra / denom;
    }
    double rd = target.dead_density[static_cast<std::size_t>(k)];
    if (rd > 0) {
      auto [lo, hi] = cell_bounds(grid, k);
      double denom = pointwise_p12 ? km.p12_density(0, km.x0, km.T, y)
                                   : km.p12_cell_average(0, km.x0, km.T, lo, hi);
      if (denom <= 0)
        bad.push_back(k);
      else
        g[static_cast<std::size_t>(n) + k] = rd / denom;
    }
  }
  if (!bad.empty()) {
    std::ostringstream os;
    os << "usbp_g: reference density vanishes on the target support at nodes";
    for (std::size_t i = 0; i < std::min<std::size_t>(bad.size(), 8); ++i) os << " " << bad[i];
    throw NumericError(os.str());
  }
  return g;
}

std::pair<PotentialField, PotentialField> usbp_potentials(const KillingModel& km,
                                                          const UsbpTarget& target,
                                                          const Grid& grid, int slices,
                                                          bool pointwise_p12) {
  if (slices < 2) throw ConfigError("usbp_potentials needs at least 2 slices");
  const int n = grid.size();
  const double w = grid.cell_weight();
  std::vector<double> g = usbp_g(km, target, grid, pointwise_p12);

  PotentialField phi;
  phi.grid = grid;
  phi.regimes = 2;
  phi.kind = PotentialField::Kind::phi;
  phi.times.resize(static_cast<std::size_t>(slices) + 1);
  phi.slices.assign(static_cast<std::size_t>(slices) + 1,
                    std::vector<double>(static_cast<std::size_t>(2) * n, 0.0));
  for (int m = 0; m <= slices; ++m)
    phi.times[static_cast<std::size_t>(m)] = km.T * m / slices;

  // phi(T,.) = ghat; phi_d is constant in time
  phi.slices[static_cast<std::size_t>(slices)] = g;
  for (int m = 0; m < slices; ++m)
    for (int k = 0; k < n; ++k)
      phi.slices[static_cast<std::size_t>(m)][static_cast<std::size_t>(n) + k] =
          g[static_cast<std::size_t>(n) + k];

  parallel_for(slices, [&](int m) {
    const double t = phi.times[static_cast<std::size_t>(m)];
    auto& slice = phi.slices[static_cast<std::size_t>(m)];
    for (int xi = 0; xi < n; ++xi) {
      Pt x = grid.point(xi);
      double acc = 0;
      for (int yi = 0; yi < n; ++yi) {
        double ga = g[static_cast<std::size_t>(yi)];
        double gd = g[static_cast<std::size_t>(n) + yi];
        if (ga > 0) acc += km.q_density(t, x, km.T, grid.point(yi)) * ga * w;
        if (gd > 0) {
          auto [lo, hi] = cell_bounds(grid, yi);
          acc += (pointwise_p12 ? km.p12_density(t, x, km.T, grid.point(yi))
                                : km.p12_cell_average(t, x, km.T, lo, hi)) *
                 gd * w;
        }
      }
      slice[static_cast<std::size_t>(xi)] = acc;
    }
  });

  PotentialField ph;
  ph.grid = grid;
  ph.regimes = 2;
  ph.kind = PotentialField::Kind::phihat;
  ph.times = phi.times;
  ph.slices.assign(static_cast<std::size_t>(slices) + 1,
                   std::vector<double>(static_cast<std::size_t>(2) * n, 0.0));
  Marginal start = Marginal::dirac(grid, 2, KillingModel::kActive, km.x0, 1.0);
  ph.slice0_measure = start;
  // density view of the Dirac start at slice 0
  ph.slices[0][static_cast<std::size_t>(start.diracs[0].node)] = 1.0 / w;

  parallel_for(slices, [&](int mm) {
    int m = mm + 1;
    const double s = ph.times[static_cast<std::size_t>(m)];
    auto& slice = ph.slices[static_cast<std::size_t>(m)];
    for (int yi = 0; yi < n; ++yi) {
      Pt y = grid.point(yi);
      auto [lo, hi] = cell_bounds(grid, yi);
      slice[static_cast<std::size_t>(yi)] = km.q_density(0, km.x0, s, y);
      slice[static_cast<std::size_t>(n) + yi] =
          pointwise_p12 ? km.p12_density(0, km.x0, s, y)
                        : km.p12_cell_average(0, km.x0, s, lo, hi);
    }
  });

  return {std::move(phi), std::move(ph)};
}

double usbp_killing_rate(const PotentialField& phi, const Expr& V, double t, const Pt& x) {
  // bracket t between slices, interpolate phi linearly in time at x
  const auto& times = phi.times;
  if (times.empty()) throw ConfigError("usbp_killing_rate: empty field");
  double tc = std::min(std::max(t, times.front()), times.back());
  std::size_t hi = 1;
  while (hi + 1 < times.size() && times[hi] < tc) ++hi;
  std::size_t lo = hi - 1;
  double a = (times[hi] > times[lo]) ? (tc - times[lo]) / (times[hi] - times[lo]) : 0.0;

  const int n = phi.grid.size();
  int node = phi.grid.locate(x);
  if (node < 0) throw NumericError("usbp_killing_rate: x off the grid");
  auto val = [&](std::size_t m, int regime) {
    return phi.slices[m][static_cast<std::size_t>(regime - 1) * n + node];
  };
  double phi_a = (1 - a) * val(lo, KillingModel::kActive) + a * val(hi, KillingModel::kActive);
  double phi_d = (1 - a) * val(lo, KillingModel::kDead) + a * val(hi, KillingModel::kDead);
  if (!(phi_a > 0)) throw NumericError("usbp_killing_rate: phi_a vanishes at (t,x)");
  double slot = t;
  return phi_d / phi_a * V.eval(std::span<const double>(&slot, 1));
}

std::pair<double, double> usbp_p12_identity(const KillingModel& km, const PotentialField& phi,
                                            double t, const Pt& x, double s, const Pt& y) {
  const int n = phi.grid.size();
  int xnode = phi.grid.locate(x), ynode = phi.grid.locate(y);
  if (xnode < 0 || ynode < 0) throw ConfigError("usbp_p12_identity: points off the grid");
  int mt = phi.slice_at(t);
  int ms = phi.slice_at(s);
  if (mt < 0 || ms < 0) throw ConfigError("usbp_p12_identity: t or s not on the slice grid");

  double phi_a_tx = phi.slices[static_cast<std::size_t>(mt)][static_cast<std::size_t>(xnode)];
  double phi_d_sy =
      phi.slices[static_cast<std::size_t>(ms)][static_cast<std::size_t>(n) + ynode];
  double lhs = phi_d_sy / phi_a_tx * km.p12_density(t, x, s, y);

  auto phi_at = [&](double r, int regime) {
    double rc = std::min(std::max(r, phi.times.front()), phi.times.back());
    std::size_t hi = 1;
    while (hi + 1 < phi.times.size() && phi.times[hi] < rc) ++hi;
    std::size_t lo = hi - 1;
    double a = (phi.times[hi] > phi.times[lo])
                   ? (rc - phi.times[lo]) / (phi.times[hi] - phi.times[lo])
                   : 0.0;
    double vlo = phi.slices[lo][static_cast<std::size_t>(regime - 1) * n + ynode];
    double vhi = phi.slices[hi][static_cast<std::size_t>(regime - 1) * n + ynode];
    return (1 - a) * vlo + a * vhi;
  };
  auto integrand = [&](double u) {
    double tau = u * u;
    double r = t + tau;
    double ratio;
    {
      double pa = phi_at(r, KillingModel::kActive);
      double pd = phi_at(r, KillingModel::kDead);
      ratio = pa > 0 ? pd / pa : 0.0;
    }
    // p^hat_11(t,x,r,y) = phi_a(r,y)/phi_a(t,x) q(t,x,r,y)
    double phat11;
    if (tau <= 0) {
      phat11 = 0;  // y != x case; the u-substitution handles the weight
      if (y[0] == x[0]) {
        Mat sg = km.const_sigma();
        double aa = (sg * sg.transposed())(0, 0);
        double lim = 1.0 / std::sqrt(2.0 * M_PI * aa);
        return 2.0 * ratio * km.v_at(t) * phi_at(t, KillingModel::kActive) / phi_a_tx * lim;
      }
      return 0.0;
    }
    phat11 = phi_at(r, KillingModel::kActive) / phi_a_tx * km.q_density(t, x, r, y);
    return 2.0 * u * ratio * km.v_at(r) * phat11;
  };
  double rhs = adaptive_simpson(integrand, 0.0, std::sqrt(s - t), 1e-8);
  return {lhs, rhs};
}

double usbp_scp_cost(const SamplePath& path, const ControlTriple& controls,
                     const KillingModel& km) {
  ModelSpec two = km.to_model_spec();
  return kl_running_cost(path, controls, two);
}

}  // namespace rsb
