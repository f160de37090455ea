#include <doctest.h>

#include <cmath>
#include <functional>

#include "fixtures.hpp"
#include "rsb/sinkhorn.hpp"

using namespace rsb;
using namespace rsb::testing;

namespace {

// dense positive endpoint kernel on given start/end masses (single regime)
EndpointKernel toy_kernel(const std::vector<double>& rho0_mass,
                          const std::vector<double>& rhoT_mass, double cell_w,
                          const std::function<double(std::size_t, std::size_t)>& p) {
  EndpointKernel ek;
  for (std::size_t r = 0; r < rho0_mass.size(); ++r) {
    ek.s_regime.push_back(1);
    ek.s_node.push_back(static_cast<int>(r));
    ek.s_mass.push_back(rho0_mass[r]);
  }
  for (std::size_t c = 0; c < rhoT_mass.size(); ++c) {
    ek.e_regime.push_back(1);
    ek.e_node.push_back(static_cast<int>(c));
    ek.e_w.push_back(cell_w);
    ek.e_density.push_back(rhoT_mass[c] / cell_w);
  }
  ek.p.resize(ek.n_start() * ek.n_end());
  for (std::size_t r = 0; r < ek.n_start(); ++r)
    for (std::size_t c = 0; c < ek.n_end(); ++c) {
      ek.p[r * ek.n_end() + c] = p(r, c);
      if (!(p(r, c) > 0)) ek.valid = false;
    }
  return ek;
}

double golden_min(const std::function<double(double)>& f, double lo, double hi, double tol) {
  const double gr = (std::sqrt(5.0) - 1) / 2;
  double a = lo, b = hi;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

double xlogx(double x) { return x > 0 ? x * std::log(x) : 0.0; }

}  // namespace

TEST_SUITE("sinkhorn") {

TEST_CASE("map_D is the pointwise reciprocal and an involution") {
  CHECK(map_D({1.0, 1.0}) == std::vector<double>{1.0, 1.0});
  CHECK(map_D({2.0, 4.0}) == std::vector<double>{0.5, 0.25});
  std::vector<double> f = {0.3, 1.7, 42.0, 5e-3};
  std::vector<double> ff = map_D(map_D(f));
  for (std::size_t k = 0; k < f.size(); ++k)
    CHECK(ff[k] == doctest::Approx(f[k]).epsilon(1e-15));
  CHECK_THROWS_AS(map_D({1.0, 0.0}), SolverError);
  CHECK_THROWS_AS(map_D({1.0, -2.0}), SolverError);
}

TEST_CASE("map_E_rhoT on a single pair is the plain product") {
  EndpointKernel ek = toy_kernel({1.0}, {1.0}, 1.0, [](std::size_t, std::size_t) { return 2.0; });
  auto out = map_E_rhoT({3.0}, ek);
  REQUIRE(out.size() == 1);
  CHECK(out[0] == doctest::Approx(6.0));
}

TEST_CASE("map_E_rhoT with f = 1 is bounded by sup rhoT for conservative kernels") {
  Grid g = Grid::make1d(-4, 4, 64);
  Kernel K = kernel_gaussian(g, 0, 1, Pt{0.0}, Mat::identity(1));
  Marginal rho0 = Marginal::zeros(g, 1);
  Marginal rhoT = Marginal::zeros(g, 1);
  auto shape = bump_shape(g, -1.5, 1.5);
  double w = g.cell_weight(), total = 0;
  for (int k = 0; k < g.size(); ++k) total += shape[static_cast<std::size_t>(k)] * w;
  double sup_density = 0;
  for (int k = 0; k < g.size(); ++k) {
    rho0.at(1, k) = 1.0 / g.size();
    rhoT.at(1, k) = shape[static_cast<std::size_t>(k)] * w / total;
    sup_density = std::max(sup_density, rhoT.at(1, k) / w);
  }
  // restrict needs strict positivity on supp(rhoT); the Gaussian kernel is positive
  EndpointKernel ek = restrict_kernel(K, rho0, rhoT);
  REQUIRE(ek.valid);
  auto out = map_E_rhoT(std::vector<double>(ek.n_end(), 1.0), ek);
  for (double v : out) CHECK(v <= sup_density * (1 + 1e-12));
}

TEST_CASE("uniform kernel maps to a constant field") {
  EndpointKernel ek = toy_kernel({0.3, 0.7}, {0.5, 0.5}, 1.0,
                                 [](std::size_t, std::size_t) { return 1.7; });
  auto out = map_E_rhoT({2.0, 2.0}, ek);
  CHECK(out[0] == doctest::Approx(out[1]));
}

TEST_CASE("map_E_rho0 with a Dirac start reduces to a kernel row") {
  std::vector<double> pvals = {0.8, 0.1, 2.4};
  EndpointKernel ek = toy_kernel({1.0}, {0.2, 0.3, 0.5}, 0.25,
                                 [&](std::size_t, std::size_t c) { return pvals[c]; });
  auto out = map_E_rho0({3.0}, ek);
  for (std::size_t c = 0; c < 3; ++c) CHECK(out[c] == doctest::Approx(pvals[c] * 3.0));

  auto zero = map_E_rho0({0.0}, ek);
  for (double v : zero) CHECK(v == 0.0);
}

TEST_CASE("map_E_rho0 agrees with an independent summation order") {
  EndpointKernel ek = toy_kernel({0.4, 0.6}, {0.5, 0.5}, 1.0, [](std::size_t r, std::size_t c) {
    return 0.5 + 0.3 * static_cast<double>(r) + 0.2 * static_cast<double>(c);
  });
  std::vector<double> f = {1.3, 0.4};
  auto out = map_E_rho0(f, ek);
  for (std::size_t c = 0; c < 2; ++c) {
    double alt = 0;  // reversed accumulation order
    for (std::size_t r = 2; r-- > 0;) alt += ek.pat(r, c) * ek.s_mass[r] * f[r];
    CHECK(out[c] == doctest::Approx(alt).epsilon(1e-15));
  }
}

TEST_CASE("scalar instance converges immediately") {
  EndpointKernel ek = toy_kernel({1.0}, {1.0}, 1.0, [](std::size_t, std::size_t) { return 0.7; });
  auto [bp, rep] = iterate_C(ek, 1e-12, 100);
  CHECK(rep.status == ConvergenceReport::Status::converged);
  CHECK(rep.iterations <= 2);
  CHECK(bp.phi0[0] * bp.phihat0_mass[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("constant kernel gives the product coupling") {
  std::vector<double> a = {0.25, 0.35, 0.4}, b = {0.5, 0.2, 0.3};
  EndpointKernel ek = toy_kernel(a, b, 1.0, [](std::size_t, std::size_t) { return 0.9; });
  auto [bp, rep] = iterate_C(ek, 1e-13, 1000);
  CHECK(rep.status == ConvergenceReport::Status::converged);
  std::vector<double> pi = coupling(bp, ek);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c)
      CHECK(pi[r * 3 + c] == doctest::Approx(a[r] * b[c]).epsilon(1e-10));
}

TEST_CASE("2x2 coupling matches the brute-force KL minimizer") {
  std::vector<double> a = {0.4, 0.6}, b = {0.7, 0.3};
  std::vector<double> pv = {1.1, 0.4, 0.25, 2.0};
  double w = 0.5;
  EndpointKernel ek =
      toy_kernel(a, b, w, [&](std::size_t r, std::size_t c) { return pv[r * 2 + c]; });
  auto [bp, rep] = iterate_C(ek, 1e-13, 20000);
  REQUIRE(rep.status == ConvergenceReport::Status::converged);
  std::vector<double> pi = coupling(bp, ek);

  // exhaustive 1-dof search: pi11 = s determines the rest
  auto ref_mass = [&](std::size_t r, std::size_t c) { return a[r] * pv[r * 2 + c] * w; };
  auto objective = [&](double s) {
    double p11 = s, p12 = a[0] - s, p21 = b[0] - s, p22 = 1 - a[0] - b[0] + s;
    double obj = xlogx(p11) - p11 * std::log(ref_mass(0, 0));
    obj += xlogx(p12) - p12 * std::log(ref_mass(0, 1));
    obj += xlogx(p21) - p21 * std::log(ref_mass(1, 0));
    obj += xlogx(p22) - p22 * std::log(ref_mass(1, 1));
    return obj;
  };
  double lo = std::max(0.0, a[0] + b[0] - 1.0), hi = std::min(a[0], b[0]);
  double s_star = golden_min(objective, lo, hi, 1e-12);
  CHECK(std::abs(pi[0] - s_star) <= 1e-8);
  CHECK(std::abs(pi[1] - (a[0] - s_star)) <= 1e-8);
  CHECK(std::abs(pi[2] - (b[0] - s_star)) <= 1e-8);
  CHECK(std::abs(pi[3] - (1 - a[0] - b[0] + s_star)) <= 1e-8);
}

TEST_CASE("marginal reconstruction and the fixed-point property") {
  std::vector<double> a = {0.15, 0.25, 0.3, 0.3}, b = {0.4, 0.1, 0.2, 0.3};
  EndpointKernel ek = toy_kernel(a, b, 0.5, [](std::size_t r, std::size_t c) {
    return 0.2 + std::exp(-0.5 * (static_cast<double>(r) - static_cast<double>(c)) *
                          (static_cast<double>(r) - static_cast<double>(c)));
  });
  const double tol = 1e-10;
  auto [bp, rep] = iterate_C(ek, tol, 10000);
  REQUIRE(rep.status == ConvergenceReport::Status::converged);
  CHECK(rep.marginal_error_start <= tol * 10);
  CHECK(rep.marginal_error_end <= tol * 10);

  std::vector<double> cf = map_E_rho0(map_D(map_E_rhoT(map_D(bp.phihatT), ek)), ek);
  double nrm = combined_norm(cf, ek);
  double resid = 0;
  for (std::size_t k = 0; k < cf.size(); ++k) {
    double d = cf[k] / nrm - bp.phihatT[k];
    resid += d * d * ek.e_w[k];
  }
  CHECK(std::sqrt(resid) <= 2 * tol);
}

TEST_CASE("normalization convention makes the solution unique") {
  std::vector<double> a = {0.5, 0.5}, b = {0.6, 0.4};
  EndpointKernel ek = toy_kernel(a, b, 1.0, [](std::size_t r, std::size_t c) {
    return 0.4 + 0.6 * static_cast<double>(r == c);
  });
  auto [bp1, r1] = iterate_C(ek, 1e-12, 10000);
  auto [bp2, r2] = iterate_C(ek, std::vector<double>{5.0, 0.2}, 1e-12, 10000);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(bp1.phihatT[k] == doctest::Approx(bp2.phihatT[k]).epsilon(1e-9));
    CHECK(bp1.phiT[k] == doctest::Approx(bp2.phiT[k]).epsilon(1e-9));
  }
}

TEST_CASE("scaling gauge: (c fhat, ghat / c) leaves the coupling invariant") {
  std::vector<double> a = {0.5, 0.5}, b = {0.6, 0.4};
  EndpointKernel ek = toy_kernel(a, b, 1.0, [](std::size_t r, std::size_t c) {
    return 1.0 + 0.5 * static_cast<double>(r) * static_cast<double>(c);
  });
  auto [bp, rep] = iterate_C(ek, 1e-12, 10000);
  std::vector<double> pi = coupling(bp, ek);
  const double c = 7.3;
  BoundaryPotentials scaled = bp;
  for (auto& v : scaled.phihat0_mass) v *= c;
  for (auto& v : scaled.phi0) v /= c;
  for (auto& v : scaled.phihatT) v *= c;
  for (auto& v : scaled.phiT) v /= c;
  std::vector<double> pi2 = coupling(scaled, ek);
  for (std::size_t k = 0; k < pi.size(); ++k)
    CHECK(pi2[k] == doctest::Approx(pi[k]).epsilon(1e-14));
}

TEST_CASE("invalid kernels are rejected, not regularized") {
  EndpointKernel ek = toy_kernel({0.5, 0.5}, {0.5, 0.5}, 1.0, [](std::size_t r, std::size_t c) {
    return r == 0 && c == 1 ? 0.0 : 1.0;
  });
  CHECK(!ek.valid);
  CHECK_THROWS_AS(iterate_C(ek, 1e-10, 100), SolverError);
}

TEST_CASE("non-convergence is reported, not hidden") {
  std::vector<double> a = {0.4, 0.6}, b = {0.5, 0.5};
  EndpointKernel ek = toy_kernel(a, b, 1.0, [](std::size_t r, std::size_t c) {
    return 0.05 + static_cast<double>(r == c);
  });
  auto [bp, rep] = iterate_C(ek, 1e-16, 3);
  CHECK(rep.status == ConvergenceReport::Status::max_iters);
  CHECK(!bp.converged);
  CHECK(rep.residuals.size() == 3);
}

TEST_CASE("embedding: one regime is an identity restructuring") {
  Grid g = Grid::make1d(-1, 1, 8);
  Kernel K = kernel_gaussian(g, 0, 1, Pt{0.0}, Mat::identity(1));
  Marginal rho0 = Marginal::zeros(g, 1), rhoT = Marginal::zeros(g, 1);
  for (int k = 0; k < g.size(); ++k) rho0.at(1, k) = rhoT.at(1, k) = 1.0 / g.size();
  EmbeddedProblem em = embed_flatten(K, rho0, rhoT);
  CHECK(em.grid.d == 1);
  CHECK(em.grid.same_as(g));
  for (int x = 0; x < g.size(); ++x)
    for (int y = 0; y < g.size(); ++y)
      CHECK(em.kernel.at(1, em.node_of[static_cast<std::size_t>(x)], 1,
                         em.node_of[static_cast<std::size_t>(y)]) == K.at(1, x, 1, y));
}

TEST_CASE("embedding: gap cells carry zero kernel and zero mass") {
  Grid g = Grid::make1d(-1, 1, 6);
  KillingModel km = killing_model("0.5", 1.0);
  Kernel K = usbp_two_regime_kernel(km, g, 0.0, 1.0);
  Marginal rho0 = Marginal::zeros(g, 2), rhoT = Marginal::zeros(g, 2);
  for (int k = 0; k < g.size(); ++k) {
    rho0.at(1, k) = 0.5 / g.size();
    rho0.at(2, k) = 0.5 / g.size();
    rhoT.at(1, k) = 0.4 / g.size();
    rhoT.at(2, k) = 0.6 / g.size();
  }
  EmbeddedProblem em = embed_flatten(K, rho0, rhoT);
  CHECK(em.grid.ax[1].n == 3);  // I_1, gap, I_2
  const int n_flat = em.grid.size();
  for (int k = 0; k < n_flat; ++k) {
    int c[2];
    em.grid.coords(k, c);
    if (c[1] != 1) continue;  // the gap strip
    CHECK(em.rho0.at(1, k) == 0.0);
    CHECK(em.rhoT.at(1, k) == 0.0);
    for (int other = 0; other < n_flat; ++other) {
      CHECK(em.kernel.at(1, k, 1, other) == 0.0);
      CHECK(em.kernel.at(1, other, 1, k) == 0.0);
    }
  }
}

TEST_CASE("flattened solve reproduces the multi-regime solve") {
  Grid g = Grid::make1d(-1, 1, 10);
  const int n = g.size();
  Kernel K = Kernel::zeros(g, 2, 0.0, 1.0);
  for (int i = 1; i <= 2; ++i)
    for (int x = 0; x < n; ++x)
      for (int j = 1; j <= 2; ++j)
        for (int y = 0; y < n; ++y) {
          double dx = g.point(y)[0] - g.point(x)[0] - 0.1 * (i - j);
          K.at(i, x, j, y) = 0.15 + std::exp(-2.0 * dx * dx) * (i == j ? 0.8 : 0.3);
        }
  Marginal rho0 = Marginal::zeros(g, 2), rhoT = Marginal::zeros(g, 2);
  auto s0 = bump_shape(g, -0.8, 0.4), s1 = bump_shape(g, -0.2, 0.9);
  double m0 = 0, m1 = 0;
  for (int k = 0; k < n; ++k) {
    m0 += s0[static_cast<std::size_t>(k)];
    m1 += s1[static_cast<std::size_t>(k)];
  }
  for (int k = 0; k < n; ++k) {
    rho0.at(1, k) = 0.55 * s0[static_cast<std::size_t>(k)] / m0;
    rho0.at(2, k) = 0.45 * s1[static_cast<std::size_t>(k)] / m1;
    rhoT.at(1, k) = 0.3 * s1[static_cast<std::size_t>(k)] / m1;
    rhoT.at(2, k) = 0.7 * s0[static_cast<std::size_t>(k)] / m0;
  }

  EndpointKernel direct = restrict_kernel(K, rho0, rhoT);
  auto [bp_direct, rep_direct] = iterate_C(direct, 1e-12, 20000);
  REQUIRE(rep_direct.status == ConvergenceReport::Status::converged);

  EmbeddedProblem em = embed_flatten(K, rho0, rhoT);
  EndpointKernel flat = restrict_kernel(em.kernel, em.rho0, em.rhoT);
  auto [bp_flat, rep_flat] = iterate_C(flat, 1e-12, 20000);
  REQUIRE(rep_flat.status == ConvergenceReport::Status::converged);

  // un-flatten by matching support entries through the node map
  REQUIRE(bp_flat.phihatT.size() == bp_direct.phihatT.size());
  auto flat_end_entry = [&](int regime, int node) {
    int fn = em.node_of[static_cast<std::size_t>(regime - 1) * n + node];
    for (std::size_t c = 0; c < flat.n_end(); ++c)
      if (flat.e_node[c] == fn) return c;
    FAIL("missing flat end entry");
    return std::size_t{0};
  };
  auto flat_start_entry = [&](int regime, int node) {
    int fn = em.node_of[static_cast<std::size_t>(regime - 1) * n + node];
    for (std::size_t r = 0; r < flat.n_start(); ++r)
      if (flat.s_node[r] == fn) return r;
    FAIL("missing flat start entry");
    return std::size_t{0};
  };
  for (std::size_t k = 0; k < bp_direct.phihatT.size(); ++k) {
    std::size_t fk = flat_end_entry(direct.e_regime[k], direct.e_node[k]);
    CHECK(std::abs(bp_flat.phihatT[fk] - bp_direct.phihatT[k]) <= 1e-10);
    CHECK(std::abs(bp_flat.phiT[fk] - bp_direct.phiT[k]) <= 1e-10);
  }
  for (std::size_t k = 0; k < bp_direct.phi0.size(); ++k) {
    std::size_t fk = flat_start_entry(direct.s_regime[k], direct.s_node[k]);
    CHECK(std::abs(bp_flat.phi0[fk] - bp_direct.phi0[k]) <= 1e-10);
    CHECK(std::abs(bp_flat.phihat0_mass[fk] - bp_direct.phihat0_mass[k]) <= 1e-10);
  }
}

}  // TEST_SUITE
