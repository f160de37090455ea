#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "rsb/kernel.hpp"

using namespace rsb;
using namespace rsb::testing;

TEST_SUITE("kernel") {

TEST_CASE("standard normal density at the origin") {
  Grid g = Grid::make1d(-6, 6, 200);
  Kernel k = kernel_gaussian(g, 0.0, 1.0, Pt{0.0}, Mat::identity(1));
  int x0 = g.locate(Pt{0.0});
  // the diagonal entry is the density at offset zero
  CHECK(k.at(1, x0, 1, x0) == doctest::Approx(1.0 / std::sqrt(2 * M_PI)).epsilon(1e-12));
  CHECK(1.0 / std::sqrt(2 * M_PI) == doctest::Approx(0.3989423).epsilon(1e-6));
}

TEST_CASE("short-time kernel integrates to one on a +-6 sigma grid") {
  // s - t = 0.01 => sigma_eff = 0.1; grid covers +-0.6
  Grid g = Grid::make1d(-0.6, 0.6, 240);
  Kernel k = kernel_gaussian(g, 0.0, 0.01, Pt{0.0}, Mat::identity(1));
  int x0 = g.locate(Pt{0.0});
  CHECK(k.row_mass(1, x0) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("translation equivariance for constant coefficients") {
  Grid g = Grid::make1d(-6, 6, 200);
  Kernel k = kernel_gaussian(g, 0.0, 1.0, Pt{0.3}, Mat::identity(1));
  for (int shift : {1, 7, 23}) {
    for (int x = 40; x < 60; ++x) {
      int y = x + 31;
      double a = k.at(1, x, 1, y);
      double b = k.at(1, x + shift, 1, y + shift);
      CHECK(a == doctest::Approx(b).epsilon(2e-13));
    }
  }
}

TEST_CASE("killing scales by exp(-int V)") {
  Grid g = Grid::make1d(-6, 6, 100);
  Kernel base = kernel_gaussian(g, 0.0, 1.0, Pt{0.0}, Mat::identity(1));

  SUBCASE("V = 0 leaves the kernel unchanged") {
    Kernel killed = kernel_killing(base, Expr::parse("0", {"t"}));
    for (std::size_t i = 0; i < base.values.size(); ++i)
      CHECK(killed.values[i] == base.values[i]);
  }
  SUBCASE("constant V = 0.5 over unit time") {
    Kernel killed = kernel_killing(base, Expr::parse("0.5", {"t"}));
    double factor = killed.values[5000] / base.values[5000];
    CHECK(factor == doctest::Approx(std::exp(-0.5)).epsilon(1e-10));
    CHECK(factor == doctest::Approx(0.606531).epsilon(1e-6));
  }
  SUBCASE("V(t) = t integrates to 1/2 on [0,1]") {
    Kernel killed = kernel_killing(base, Expr::parse("t", {"t"}));
    double factor = killed.values[5000] / base.values[5000];
    CHECK(factor == doctest::Approx(std::exp(-0.5)).epsilon(1e-9));
  }
  SUBCASE("negative V is rejected") {
    CHECK_THROWS_AS(kernel_killing(base, Expr::parse("-1", {"t"})), NumericError);
  }
}

TEST_CASE("monte carlo kernel: frozen model concentrates in the start cell") {
  ModelSpec m = diffusion_model("0", "0");
  Grid g = Grid::make1d(-2, 2, 8);
  Kernel k = kernel_mc(m, g, 0.0, 1.0, 1000, 0.05, 99);
  for (int x = 0; x < g.size(); ++x) {
    CHECK(k.at(1, x, 1, x) == doctest::Approx(1.0 / g.cell_weight()));
    CHECK(k.leak[static_cast<std::size_t>(x)] == 0.0);
  }
}

TEST_CASE("monte carlo kernel approaches the analytic Gaussian in L1") {
  ModelSpec m = diffusion_model("0", "1");
  Grid g = Grid::make1d(-3.5, 3.5, 20);
  const std::int64_t N = 10000;
  Kernel mc = kernel_mc(m, g, 0.0, 1.0, N, 0.05, 2024);
  Kernel exact = kernel_gaussian(g, 0.0, 1.0, Pt{0.0}, Mat::identity(1));
  const double w = g.cell_weight();
  for (int x = 0; x < g.size(); ++x) {
    double l1 = 0;
    for (int y = 0; y < g.size(); ++y) l1 += std::abs(mc.at(1, x, 1, y) - exact.at(1, x, 1, y)) * w;
    CAPTURE(x);
    CHECK(l1 <= 0.05);
  }
}

TEST_CASE("monte carlo kernel on the killing model reproduces the killed mass") {
  KillingModel km = killing_model("0.5", 1.0);
  ModelSpec two = km.to_model_spec();
  Grid g = Grid::make1d(-8, 8, 8);
  const std::int64_t N = 10000;
  Kernel k = kernel_mc(two, g, 0.0, 1.0, N, 0.02, 5);
  int x0 = g.locate(Pt{0.0});
  double killed = 0;
  for (int y = 0; y < g.size(); ++y) killed += k.at(1, x0, 2, y) * g.cell_weight();
  double expect = 1.0 - std::exp(-0.5);
  double se = std::sqrt(expect * (1 - expect) / static_cast<double>(N));
  CHECK(std::abs(killed - expect) <= 3 * se + 2e-3);  // 3 MC se plus O(dt) thinning bias
}

TEST_CASE("composition with the identity kernel") {
  Grid g = Grid::make1d(-6, 6, 100);
  Kernel k2 = kernel_gaussian(g, 0.5, 1.0, Pt{0.1}, Mat::identity(1));
  Kernel id = kernel_identity(g, 1, 0.5);
  Kernel out = compose(id, k2);
  double worst = 0;
  for (std::size_t i = 0; i < out.values.size(); ++i)
    worst = std::max(worst, std::abs(out.values[i] - k2.values[i]));
  CHECK(worst <= 1e-12);
}

TEST_CASE("Gaussian semigroup under composition") {
  Grid g = Grid::make1d(-6, 6, 200);
  Mat half(1, 1);
  half(0, 0) = std::sqrt(0.5);
  Kernel a = kernel_gaussian(g, 0.0, 1.0, Pt{0.0}, half);   // variance 0.5
  Kernel b = kernel_gaussian(g, 1.0, 2.0, Pt{0.0}, half);   // variance 0.5
  // composed variance 1.0 = sigma^2 (s - t) with sigma = sqrt(0.5) over [0,2]
  Kernel direct = kernel_gaussian(g, 0.0, 2.0, Pt{0.0}, half);
  Kernel composed = compose(a, b);
  // interior start nodes: quadrature truncation stays below budget there
  double worst = 0;
  for (int x = 0; x < g.size(); ++x) {
    if (std::abs(g.point(x)[0]) > 2.5) continue;
    for (int y = 0; y < g.size(); ++y)
      worst = std::max(worst, std::abs(composed.at(1, x, 1, y) - direct.at(1, x, 1, y)));
  }
  CHECK(worst <= 2e-3);
}

TEST_CASE("killing kernels compose multiplicatively") {
  Grid g = Grid::make1d(-6, 6, 200);
  Mat half(1, 1);
  half(0, 0) = std::sqrt(0.5);
  Expr v = Expr::parse("0.3 + 0.2*t", {"t"});
  Kernel qa = kernel_killing(kernel_gaussian(g, 0.0, 1.0, Pt{0.0}, half), v);
  Kernel qb = kernel_killing(kernel_gaussian(g, 1.0, 2.0, Pt{0.0}, half), v);
  Kernel qd = kernel_killing(kernel_gaussian(g, 0.0, 2.0, Pt{0.0}, half), v);
  Kernel qc = compose(qa, qb);
  double worst = 0;
  for (int x = 0; x < g.size(); ++x) {
    if (std::abs(g.point(x)[0]) > 2.5) continue;
    for (int y = 0; y < g.size(); ++y)
      worst = std::max(worst, std::abs(qc.at(1, x, 1, y) - qd.at(1, x, 1, y)));
  }
  CHECK(worst <= 2e-3);
}

TEST_CASE("composition is associative to rounding") {
  Grid g = Grid::make1d(-6, 6, 120);
  Mat third(1, 1);
  third(0, 0) = std::sqrt(1.0 / 3.0);
  Kernel a = kernel_gaussian(g, 0.0, 1.0, Pt{0.0}, third);
  Kernel b = kernel_gaussian(g, 1.0, 2.0, Pt{0.0}, third);
  Kernel c = kernel_gaussian(g, 2.0, 3.0, Pt{0.0}, third);
  Kernel left = compose(compose(a, b), c);
  Kernel right = compose(a, compose(b, c));
  double worst = 0;
  for (std::size_t i = 0; i < left.values.size(); ++i)
    worst = std::max(worst, std::abs(left.values[i] - right.values[i]));
  CHECK(worst <= 1e-12);
}

TEST_CASE("mass conservation with recorded leak") {
  Grid g = Grid::make1d(-6, 6, 100);
  Kernel k = kernel_gaussian(g, 0.0, 1.0, Pt{0.0}, Mat::identity(1));
  for (int x = 0; x < g.size(); ++x) {
    double mass = k.row_mass(1, x);
    double leak = k.leak[static_cast<std::size_t>(x)];
    CHECK(mass <= 1.0 + 1e-9);
    CHECK(mass + leak == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("kernel cache round trip and corruption detection") {
  Grid g = Grid::make1d(-3, 3, 24);
  Kernel k = kernel_gaussian(g, 0.25, 1.0, Pt{-0.2}, Mat::identity(1));
  std::string path = (std::filesystem::temp_directory_path() / "rsb_test_kernel.bin").string();
  save_kernel(k, path);
  Kernel loaded = load_kernel(path);
  CHECK(loaded.t == k.t);
  CHECK(loaded.s == k.s);
  CHECK(loaded.grid.same_as(k.grid));
  CHECK(loaded.values == k.values);
  CHECK(loaded.content_hash() == k.content_hash());

  // flip one byte in the payload: the stored hash must catch it
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(200);
    char c = 0x5a;
    f.write(&c, 1);
  }
  CHECK_THROWS_AS(load_kernel(path), ConfigError);
  std::filesystem::remove(path);
}

TEST_CASE("two-dimensional gaussian kernel") {
  Grid g = Grid::make2d({-5, 5, 40}, {-5, 5, 40});
  Mat sg(2, 2);
  sg(0, 0) = 1.0;
  sg(0, 1) = 0.0;
  sg(1, 0) = 0.3;
  sg(1, 1) = 0.8;
  Kernel k = kernel_gaussian(g, 0.0, 1.0, Pt{0.1, -0.2}, sg);
  // density at the mean offset: 1 / (2 pi sqrt(det(cov)))
  Mat cov = sg * sg.transposed();
  int x0 = g.locate(Pt{0.0, 0.0});
  Pt mean = g.point(x0) + 1.0 * Pt{0.1, -0.2};
  int y0 = g.locate(mean);
  Pt u = g.point(y0) - mean;
  Mat prec = inverse(cov);
  double q = u[0] * (prec(0, 0) * u[0] + prec(0, 1) * u[1]) +
             u[1] * (prec(1, 0) * u[0] + prec(1, 1) * u[1]);
  double expect = std::exp(-0.5 * q) / (2 * M_PI * std::sqrt(det(cov)));
  CHECK(k.at(1, x0, 1, y0) == doctest::Approx(expect).epsilon(1e-12));
  // interior rows integrate to one
  CHECK(k.row_mass(1, x0) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("monte carlo kernel flags heavy grid leak") {
  ModelSpec m = diffusion_model("0", "1");
  Grid g = Grid::make1d(-0.5, 0.5, 4);  // most of the time-1 mass escapes
  Kernel k = kernel_mc(m, g, 0.0, 1.0, 1000, 0.05, 17);
  CHECK(k.leak_warning);
  double worst = 0;
  for (double l : k.leak) worst = std::max(worst, l);
  CHECK(worst > 0.5);
}

TEST_CASE("compose rejects mismatched inputs") {
  Grid g = Grid::make1d(-3, 3, 24);
  Grid g2 = Grid::make1d(-3, 3, 25);
  Kernel a = kernel_gaussian(g, 0.0, 1.0, Pt{0.0}, Mat::identity(1));
  Kernel b = kernel_gaussian(g, 0.5, 1.5, Pt{0.0}, Mat::identity(1));
  CHECK_THROWS_AS(compose(a, b), ConfigError);  // a.s != b.t
  Kernel c = kernel_gaussian(g2, 1.0, 2.0, Pt{0.0}, Mat::identity(1));
  CHECK_THROWS_AS(compose(a, c), ConfigError);  // grid mismatch
}

}  // TEST_SUITE
