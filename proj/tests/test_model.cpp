#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "rsb/model.hpp"

using namespace rsb;
using namespace rsb::testing;

TEST_SUITE("model") {

TEST_CASE("switch layout: interval length equals the rate") {
  ModelSpec m = two_regime_model("0.5", "");
  SwitchLayout lay = switch_layout(m, 0.3, Pt{0.1}, 1);
  REQUIRE(lay.intervals.size() == 1);
  CHECK(lay.intervals[0].j == 2);
  CHECK(lay.intervals[0].start == 0.0);
  CHECK(lay.intervals[0].length == doctest::Approx(0.5));
  CHECK(lay.target(0.49) == 2);
  CHECK(lay.target(0.5) == 0);  // half-open
}

TEST_CASE("switch layout: zero rates give empty intervals") {
  ModelSpec m = two_regime_model("", "");
  SwitchLayout lay = switch_layout(m, 0.0, Pt{0.0}, 1);
  CHECK(lay.intervals.empty());
  CHECK(lay.total == 0.0);
}

TEST_CASE("switch layout: consecutive placement in increasing j") {
  ModelSpec m;
  m.d = 1;
  m.T = 1;
  m.regimes.count = 3;
  m.regimes.labels = {"a", "b", "c"};
  for (int i = 0; i < 3; ++i) {
    m.b.push_back({ex("0")});
    m.sigma.push_back({ex("1")});
  }
  m.Q.resize(9);
  m.Q[1] = ex("0.3");  // q_12
  m.Q[2] = ex("0.7");  // q_13
  m.validate();
  SwitchLayout lay = switch_layout(m, 0, Pt{0.0}, 1);
  REQUIRE(lay.intervals.size() == 2);
  CHECK(lay.intervals[0].j == 2);
  CHECK(lay.intervals[0].start == doctest::Approx(0.0));
  CHECK(lay.intervals[0].length == doctest::Approx(0.3));
  CHECK(lay.intervals[1].j == 3);
  CHECK(lay.intervals[1].start == doctest::Approx(0.3));
  CHECK(lay.intervals[1].length == doctest::Approx(0.7));
  CHECK(lay.total == doctest::Approx(1.0));
}

TEST_CASE("total interval length matches the rate sum to a few ulp") {
  ModelSpec m;
  m.d = 1;
  m.T = 1;
  m.regimes.count = 3;
  m.regimes.labels = {"a", "b", "c"};
  for (int i = 0; i < 3; ++i) {
    m.b.push_back({ex("0")});
    m.sigma.push_back({ex("1")});
  }
  m.Q.resize(9);
  m.Q[1] = ex("0.2 + 0.1*abs(sin(x1))");
  m.Q[2] = ex("exp(-t)*0.4");
  m.Q[5] = ex("0.9");        // q_23
  m.Q[6] = ex("abs(x1)/2");  // q_31
  m.validate();

  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> ux(-3, 3), ut(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    double t = ut(gen);
    Pt x{ux(gen)};
    for (int i = 1; i <= 3; ++i) {
      SwitchLayout lay = switch_layout(m, t, x, i);
      double total = 0;
      for (int j = 1; j <= 3; ++j)
        if (j != i) total += m.switch_rate(t, x, i, j);
      CHECK(std::abs(lay.total - total) <= 4 * std::numeric_limits<double>::epsilon() *
                                               std::max(1.0, total));
    }
  }
}

TEST_CASE("switch_maps returns (j - i, psi - x)") {
  ModelSpec m = two_regime_model("0.5", "");
  auto [alpha, beta] = switch_maps(m, 0.0, Pt{1.0}, 1, 0.2);
  CHECK(alpha == 1);
  CHECK(beta[0] == 0.0);  // identity psi

  auto [a2, b2] = switch_maps(m, 0.0, Pt{1.0}, 1, 0.7);  // outside [0, 0.5)
  CHECK(a2 == 0);
  CHECK(b2[0] == 0.0);
}

TEST_CASE("switch_maps with a hybrid jump psi_12 = x + 1") {
  ModelSpec m = two_regime_model("0.5", "");
  m.psi.resize(4);
  m.psi[1] = {ex("x1 + 1")};
  auto [alpha, beta] = switch_maps(m, 0.0, Pt{2.0}, 1, 0.25);
  CHECK(alpha == 1);
  CHECK(beta[0] == doctest::Approx(1.0));
}

TEST_CASE("identity psi always yields beta = 0") {
  ModelSpec m = two_regime_model("1.3", "0.4");
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> ux(-5, 5), uw(0, 2);
  for (int trial = 0; trial < 200; ++trial) {
    Pt x{ux(gen)};
    auto [alpha, beta] = switch_maps(m, 0.5, x, 1 + static_cast<int>(gen() % 2), uw(gen));
    (void)alpha;
    CHECK(beta[0] == 0.0);
  }
}

TEST_CASE("sigma sigma^T stays symmetric at random points") {
  ModelSpec m;
  m.d = 2;
  m.T = 1;
  m.regimes.count = 1;
  m.regimes.labels = {"a"};
  auto vars = tx_vars(2);
  m.b = {{Expr::parse("0", vars), Expr::parse("0", vars)}};
  m.sigma = {{Expr::parse("1 + 0.1*sin(x1)", vars), Expr::parse("0.2*x2", vars),
              Expr::parse("0.3*cos(t)", vars), Expr::parse("0.9", vars)}};
  m.validate();
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-2, 2), ut(0, 1);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Pt x(2);
    x[0] = u(gen);
    x[1] = u(gen);
    Mat aa = m.diffusion_aa(ut(gen), x, 1);
    worst = std::max(worst, std::abs(aa(0, 1) - aa(1, 0)));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("negative switch rate is a model error") {
  ModelSpec m = two_regime_model("x1", "");  // negative for x1 < 0
  CHECK_THROWS_AS(switch_layout(m, 0.0, Pt{-1.0}, 1), NumericError);
}

TEST_CASE("jump measure invariants") {
  JumpMeasure nu;
  nu.ell = 1;
  nu.atoms.push_back({Pt{0.0}, 1.0});
  CHECK_THROWS_AS(nu.validate(), ConfigError);  // no atom at z = 0
  nu.atoms[0] = {Pt{0.5}, -1.0};
  CHECK_THROWS_AS(nu.validate(), ConfigError);  // nonnegative weights
  nu.atoms[0] = {Pt{0.5}, 1.0};
  CHECK_NOTHROW(nu.validate());
}

TEST_CASE("small-jump compensator sums atoms inside the unit ball") {
  ModelSpec m = diffusion_model();
  add_jumps(m, {{0.5, 2.0}, {1.5, 3.0}}, true);
  Pt comp = m.small_jump_compensator(0.0, Pt{0.0}, 1);
  // only z = 0.5 is small: gamma = z, so compensator = 0.5 * 2.0
  CHECK(comp[0] == doctest::Approx(1.0));
}

TEST_CASE("regime set validation") {
  RegimeSet r;
  r.count = 0;
  CHECK_THROWS_AS(r.validate(), ConfigError);
  r.count = 2;
  r.labels = {"a", "a"};
  CHECK_THROWS_AS(r.validate(), ConfigError);
  r.labels = {"a", "b"};
  CHECK_NOTHROW(r.validate());
}

}  // TEST_SUITE
