#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fixtures.hpp"
#include "rsb/simulate.hpp"

using namespace rsb;
using namespace rsb::testing;

namespace {

struct MeanVar {
  double mean = 0, var = 0;
  int n = 0;
};

MeanVar terminal_stats(const ModelSpec& m, int paths, double dt, std::uint64_t seed) {
  MeanVar out;
  double s1 = 0, s2 = 0;
  for (int p = 0; p < paths; ++p) {
    RngStream rng(seed, static_cast<std::uint64_t>(p));
    SamplePath path = simulate_reference(m, 0.0, Pt{0.0}, 1, dt, rng);
    double x = path.terminal().x[0];
    s1 += x;
    s2 += x * x;
  }
  out.n = paths;
  out.mean = s1 / paths;
  out.var = s2 / paths - out.mean * out.mean;
  return out;
}

// two-sample Kolmogorov-Smirnov p-value (asymptotic)
double ks_p_value(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j])
      ++i;
    else
      ++j;
    double fa = static_cast<double>(i) / a.size();
    double fb = static_cast<double>(j) / b.size();
    d = std::max(d, std::abs(fa - fb));
  }
  double ne = static_cast<double>(a.size()) * b.size() / (a.size() + b.size());
  double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  double p = 0;
  for (int k = 1; k <= 100; ++k) p += 2 * std::pow(-1.0, k - 1) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace

TEST_SUITE("simulate") {

TEST_CASE("frozen dynamics give a constant path") {
  ModelSpec m = diffusion_model("0", "0");
  RngStream rng(1, 0);
  SamplePath path = simulate_reference(m, 0.0, Pt{0.7}, 1, 0.01, rng);
  for (const auto& st : path.states) {
    CHECK(st.x[0] == 0.7);
    CHECK(st.regime == 1);
  }
  CHECK(path.events.empty());
}

TEST_CASE("Brownian endpoint statistics") {
  ModelSpec m = diffusion_model("0", "1");
  const int N = 100000;
  MeanVar mv = terminal_stats(m, N, 0.05, 42);
  CHECK(std::abs(mv.mean) <= 3.0 / std::sqrt(static_cast<double>(N)));
  CHECK(mv.var == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("constant-rate killing matches the exponential clock") {
  ModelSpec m = two_regime_model("0.5", "");
  const int N = 100000;
  int survived = 0;
  for (int p = 0; p < N; ++p) {
    RngStream rng(7, static_cast<std::uint64_t>(p));
    SamplePath path = simulate_reference(m, 0.0, Pt{0.0}, 1, 0.01, rng);
    if (path.terminal().regime == 1) ++survived;
  }
  double expect = std::exp(-0.5);
  double se = std::sqrt(expect * (1 - expect) / N);
  CHECK(std::abs(static_cast<double>(survived) / N - expect) <= 3 * se + 1e-3);
  CHECK(expect == doctest::Approx(0.606531).epsilon(1e-6));
}

TEST_CASE("determinism: identical (seed, stream) reproduces the path bitwise") {
  ModelSpec m = two_regime_model("0.8", "0.3");
  add_jumps(m, {{0.5, 1.0}}, false);
  auto run = [&] {
    RngStream rng(123, 45);
    return simulate_reference(m, 0.0, Pt{0.2}, 1, 0.005, rng);
  };
  SamplePath a = run(), b = run();
  REQUIRE(a.states.size() == b.states.size());
  for (std::size_t k = 0; k < a.states.size(); ++k) {
    CHECK(a.states[k].x[0] == b.states[k].x[0]);
    CHECK(a.states[k].regime == b.states[k].regime);
  }
  REQUIRE(a.events.size() == b.events.size());

  RngStream other(123, 46);
  SamplePath c = simulate_reference(m, 0.0, Pt{0.2}, 1, 0.005, other);
  bool differs = false;
  for (std::size_t k = 0; k < a.states.size(); ++k)
    if (a.states[k].x[0] != c.states[k].x[0]) differs = true;
  CHECK(differs);
}

TEST_CASE("regime component changes exactly at recorded switch events") {
  ModelSpec m = two_regime_model("1.2", "0.9");
  for (int p = 0; p < 50; ++p) {
    RngStream rng(77, static_cast<std::uint64_t>(p));
    SamplePath path = simulate_reference(m, 0.0, Pt{0.0}, 1, 0.002, rng);
    std::vector<int> switch_steps;
    for (const auto& ev : path.events)
      if (ev.kind == SamplePath::EventKind::sw) switch_steps.push_back(ev.step);
    std::size_t next = 0;
    for (int k = 0; k < path.steps(); ++k) {
      bool changed = path.states[static_cast<std::size_t>(k) + 1].regime !=
                     path.states[static_cast<std::size_t>(k)].regime;
      bool recorded = next < switch_steps.size() && switch_steps[next] == k;
      CHECK(changed == recorded);
      if (recorded) ++next;
    }
  }
}

TEST_CASE("girsanov weight of the identity transform is one") {
  ModelSpec m = two_regime_model("0.5", "0.2");
  add_jumps(m, {{0.5, 0.8}}, false);
  ControlTriple id = ControlTriple::identity(1);
  for (int p = 0; p < 20; ++p) {
    RngStream rng(5, static_cast<std::uint64_t>(p));
    SamplePath path = simulate_reference(m, 0.0, Pt{0.0}, 1, 0.005, rng);
    CHECK(girsanov_weight(path, id, m) == 1.0);
    CHECK(kl_running_cost(path, id, m) == 0.0);
  }
}

TEST_CASE("girsanov weight with constant drift control matches the closed form") {
  ModelSpec m = diffusion_model("0", "1");
  const double c = 0.7;
  ControlTriple ctl;
  ctl.u = [c](double, const Pt&, int) { return Pt{c}; };
  ctl.theta = [](double, const Pt&, int, int) { return 0.0; };
  ctl.xi = [](double, const Pt&, int, int) { return 1.0; };
  for (int p = 0; p < 20; ++p) {
    RngStream rng(9, static_cast<std::uint64_t>(p));
    SamplePath path = simulate_reference(m, 0.0, Pt{0.0}, 1, 0.01, rng);
    double stoch = 0;
    for (const auto& db : path.brownian) stoch += c * db[0];
    double expect = std::exp(-stoch - c * c * m.T / 2.0);
    CHECK(girsanov_weight(path, ctl, m) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("E[Z] = 1 for smooth bounded controls (martingale property)") {
  ModelSpec m = two_regime_model("0.5", "0.3");
  add_jumps(m, {{0.5, 0.6}}, false);
  ControlTriple ctl;
  ctl.u = [](double t, const Pt& x, int) { return Pt{0.3 * std::sin(x[0] + t)}; };
  ctl.theta = [](double, const Pt& x, int, int) { return 0.2 * std::cos(x[0]); };
  ctl.xi = [](double, const Pt&, int i, int) { return i == 1 ? 1.4 : 0.7; };
  const int N = 100000;
  double sum = 0, sumsq = 0;
  for (int p = 0; p < N; ++p) {
    RngStream rng(31, static_cast<std::uint64_t>(p));
    SamplePath path = simulate_reference(m, 0.0, Pt{0.0}, 1, 0.01, rng);
    double z = girsanov_weight(path, ctl, m);
    CHECK(z > 0);
    sum += z;
    sumsq += z * z;
  }
  double mean = sum / N;
  double se = std::sqrt((sumsq / N - mean * mean) / N);
  CHECK(std::abs(mean - 1.0) <= 3 * se + 5e-3);
}

TEST_CASE("kl running cost in closed form") {
  ModelSpec m = diffusion_model("0", "1");

  SUBCASE("constant u = c costs c^2 T / 2") {
    const double c = 1.3;
    ControlTriple ctl;
    ctl.u = [c](double, const Pt&, int) { return Pt{c}; };
    ctl.theta = [](double, const Pt&, int, int) { return 0.0; };
    ctl.xi = [](double, const Pt&, int, int) { return 1.0; };
    RngStream rng(3, 0);
    SamplePath path = simulate_reference(m, 0.0, Pt{0.0}, 1, 0.01, rng);
    CHECK(kl_running_cost(path, ctl, m) == doctest::Approx(c * c * m.T / 2).epsilon(1e-12));
  }

  SUBCASE("xi = 2 against a constant clock costs q T (2 log 2 - 1)") {
    // path generated without switching, cost evaluated under the q-rate model
    ModelSpec frozen = diffusion_model("0", "0");
    const double q = 0.4;
    ModelSpec rated = two_regime_model("0.4", "", "0", "0");
    ControlTriple ctl;
    ctl.u = [](double, const Pt&, int) { return Pt{0.0}; };
    ctl.theta = [](double, const Pt&, int, int) { return 0.0; };
    ctl.xi = [](double, const Pt&, int, int) { return 2.0; };
    RngStream rng(4, 0);
    SamplePath path = simulate_reference(frozen, 0.0, Pt{0.0}, 1, 0.01, rng);
    double expect = q * rated.T * (2 * std::log(2.0) - 1.0);
    CHECK(kl_running_cost(path, ctl, rated) == doctest::Approx(expect).epsilon(1e-12));
  }

  SUBCASE("cost is nonnegative and zero only at the identity") {
    ModelSpec rated = two_regime_model("0.5", "0.2");
    add_jumps(rated, {{0.5, 0.6}}, false);
    ControlTriple ctl;
    ctl.u = [](double, const Pt& x, int) { return Pt{0.2 * std::sin(x[0])}; };
    ctl.theta = [](double, const Pt&, int, int) { return -0.5; };
    ctl.xi = [](double, const Pt&, int, int) { return 1.7; };
    for (int p = 0; p < 10; ++p) {
      RngStream rng(6, static_cast<std::uint64_t>(p));
      SamplePath path = simulate_reference(rated, 0.0, Pt{0.0}, 1, 0.01, rng);
      CHECK(kl_running_cost(path, ctl, rated) > 0.0);
    }
  }
}

TEST_CASE("identity-valued controls reproduce the reference law (KS test)") {
  ModelSpec m = diffusion_model("0.2", "1");
  ControlTriple idv;  // identity values without the shortcut flag
  idv.u = [](double, const Pt&, int) { return Pt{0.0}; };
  idv.theta = [](double, const Pt&, int, int) { return 0.0; };
  idv.xi = [](double, const Pt&, int, int) { return 1.0; };
  const int N = 10000;
  std::vector<double> ref, con;
  for (int p = 0; p < N; ++p) {
    RngStream r1(100, static_cast<std::uint64_t>(p));
    ref.push_back(simulate_reference(m, 0.0, Pt{0.0}, 1, 0.02, r1).terminal().x[0]);
    RngStream r2(200, static_cast<std::uint64_t>(p));
    con.push_back(simulate_controlled(m, idv, 0.0, Pt{0.0}, 1, 0.02, r2).terminal().x[0]);
  }
  CHECK(ks_p_value(ref, con) > 0.01);
}

TEST_CASE("bridge-type drift pins the endpoint") {
  ModelSpec m = diffusion_model("0", "1");
  const double a = 1.0, s2 = 0.01;
  ControlTriple ctl;
  ctl.u = [a, s2, &m](double t, const Pt& x, int) {
    return Pt{(x[0] - a) / (m.T - t + s2)};
  };
  ctl.theta = [](double, const Pt&, int, int) { return 0.0; };
  ctl.xi = [](double, const Pt&, int, int) { return 1.0; };
  const int N = 2000;
  double s1 = 0, sq = 0;
  for (int p = 0; p < N; ++p) {
    RngStream rng(55, static_cast<std::uint64_t>(p));
    double x = simulate_controlled(m, ctl, 0.0, Pt{0.0}, 1, 1.0 / 512, rng).terminal().x[0];
    s1 += x;
    sq += x * x;
  }
  double mean = s1 / N, var = sq / N - mean * mean;
  CHECK(std::abs(mean - a) <= 0.02);
  CHECK(var <= 4 * (s2 + 1.0 / 512));
}

TEST_CASE("doubled switch rate halves the survival exponent") {
  ModelSpec m = two_regime_model("0.5", "");
  ControlTriple ctl;
  ctl.u = [](double, const Pt&, int) { return Pt{0.0}; };
  ctl.theta = [](double, const Pt&, int, int) { return 0.0; };
  ctl.xi = [](double, const Pt&, int, int) { return 2.0; };
  const int N = 50000;
  int survived = 0;
  for (int p = 0; p < N; ++p) {
    RngStream rng(91, static_cast<std::uint64_t>(p));
    if (simulate_controlled(m, ctl, 0.0, Pt{0.0}, 1, 0.01, rng).terminal().regime == 1)
      ++survived;
  }
  double expect = std::exp(-1.0);
  double se = std::sqrt(expect * (1 - expect) / N);
  CHECK(std::abs(static_cast<double>(survived) / N - expect) <= 3 * se + 2e-3);
}

TEST_CASE("tilted jump intensity thins the jump count") {
  ModelSpec m = diffusion_model("0", "1");
  add_jumps(m, {{0.5, 2.0}}, false);
  ControlTriple ctl;
  ctl.u = [](double, const Pt&, int) { return Pt{0.0}; };
  ctl.theta = [](double, const Pt&, int, int) { return 0.5; };  // intensity 2 -> 1
  ctl.xi = [](double, const Pt&, int, int) { return 1.0; };
  const int N = 20000;
  long jumps = 0;
  for (int p = 0; p < N; ++p) {
    RngStream rng(14, static_cast<std::uint64_t>(p));
    jumps += static_cast<long>(
        simulate_controlled(m, ctl, 0.0, Pt{0.0}, 1, 0.01, rng).events.size());
  }
  double mean = static_cast<double>(jumps) / N;
  CHECK(mean == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("dt validation against event rates") {
  ModelSpec m = two_regime_model("30", "");
  RngStream rng(1, 0);
  CHECK_THROWS_AS(simulate_reference(m, 0.0, Pt{0.0}, 1, 0.01, rng), ConfigError);
}

TEST_CASE("sample_start draws cells and dirac atoms") {
  Grid g = Grid::make1d(-1, 1, 4);
  Marginal m = Marginal::zeros(g, 2);
  m.at(1, 0) = 0.25;
  m.at(2, 3) = 0.25;
  m.diracs.push_back({1, 2, 0.5});
  int counts[3] = {0, 0, 0};
  for (int p = 0; p < 20000; ++p) {
    RngStream rng(8, static_cast<std::uint64_t>(p));
    auto st = sample_start(m, 0.0, rng);
    if (st.regime == 1 && g.locate(st.x) == 2) ++counts[0];
    else if (st.regime == 1 && g.locate(st.x) == 0) ++counts[1];
    else if (st.regime == 2 && g.locate(st.x) == 3) ++counts[2];
  }
  CHECK(counts[0] / 20000.0 == doctest::Approx(0.5).epsilon(0.05));
  CHECK(counts[1] / 20000.0 == doctest::Approx(0.25).epsilon(0.08));
  CHECK(counts[2] / 20000.0 == doctest::Approx(0.25).epsilon(0.08));
}

}  // TEST_SUITE
