#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rsb/config.hpp"
#include "rsb/emit.hpp"
#include "rsb/potentials.hpp"
#include "rsb/sinkhorn.hpp"
#include "rsb/threads.hpp"
#include "rsb/usbp.hpp"
#include "rsb/verify.hpp"

namespace fs = std::filesystem;
using namespace rsb;

namespace {

constexpr const char* kVersion = "rb 1.0.0";

struct StageRecord {
  std::string name;
  double wall_seconds = 0;
  std::vector<std::string> artifacts;
};

Pt parse_point(const ConfigFile& cfg, const std::string& key, int d) {
  const auto& arr = cfg.get(key).array();
  if (static_cast<int>(arr.size()) != d) throw ConfigError(key + " must have d coordinates");
  Pt p(d);
  for (int k = 0; k < d; ++k) p[k] = arr[static_cast<std::size_t>(k)].num();
  return p;
}

// ---- simulate ----------------------------------------------------------

int cmd_simulate(const std::string& config, int paths, double dt, std::uint64_t seed,
                 const std::string& out) {
  ConfigFile cfg = ConfigFile::parse_file(config);
  ModelSpec model = load_model(cfg);
  Pt x0 = parse_point(cfg, "simulate.x0", model.d);
  int regime = static_cast<int>(cfg.number_or("simulate.regime", 1));

  std::string csv = path_csv_header(model.d);
  for (int p = 0; p < paths; ++p) {
    RngStream rng(seed, static_cast<std::uint64_t>(p));
    SamplePath path = simulate_reference(model, 0.0, x0, regime, dt, rng);
    append_path_csv(csv, p, path);
  }
  write_text_atomic(out, csv);
  std::cout << "simulate: wrote " << paths << " paths to " << out << "\n";
  return 0;
}

// ---- kernel ------------------------------------------------------------

Kernel build_kernel(const ConfigFile& cfg, const Grid& grid, double t, double s,
                    const std::string& method, std::int64_t mc_paths, double dt,
                    std::uint64_t seed) {
  std::string m = method;
  if (m == "auto") m = cfg.has("usbp.V") ? "usbp" : "mc";
  if (m == "usbp") {
    KillingModel km = load_killing_model(cfg);
    return usbp_two_regime_kernel(km, grid, t, s);
  }
  ModelSpec model = load_model(cfg);
  if (m == "gaussian") {
    if (model.nregimes() != 1 || model.has_jumps())
      throw UnsupportedModelError("gaussian kernel needs a single-regime diffusion");
    Pt b = model.drift(t, Pt(model.d), 1);
    Mat sg = model.sigma_at(t, Pt(model.d), 1);
    return kernel_gaussian(grid, t, s, b, sg);
  }
  if (m == "mc") return kernel_mc(model, grid, t, s, mc_paths, dt, seed);
  throw ConfigError("unknown kernel method '" + method + "'");
}

int cmd_kernel(const std::string& config, const std::string& grid_spec, double t, double s,
               const std::string& out, const std::string& method, std::int64_t mc_paths,
               double dt, std::uint64_t seed) {
  ConfigFile cfg = ConfigFile::parse_file(config);
  Grid grid = load_grid(cfg, grid_spec);
  Kernel k = build_kernel(cfg, grid, t, s, method, mc_paths, dt, seed);
  save_kernel(k, out);
  if (k.leak_warning)
    std::cout << "kernel: warning: grid leak exceeds 5% on some start nodes\n";
  std::cout << "kernel: wrote " << out << " (hash " << k.content_hash() << ")\n";
  return 0;
}

// ---- solve -------------------------------------------------------------

int cmd_solve(const std::string& kernel_path, const std::string& rho0_path,
              const std::string& rhoT_path, double tol, int max_iters, const std::string& out,
              const std::string& report_path) {
  Kernel K = load_kernel(kernel_path);
  Marginal rho0 = read_marginal_csv(rho0_path, K.grid, K.regimes);
  Marginal rhoT = read_marginal_csv(rhoT_path, K.grid, K.regimes);
  EndpointKernel ek = restrict_kernel(K, rho0, rhoT);
  auto [bp, report] = iterate_C(ek, tol, max_iters);
  write_text_atomic(out, potentials_csv(bp, ek, K.grid));
  if (!report_path.empty()) write_text_atomic(report_path, convergence_csv(report));
  std::cout << "solve: " << report.iterations << " iterations, final residual "
            << (report.residuals.empty() ? 0.0 : report.residuals.back()) << "\n";
  if (report.status != ConvergenceReport::Status::converged)
    throw NumericError("solve did not converge within max iterations");
  return 0;
}

// ---- bridge ------------------------------------------------------------

std::vector<Kernel> load_kernel_dir(const std::string& dir) {
  std::vector<Kernel> ks;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".bin") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) ks.push_back(load_kernel(f.string()));
  std::sort(ks.begin(), ks.end(), [](const Kernel& a, const Kernel& b) { return a.t < b.t; });
  if (ks.empty()) throw ConfigError("no .bin kernels found in " + dir);
  return ks;
}

int cmd_bridge(const std::string& potentials_path, const std::string& kernels_dir,
               const std::string& out_kernel, const std::string& out_marginals) {
  std::vector<Kernel> chain = load_kernel_dir(kernels_dir);
  const Grid& grid = chain.front().grid;
  const int R = chain.front().regimes;
  const int n = grid.size();

  // boundary data from the solve stage
  std::ifstream pf(potentials_path);
  if (!pf) throw ConfigError("cannot open potentials file: " + potentials_path);
  std::vector<double> g(static_cast<std::size_t>(R) * n, 0.0);
  Marginal phihat0 = Marginal::zeros(grid, R);
  std::string line;
  std::getline(pf, line);  // header
  while (std::getline(pf, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        cells.push_back(cur);
        cur.clear();
      } else
        cur += c;
    }
    cells.push_back(cur);
    const std::string& side = cells[0];
    int regime = std::stoi(cells[1]);
    Pt x(grid.d);
    for (int a = 0; a < grid.d; ++a) x[a] = std::stod(cells[static_cast<std::size_t>(2 + a)]);
    int node = grid.locate(x);
    if (node < 0) throw ConfigError("potentials row off the grid");
    double phi = std::stod(cells[static_cast<std::size_t>(2 + grid.d)]);
    double phihat = std::stod(cells[static_cast<std::size_t>(3 + grid.d)]);
    if (side == "end")
      g[static_cast<std::size_t>(regime - 1) * n + node] = phi;
    else
      phihat0.at(regime, node) = phihat;
  }

  PotentialField phi = propagate_phi(g, chain);
  PotentialField phihat = propagate_phihat(phihat0, chain);

  // tilted end-to-end kernel
  Kernel composed = chain.front();
  for (std::size_t k = 1; k < chain.size(); ++k) composed = compose(composed, chain[k]);
  Kernel bridge = bridge_kernel(phi, composed);
  save_kernel(bridge, out_kernel);

  std::vector<std::pair<double, Marginal>> marginals;
  for (int m = 0; m < phi.nslices(); ++m) {
    double t = phi.times[static_cast<std::size_t>(m)];
    marginals.emplace_back(t, bridge_marginal(phi, phihat, t));
  }
  write_text_atomic(out_marginals, marginals_by_time_csv(marginals));
  std::cout << "bridge: wrote " << out_kernel << " and " << out_marginals << "\n";
  return 0;
}

// ---- verify ------------------------------------------------------------

struct VerifyFixture {
  ModelSpec model;
  PotentialField phi, phihat;
};

VerifyFixture build_usbp_fixture(const ConfigFile& cfg, const Grid& grid, int slices) {
  KillingModel km = load_killing_model(cfg);
  UsbpTarget target = load_usbp_target(cfg, km, grid);
  auto [phi, phihat] = usbp_potentials(km, target, grid, slices);
  return {km.to_model_spec(), std::move(phi), std::move(phihat)};
}

VerifyFixture build_gaussian_fixture(const ConfigFile& cfg, const Grid& grid, int slices) {
  ModelSpec model = load_model(cfg);
  if (model.nregimes() != 1 || model.has_jumps())
    throw UnsupportedModelError("verify: analytic fixtures need a single-regime diffusion or a "
                                "[usbp] config");
  Pt b = model.drift(0, Pt(model.d), 1);
  Mat sg = model.sigma_at(0, Pt(model.d), 1);

  auto params = std::map<std::string, double>{};
  std::vector<std::string> yvars;
  for (int k = 1; k <= grid.d; ++k) yvars.push_back("x" + std::to_string(k));
  Expr gexpr = Expr::parse(cfg.string_or("verify.g", "exp(-x1^2/4)"), yvars, params);
  std::vector<double> g(static_cast<std::size_t>(grid.size()));
  for (int k = 0; k < grid.size(); ++k) {
    Pt y = grid.point(k);
    std::span<const double> sp(y.c.data(), static_cast<std::size_t>(grid.d));
    g[static_cast<std::size_t>(k)] = std::max(0.0, gexpr.eval(sp));
  }

  std::vector<Kernel> to_T, from_0;
  for (int m = 0; m < slices; ++m) {
    double tm = model.T * m / slices;
    to_T.push_back(kernel_gaussian(grid, tm, model.T, b, sg));
    double sm = model.T * (m + 1) / slices;
    from_0.push_back(kernel_gaussian(grid, 0.0, sm, b, sg));
  }
  PotentialField phi = propagate_phi(g, to_T);

  Marginal start = Marginal::zeros(grid, 1);
  double s0 = cfg.number_or("verify.start_sigma", 0.5);
  Pt x0 = cfg.has("verify.x0") ? parse_point(cfg, "verify.x0", grid.d) : Pt(grid.d);
  double w = grid.cell_weight();
  for (int k = 0; k < grid.size(); ++k) {
    Pt y = grid.point(k);
    double q = 0;
    for (int a = 0; a < grid.d; ++a) q += (y[a] - x0[a]) * (y[a] - x0[a]);
    start.at(1, k) = std::exp(-0.5 * q / (s0 * s0)) * w;
  }
  double total = start.total();
  for (auto& v : start.mass) v /= total;
  PotentialField phihat = propagate_phihat(start, from_0);
  return {std::move(model), std::move(phi), std::move(phihat)};
}

int cmd_verify(const std::string& suite, const std::string& config, const std::string& grid_spec,
               int slices, const std::string& out) {
  ConfigFile cfg = ConfigFile::parse_file(config);
  Grid grid = load_grid(cfg, grid_spec);
  std::vector<ResidualReport> reports;

  if (suite == "adjoint") {
    ModelSpec model = cfg.has("usbp.V") ? load_killing_model(cfg).to_model_spec()
                                        : load_model(cfg);
    // random compactly supported pairs; relative bracket error per pair
    RngStream rng(20240901, 7);
    const int N = grid.size();
    const int R = model.nregimes();
    double worst = 0;
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> f(static_cast<std::size_t>(R) * N), g(f.size());
      auto bump = [&](std::vector<double>& field) {
        for (int i = 1; i <= R; ++i) {
          double c = grid.ax[0].lo + (0.3 + 0.4 * rng.uniform()) * (grid.ax[0].hi - grid.ax[0].lo);
          double s = 0.08 * (grid.ax[0].hi - grid.ax[0].lo) * (0.5 + rng.uniform());
          double a1 = rng.normal(), a2 = rng.normal();
          for (int k = 0; k < N; ++k) {
            Pt x = grid.point(k);
            double u = (x[0] - c) / s;
            field[static_cast<std::size_t>(i - 1) * N + k] =
                std::exp(-u * u) * (a1 + a2 * u);
          }
        }
      };
      bump(f);
      bump(g);
      double t = model.T * rng.uniform();
      std::vector<double> Lf = apply_L(f, model, grid, t);
      std::vector<double> Lsg = apply_Lstar(g, model, grid, t);
      double lhs = 0, rhs = 0, scale = 0;
      double w = grid.cell_weight();
      for (std::size_t k = 0; k < f.size(); ++k) {
        lhs += Lf[k] * g[k] * w;
        rhs += f[k] * Lsg[k] * w;
        scale += std::abs(Lf[k] * g[k]) * w;
      }
      worst = std::max(worst, std::abs(lhs - rhs) / std::max(scale, 1e-12));
    }
    ResidualReport rep;
    rep.identity = "adjoint:<Lf,g> = <f,L*g>";
    rep.grid_h = grid.ax[0].h();
    rep.max_resid = worst;
    reports.push_back(rep);
  } else {
    auto build = [&](const Grid& gr, int sl) {
      return cfg.has("usbp.V") ? build_usbp_fixture(cfg, gr, sl)
                               : build_gaussian_fixture(cfg, gr, sl);
    };
    VerifyFixture coarse = build(grid, slices);
    Grid fine_grid = grid;
    for (int a = 0; a < grid.d; ++a) fine_grid.ax[a].n *= 2;
    VerifyFixture fine = build(fine_grid, slices * 2);

    auto run = [&](const std::string& which) {
      ResidualReport rc, rf;
      if (which == "backward") {
        rc = check_backward(coarse.phi, coarse.model);
        rf = check_backward(fine.phi, fine.model);
      } else if (which == "forward") {
        rc = check_forward(coarse.phihat, coarse.model);
        rf = check_forward(fine.phihat, fine.model);
      } else {
        rc = check_bridge_forward(coarse.phi, coarse.phihat, coarse.model);
        rf = check_bridge_forward(fine.phi, fine.phihat, fine.model);
      }
      reports.push_back(rc);
      reports.push_back(with_ratio(rc, rf));
    };
    if (suite == "backward" || suite == "forward" || suite == "bridge")
      run(suite);
    else
      throw ConfigError("unknown verify suite '" + suite + "'");
  }

  write_text_atomic(out, residual_report_json(reports));
  std::cout << "verify: wrote " << out << "\n";
  return 0;
}

// ---- usbp --------------------------------------------------------------

int cmd_usbp(const std::string& config, const std::string& grid_spec, int slices,
             const std::string& out_dir) {
  ConfigFile cfg = ConfigFile::parse_file(config);
  Grid grid = load_grid(cfg, grid_spec);
  KillingModel km = load_killing_model(cfg);
  UsbpTarget target = load_usbp_target(cfg, km, grid);
  fs::create_directories(out_dir);

  Kernel two = usbp_two_regime_kernel(km, grid, 0.0, km.T);
  save_kernel(two, out_dir + "/kernel_0T.bin");

  auto [phi, phihat] = usbp_potentials(km, target, grid, slices);

  {
    std::ostringstream os;
    os << "t,regime,x1,phi,phihat\n";
    for (int m = 0; m <= slices; ++m)
      for (int i = 1; i <= 2; ++i)
        for (int k = 0; k < grid.size(); ++k)
          os << format_g17(phi.times[static_cast<std::size_t>(m)]) << "," << i << ","
             << format_g17(grid.point(k)[0]) << "," << format_g17(phi.value(m, i, k)) << ","
             << format_g17(phihat.value(m, i, k)) << "\n";
    write_text_atomic(out_dir + "/potentials.csv", os.str());
  }

  // bridge marginals per slice
  {
    std::vector<std::pair<double, Marginal>> slices_out;
    for (int m = 0; m <= slices; ++m) {
      double t = phi.times[static_cast<std::size_t>(m)];
      slices_out.emplace_back(t, bridge_marginal(phi, phihat, t));
    }
    write_text_atomic(out_dir + "/bridge_marginals.csv", marginals_by_time_csv(slices_out));
  }
  {
    std::vector<std::array<double, 3>> rows;
    for (int m = 0; m <= slices; ++m) {
      double t = phi.times[static_cast<std::size_t>(m)];
      if (t >= km.T) continue;
      for (int k = 0; k < grid.size(); ++k) {
        Pt x = grid.point(k);
        double phi_a = phi.value(m, KillingModel::kActive, k);
        double phi_d = phi.value(m, KillingModel::kDead, k);
        if (!(phi_a > 0)) continue;
        double slot = t;
        rows.push_back({t, x[0], phi_d / phi_a * km.V.eval(std::span<const double>(&slot, 1))});
      }
    }
    write_text_atomic(out_dir + "/killing_rate.csv", killing_rate_csv(rows));
  }
  {
    // consistency report: mass bookkeeping per slice
    nlohmann::json j;
    j["schema"] = "rsb.usbp-report/1";
    j["kl_to_reference"] = target.kl_to_reference;
    j["sup_g"] = target.sup_g;
    auto& masses = j["slice_mass"];
    masses = nlohmann::json::array();
    double prev_dead = 0;
    bool monotone = true;
    for (int m = 0; m <= slices; ++m) {
      double t = phi.times[static_cast<std::size_t>(m)];
      Marginal mt = bridge_marginal(phi, phihat, t);
      double active = 0, dead = 0;
      for (int k = 0; k < grid.size(); ++k) {
        active += mt.at(KillingModel::kActive, k);
        dead += mt.at(KillingModel::kDead, k);
      }
      for (const auto& dd : mt.diracs) (dd.regime == KillingModel::kActive ? active : dead) += dd.m;
      if (dead < prev_dead - 1e-9) monotone = false;
      prev_dead = dead;
      masses.push_back({{"t", t}, {"active", active}, {"dead", dead}});
    }
    j["dead_mass_nondecreasing"] = monotone;
    write_text_atomic(out_dir + "/consistency.json", j.dump(2) + "\n");
  }
  std::cout << "usbp: wrote artifact set to " << out_dir << "\n";
  return 0;
}

// ---- pipeline ----------------------------------------------------------

int cmd_pipeline(const std::string& config) {
  ConfigFile cfg = ConfigFile::parse_file(config);
  const auto& stages_val = cfg.get("experiment.stages").array();
  std::string out_dir = cfg.string_or("experiment.out_dir", "out");
  fs::create_directories(out_dir);

  nlohmann::json manifest;
  manifest["schema"] = "rsb.manifest/1";
  manifest["version"] = kVersion;
  manifest["config_hash"] = cfg.content_hash();
  manifest["seed"] = static_cast<std::uint64_t>(cfg.number_or("experiment.seed", 1));
  auto& stage_list = manifest["stages"];
  stage_list = nlohmann::json::array();

  std::uint64_t seed = static_cast<std::uint64_t>(cfg.number_or("experiment.seed", 1));

  for (const auto& sv : stages_val) {
    std::string stage = sv.str();
    auto t0 = std::chrono::steady_clock::now();
    std::vector<std::string> artifacts;

    if (stage == "kernel") {
      Grid grid = load_grid(cfg);
      Kernel k = build_kernel(cfg, grid, cfg.number_or("kernel.t", 0.0),
                              cfg.number_or("kernel.s", cfg.number_or("model.T", 1.0)),
                              cfg.string_or("kernel.method", "auto"),
                              static_cast<std::int64_t>(cfg.number_or("kernel.mc_paths", 10000)),
                              cfg.number_or("kernel.dt", 0.01), seed);
      save_kernel(k, out_dir + "/K.bin");
      artifacts.push_back(out_dir + "/K.bin");
    } else if (stage == "solve") {
      Kernel K = load_kernel(out_dir + "/K.bin");
      Marginal rho0 = read_marginal_csv(cfg.string("solve.rho0"), K.grid, K.regimes);
      Marginal rhoT = read_marginal_csv(cfg.string("solve.rhoT"), K.grid, K.regimes);
      EndpointKernel ek = restrict_kernel(K, rho0, rhoT);
      auto [bp, rep] = iterate_C(ek, cfg.number_or("solve.tol", 1e-10),
                                 static_cast<int>(cfg.number_or("solve.max_iters", 10000)));
      write_text_atomic(out_dir + "/potentials.csv", potentials_csv(bp, ek, K.grid));
      write_text_atomic(out_dir + "/conv.csv", convergence_csv(rep));
      artifacts.push_back(out_dir + "/potentials.csv");
      artifacts.push_back(out_dir + "/conv.csv");
      if (rep.status != ConvergenceReport::Status::converged)
        throw NumericError("pipeline stage solve: no convergence");
    } else if (stage == "bridge") {
      Grid grid = load_grid(cfg);
      int slices = static_cast<int>(cfg.number_or("bridge.slices", 8));
      double T = cfg.number_or("model.T", 1.0);
      std::string chain_dir = out_dir + "/chain";
      fs::create_directories(chain_dir);
      for (int m = 0; m < slices; ++m) {
        Kernel k = build_kernel(cfg, grid, T * m / slices, T * (m + 1) / slices,
                                cfg.string_or("kernel.method", "auto"),
                                static_cast<std::int64_t>(cfg.number_or("kernel.mc_paths", 10000)),
                                cfg.number_or("kernel.dt", 0.01), seed);
        char name[32];
        std::snprintf(name, sizeof name, "/K%03d.bin", m);
        save_kernel(k, chain_dir + name);
      }
      cmd_bridge(out_dir + "/potentials.csv", chain_dir, out_dir + "/bridge_kernel.bin",
                 out_dir + "/bridge_marginals.csv");
      artifacts = {out_dir + "/bridge_kernel.bin", out_dir + "/bridge_marginals.csv"};
    } else if (stage == "verify") {
      cmd_verify(cfg.string_or("verify.suite", "backward"), config, "",
                 static_cast<int>(cfg.number_or("verify.slices", 8)),
                 out_dir + "/verify_report.json");
      artifacts = {out_dir + "/verify_report.json"};
    } else if (stage == "usbp") {
      cmd_usbp(config, "", static_cast<int>(cfg.number_or("usbp.slices", 32)), out_dir);
      artifacts = {out_dir + "/kernel_0T.bin", out_dir + "/bridge_marginals.csv",
                   out_dir + "/killing_rate.csv", out_dir + "/consistency.json"};
    } else if (stage == "simulate") {
      ModelSpec model = cfg.has("usbp.V") ? load_killing_model(cfg).to_model_spec()
                                          : load_model(cfg);
      Pt x0 = cfg.has("simulate.x0") ? parse_point(cfg, "simulate.x0", model.d) : Pt(model.d);
      int paths = static_cast<int>(cfg.number_or("simulate.paths", 100));
      double dt = cfg.number_or("simulate.dt", 0.001);
      std::string csv = path_csv_header(model.d);
      for (int p = 0; p < paths; ++p) {
        RngStream rng(seed, static_cast<std::uint64_t>(p));
        SamplePath path = simulate_reference(model, 0.0, x0,
                                             static_cast<int>(cfg.number_or("simulate.regime", 1)),
                                             dt, rng);
        append_path_csv(csv, p, path);
      }
      write_text_atomic(out_dir + "/paths.csv", csv);
      artifacts.push_back(out_dir + "/paths.csv");
    } else {
      throw ConfigError("pipeline: unknown stage '" + stage + "'");
    }

    auto t1 = std::chrono::steady_clock::now();
    nlohmann::json sj;
    sj["name"] = stage;
    sj["wall_seconds"] = std::chrono::duration<double>(t1 - t0).count();
    auto& aj = sj["artifacts"];
    aj = nlohmann::json::array();
    for (const auto& a : artifacts) aj.push_back({{"path", a}, {"hash", file_hash(a)}});
    stage_list.push_back(sj);
  }

  write_text_atomic(out_dir + "/manifest.json", manifest.dump(2) + "\n");
  std::cout << "pipeline: completed " << stages_val.size() << " stages; manifest at " << out_dir
            << "/manifest.json\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Schrodinger bridge solver for regime-switching jump diffusions"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "simulate reference paths");
  std::string sim_config, sim_out = "paths.csv";
  int sim_paths = 100;
  double sim_dt = 1e-3;
  std::uint64_t sim_seed = 1;
  sim->add_option("--config", sim_config)->required();
  sim->add_option("--paths", sim_paths);
  sim->add_option("--dt", sim_dt);
  sim->add_option("--seed", sim_seed);
  sim->add_option("--out", sim_out);

  // kernel
  auto* ker = app.add_subcommand("kernel", "build a transition kernel");
  std::string ker_config, ker_grid, ker_out = "K.bin", ker_method = "auto";
  double ker_t = 0.0, ker_s = 1.0, ker_dt = 0.01;
  std::int64_t ker_paths = 10000;
  std::uint64_t ker_seed = 1;
  ker->add_option("--config", ker_config)->required();
  ker->add_option("--grid", ker_grid);
  ker->add_option("--t", ker_t);
  ker->add_option("--s", ker_s);
  ker->add_option("--out", ker_out);
  ker->add_option("--method", ker_method);
  ker->add_option("--mc-paths", ker_paths);
  ker->add_option("--dt", ker_dt);
  ker->add_option("--seed", ker_seed);

  // solve
  auto* sol = app.add_subcommand("solve", "solve the static system by Sinkhorn iteration");
  std::string sol_kernel, sol_rho0, sol_rhoT, sol_out = "potentials.csv", sol_report = "conv.csv";
  double sol_tol = 1e-10;
  int sol_iters = 10000;
  sol->add_option("--kernel", sol_kernel)->required();
  sol->add_option("--rho0", sol_rho0)->required();
  sol->add_option("--rhoT", sol_rhoT)->required();
  sol->add_option("--tol", sol_tol);
  sol->add_option("--max-iters", sol_iters);
  sol->add_option("--out", sol_out);
  sol->add_option("--report", sol_report);

  // bridge
  auto* bri = app.add_subcommand("bridge", "assemble bridge kernel and marginals");
  std::string bri_pot, bri_kernels, bri_out = "bridge_kernel.bin", bri_marg = "marginals.csv";
  bri->add_option("--potentials", bri_pot)->required();
  bri->add_option("--kernels", bri_kernels)->required();
  bri->add_option("--out", bri_out);
  bri->add_option("--marginals", bri_marg);

  // verify
  auto* ver = app.add_subcommand("verify", "run operator identity checks");
  std::string ver_suite, ver_config, ver_grid, ver_out = "report.json";
  int ver_slices = 16;
  ver->add_option("--suite", ver_suite)->required();
  ver->add_option("--config", ver_config)->required();
  ver->add_option("--grid", ver_grid);
  ver->add_option("--slices", ver_slices);
  ver->add_option("--out", ver_out);

  // usbp
  auto* usb = app.add_subcommand("usbp", "end-to-end killing-model artifact set");
  std::string usb_config, usb_grid, usb_out = "usbp_out";
  int usb_slices = 32;
  usb->add_option("--config", usb_config)->required();
  usb->add_option("--grid", usb_grid);
  usb->add_option("--slices", usb_slices);
  usb->add_option("--out", usb_out);

  // pipeline
  auto* pip = app.add_subcommand("pipeline", "run a staged experiment");
  std::string pip_config;
  pip->add_option("--config", pip_config)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(sim_config, sim_paths, sim_dt, sim_seed, sim_out);
    if (ker->parsed())
      return cmd_kernel(ker_config, ker_grid, ker_t, ker_s, ker_out, ker_method, ker_paths,
                        ker_dt, ker_seed);
    if (sol->parsed())
      return cmd_solve(sol_kernel, sol_rho0, sol_rhoT, sol_tol, sol_iters, sol_out, sol_report);
    if (bri->parsed()) return cmd_bridge(bri_pot, bri_kernels, bri_out, bri_marg);
    if (ver->parsed()) return cmd_verify(ver_suite, ver_config, ver_grid, ver_slices, ver_out);
    if (usb->parsed()) return cmd_usbp(usb_config, usb_grid, usb_slices, usb_out);
    if (pip->parsed()) return cmd_pipeline(pip_config);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const UnsupportedModelError& e) {
    std::cerr << "unsupported model: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
