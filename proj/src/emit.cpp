#include "rsb/emit.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace rsb {

void write_text_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".partial";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw ConfigError("cannot open output file: " + tmp);
    f << content;
    if (!f) throw NumericError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::string marginal_csv(const Marginal& m) {
  std::ostringstream os;
  os << "regime";
  for (int a = 0; a < m.grid.d; ++a) os << ",x" << (a + 1);
  os << ",weight,kind\n";
  for (const auto& dd : m.diracs) {
    Pt p = m.grid.point(dd.node);
    os << dd.regime;
    for (int a = 0; a < m.grid.d; ++a) os << "," << format_g17(p[a]);
    os << "," << format_g17(dd.m) << ",dirac\n";
  }
  for (int i = 1; i <= m.regimes; ++i)
    for (int k = 0; k < m.grid.size(); ++k) {
      double v = m.at(i, k);
      if (v == 0.0) continue;
      Pt p = m.grid.point(k);
      os << i;
      for (int a = 0; a < m.grid.d; ++a) os << "," << format_g17(p[a]);
      os << "," << format_g17(v) << ",cell\n";
    }
  return os.str();
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

Marginal read_marginal_csv(const std::string& path, const Grid& grid, int regimes) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open marginal file: " + path);
  Marginal m = Marginal::zeros(grid, regimes);
  std::string line;
  if (!std::getline(f, line)) throw ConfigError("empty marginal file: " + path);
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) < grid.d + 2)
      throw ConfigError(path + ": short row at line " + std::to_string(lineno));
    int regime = std::stoi(cells[0]);
    Pt x(grid.d);
    for (int a = 0; a < grid.d; ++a) x[a] = std::stod(cells[static_cast<std::size_t>(1 + a)]);
    double weight = std::stod(cells[static_cast<std::size_t>(1 + grid.d)]);
    std::string kind =
        static_cast<int>(cells.size()) > grid.d + 2 ? cells[static_cast<std::size_t>(2 + grid.d)] : "cell";
    int node = grid.locate(x);
    if (node < 0) throw ConfigError(path + ": point off the grid at line " + std::to_string(lineno));
    if (regime < 1 || regime > regimes)
      throw ConfigError(path + ": bad regime at line " + std::to_string(lineno));
    if (kind == "dirac")
      m.diracs.push_back({regime, node, weight});
    else
      m.at(regime, node) += weight;
  }
  return m;
}

std::string convergence_csv(const ConvergenceReport& report) {
  std::ostringstream os;
  os << "iter,residual\n";
  for (std::size_t k = 0; k < report.residuals.size(); ++k)
    os << (k + 1) << "," << format_g17(report.residuals[k]) << "\n";
  return os.str();
}

std::string potentials_csv(const BoundaryPotentials& bp, const EndpointKernel& ek,
                           const Grid& grid) {
  std::ostringstream os;
  os << "side,regime";
  for (int a = 0; a < grid.d; ++a) os << ",x" << (a + 1);
  os << ",phi,phihat\n";
  for (std::size_t r = 0; r < ek.n_start(); ++r) {
    Pt p = grid.point(ek.s_node[r]);
    os << "start," << ek.s_regime[r];
    for (int a = 0; a < grid.d; ++a) os << "," << format_g17(p[a]);
    os << "," << format_g17(bp.phi0[r]) << "," << format_g17(bp.phihat0_mass[r]) << "\n";
  }
  for (std::size_t c = 0; c < ek.n_end(); ++c) {
    Pt p = grid.point(ek.e_node[c]);
    os << "end," << ek.e_regime[c];
    for (int a = 0; a < grid.d; ++a) os << "," << format_g17(p[a]);
    os << "," << format_g17(bp.phiT[c]) << "," << format_g17(bp.phihatT[c]) << "\n";
  }
  return os.str();
}

std::string path_csv_header(int d) {
  std::ostringstream os;
  os << "path_id,t";
  for (int a = 0; a < d; ++a) os << ",x" << (a + 1);
  os << ",regime,event_kind\n";
  return os.str();
}

void append_path_csv(std::string& out, int path_id, const SamplePath& path) {
  const int d = path.states.front().x.d;
  // event kinds per step (jump+switch can coincide within one step)
  std::vector<std::string> kinds(path.states.size(), "");
  for (const auto& ev : path.events) {
    std::string tag = ev.kind == SamplePath::EventKind::jump ? "jump" : "switch";
    auto& cell = kinds[static_cast<std::size_t>(ev.step) + 1];
    cell = cell.empty() ? tag : cell + "+" + tag;
  }
  for (std::size_t k = 0; k < path.states.size(); ++k) {
    const auto& st = path.states[k];
    out += std::to_string(path_id);
    out += ',';
    out += format_g17(st.t);
    for (int a = 0; a < d; ++a) {
      out += ',';
      out += format_g17(st.x[a]);
    }
    out += ',';
    out += std::to_string(st.regime);
    out += ',';
    out += kinds[k].empty() ? (k == 0 ? "start" : "diffstep") : kinds[k];
    out += '\n';
  }
}

std::string marginals_by_time_csv(const std::vector<std::pair<double, Marginal>>& slices) {
  std::ostringstream os;
  if (slices.empty()) return "t\n";
  const Grid& g = slices.front().second.grid;
  os << "t,regime";
  for (int a = 0; a < g.d; ++a) os << ",x" << (a + 1);
  os << ",density\n";
  for (const auto& [t, m] : slices) {
    const double w = m.grid.cell_weight();
    for (const auto& dd : m.diracs) {
      Pt p = m.grid.point(dd.node);
      os << format_g17(t) << "," << dd.regime;
      for (int a = 0; a < g.d; ++a) os << "," << format_g17(p[a]);
      os << "," << format_g17(dd.m / w) << "\n";
    }
    for (int i = 1; i <= m.regimes; ++i)
      for (int k = 0; k < m.grid.size(); ++k) {
        Pt p = m.grid.point(k);
        os << format_g17(t) << "," << i;
        for (int a = 0; a < g.d; ++a) os << "," << format_g17(p[a]);
        os << "," << format_g17(m.at(i, k) / w) << "\n";
      }
  }
  return os.str();
}

std::string residual_report_json(const std::vector<ResidualReport>& reports) {
  nlohmann::json out;
  out["schema"] = "rsb.residual-report/1";
  auto& arr = out["reports"];
  arr = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json j;
    j["identity"] = r.identity;
    j["grid_h"] = r.grid_h;
    j["dt"] = r.dt;
    j["max_residual"] = r.max_resid;
    j["l2_residual"] = r.l2_resid;
    j["refinement_ratio"] = r.ratio;
    j["excluded_nodes"] = r.excluded_nodes;
    j["evaluated_nodes"] = r.evaluated_nodes;
    arr.push_back(j);
  }
  return out.dump(2) + "\n";
}

std::string killing_rate_csv(const std::vector<std::array<double, 3>>& rows) {
  std::ostringstream os;
  os << "t,x1,rate\n";
  for (const auto& r : rows)
    os << format_g17(r[0]) << "," << format_g17(r[1]) << "," << format_g17(r[2]) << "\n";
  return os.str();
}

std::uint64_t file_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot hash missing file: " + path);
  Fnv1a h;
  char buf[8192];
  while (f.read(buf, sizeof buf) || f.gcount() > 0)
    h.bytes(buf, static_cast<std::size_t>(f.gcount()));
  return h.h;
}

}  // namespace rsb
