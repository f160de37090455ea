#include "rsb/grid.hpp"

#include <cstdlib>

namespace rsb {

namespace {

GridAxis parse_axis(const std::string& s) {
  auto p1 = s.find(':');
  auto p2 = s.find(':', p1 == std::string::npos ? p1 : p1 + 1);
  if (p1 == std::string::npos || p2 == std::string::npos)
    throw ConfigError("grid axis spec must be lo:hi:n, got '" + s + "'");
  GridAxis a;
  try {
    a.lo = std::stod(s.substr(0, p1));
    a.hi = std::stod(s.substr(p1 + 1, p2 - p1 - 1));
    a.n = std::stoi(s.substr(p2 + 1));
  } catch (const std::exception&) {
    throw ConfigError("malformed grid axis spec '" + s + "'");
  }
  return a;
}

}  // namespace

Grid Grid::parse(const std::string& spec) {
  auto comma = spec.find(',');
  if (comma == std::string::npos) {
    GridAxis a = parse_axis(spec);
    return make1d(a.lo, a.hi, a.n);
  }
  return make2d(parse_axis(spec.substr(0, comma)), parse_axis(spec.substr(comma + 1)));
}

Marginal Marginal::dirac(const Grid& g, int R, int regime, const Pt& x, double m) {
  Marginal out = zeros(g, R);
  int node = g.locate(x);
  if (node < 0) throw ConfigError("dirac point is off the grid");
  out.diracs.push_back({regime, node, m});
  return out;
}

}  // namespace rsb
