#include "rsb/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace rsb {

double ConfigValue::num() const {
  if (!is_number()) throw ConfigError("config value is not a number");
  return std::get<double>(v);
}
bool ConfigValue::boolean() const {
  if (!std::holds_alternative<bool>(v)) throw ConfigError("config value is not a boolean");
  return std::get<bool>(v);
}
const std::string& ConfigValue::str() const {
  if (!is_string()) throw ConfigError("config value is not a string");
  return std::get<std::string>(v);
}
const std::vector<ConfigValue>& ConfigValue::array() const {
  if (!is_array()) throw ConfigError("config value is not an array");
  return std::get<std::vector<ConfigValue>>(v);
}

namespace {

struct Cursor {
  const std::string& s;
  std::size_t pos = 0;
  int line = 1;

  bool done() const { return pos >= s.size(); }
  char peek() const { return done() ? '\0' : s[pos]; }
  char take() {
    char c = s[pos++];
    if (c == '\n') ++line;
    return c;
  }
  void skip_inline_ws() {
    while (!done() && (s[pos] == ' ' || s[pos] == '\t' || s[pos] == '\r')) ++pos;
  }
  void skip_ws_and_comments() {
    for (;;) {
      skip_inline_ws();
      if (!done() && s[pos] == '#') {
        while (!done() && s[pos] != '\n') ++pos;
        continue;
      }
      if (!done() && s[pos] == '\n') {
        take();
        continue;
      }
      return;
    }
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError(msg + " (line " + std::to_string(line) + ")");
  }
};

ConfigValue parse_value(Cursor& c);

ConfigValue parse_array(Cursor& c) {
  c.take();  // '['
  std::vector<ConfigValue> items;
  for (;;) {
    c.skip_ws_and_comments();
    if (c.peek() == ']') {
      c.take();
      break;
    }
    items.push_back(parse_value(c));
    c.skip_ws_and_comments();
    if (c.peek() == ',') {
      c.take();
      continue;
    }
    if (c.peek() == ']') {
      c.take();
      break;
    }
    c.fail("expected ',' or ']' in array");
  }
  ConfigValue v;
  v.v = std::move(items);
  return v;
}

ConfigValue parse_value(Cursor& c) {
  c.skip_inline_ws();
  char ch = c.peek();
  ConfigValue v;
  if (ch == '"') {
    c.take();
    std::string out;
    while (!c.done() && c.peek() != '"') {
      char q = c.take();
      if (q == '\\' && !c.done()) q = c.take();
      out += q;
    }
    if (c.done()) c.fail("unterminated string");
    c.take();
    v.v = out;
    return v;
  }
  if (ch == '[') return parse_array(c);
  std::string tok;
  while (!c.done() && c.peek() != '\n' && c.peek() != ',' && c.peek() != ']' && c.peek() != '#') {
    tok += c.take();
  }
  while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t' || tok.back() == '\r'))
    tok.pop_back();
  if (tok == "true") {
    v.v = true;
    return v;
  }
  if (tok == "false") {
    v.v = false;
    return v;
  }
  try {
    std::size_t used = 0;
    double d = std::stod(tok, &used);
    if (used != tok.size()) c.fail("malformed value '" + tok + "'");
    v.v = d;
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    c.fail("malformed value '" + tok + "'");
  }
}

}  // namespace

ConfigFile ConfigFile::parse_string(const std::string& text, const std::string& origin) {
  ConfigFile cfg;
  cfg.text_ = text;
  Cursor c{text};
  std::string section;
  for (;;) {
    c.skip_ws_and_comments();
    if (c.done()) break;
    if (c.peek() == '[') {
      c.take();
      std::string name;
      while (!c.done() && c.peek() != ']') name += c.take();
      if (c.done()) c.fail(origin + ": unterminated section header");
      c.take();
      section = name;
      continue;
    }
    std::string key;
    while (!c.done() && c.peek() != '=' && c.peek() != '\n') key += c.take();
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    if (c.peek() != '=') c.fail(origin + ": expected '=' after key '" + key + "'");
    c.take();
    ConfigValue value = parse_value(c);
    std::string full = section.empty() ? key : section + "." + key;
    if (cfg.entries_.count(full)) c.fail(origin + ": duplicate key '" + full + "'");
    cfg.entries_[full] = std::move(value);
  }
  return cfg;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_string(ss.str(), path);
}

bool ConfigFile::has(const std::string& key) const { return entries_.count(key) > 0; }

const ConfigValue& ConfigFile::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("missing config key '" + key + "'");
  return it->second;
}

double ConfigFile::number(const std::string& key) const { return get(key).num(); }
double ConfigFile::number_or(const std::string& key, double fallback) const {
  return has(key) ? number(key) : fallback;
}
std::string ConfigFile::string(const std::string& key) const { return get(key).str(); }
std::string ConfigFile::string_or(const std::string& key, const std::string& fallback) const {
  return has(key) ? string(key) : fallback;
}
bool ConfigFile::bool_or(const std::string& key, bool fallback) const {
  return has(key) ? get(key).boolean() : fallback;
}

std::vector<std::string> ConfigFile::keys_under(const std::string& prefix) const {
  std::vector<std::string> out;
  std::string p = prefix + ".";
  for (const auto& [k, v] : entries_) {
    if (k.rfind(p, 0) != 0) continue;
    std::string rest = k.substr(p.size());
    if (rest.find('.') == std::string::npos) out.push_back(rest);
  }
  return out;
}

std::uint64_t ConfigFile::content_hash() const {
  Fnv1a h;
  h.add(text_);
  return h.h;
}

namespace {

std::map<std::string, double> load_params(const ConfigFile& cfg) {
  std::map<std::string, double> params;
  for (const auto& name : cfg.keys_under("params")) params[name] = cfg.number("params." + name);
  return params;
}

std::vector<std::string> tx_vars(int d) {
  std::vector<std::string> vars = {"t"};
  for (int k = 1; k <= d; ++k) vars.push_back("x" + std::to_string(k));
  return vars;
}

std::vector<std::string> txz_vars(int d, int ell) {
  auto vars = tx_vars(d);
  for (int k = 1; k <= ell; ++k) vars.push_back("z" + std::to_string(k));
  return vars;
}

std::vector<Expr> parse_expr_array(const ConfigFile& cfg, const std::string& key, int expect,
                                   const std::vector<std::string>& vars,
                                   const std::map<std::string, double>& params) {
  const auto& arr = cfg.get(key).array();
  if (static_cast<int>(arr.size()) != expect)
    throw ConfigError("'" + key + "' must have " + std::to_string(expect) + " entries");
  std::vector<Expr> out;
  out.reserve(arr.size());
  for (const auto& item : arr) out.push_back(Expr::parse(item.str(), vars, params));
  return out;
}

}  // namespace

ModelSpec load_model(const ConfigFile& cfg) {
  ModelSpec m;
  m.d = static_cast<int>(cfg.number_or("model.d", 1));
  m.T = cfg.number_or("model.T", 1.0);
  auto params = load_params(cfg);

  if (cfg.has("model.regimes")) {
    const auto& arr = cfg.get("model.regimes").array();
    m.regimes.count = static_cast<int>(arr.size());
    for (const auto& it : arr) m.regimes.labels.push_back(it.str());
  } else {
    m.regimes.count = static_cast<int>(cfg.number_or("model.regime_count", 1));
    for (int i = 1; i <= m.regimes.count; ++i) m.regimes.labels.push_back("r" + std::to_string(i));
  }
  const int R = m.regimes.count;
  auto vars = tx_vars(m.d);

  // jump measure first: gamma expressions need the z slot count
  if (cfg.has("model.nu.atoms")) {
    const auto& atoms = cfg.get("model.nu.atoms").array();
    for (const auto& a : atoms) {
      const auto& pair = a.array();
      if (pair.size() < 2) throw ConfigError("nu atom must be [z..., weight]");
      JumpAtom atom;
      atom.z.d = static_cast<int>(pair.size()) - 1;
      for (int k = 0; k < atom.z.d; ++k) atom.z[k] = pair[static_cast<std::size_t>(k)].num();
      atom.weight = pair.back().num();
      if (m.nu.ell == 0) m.nu.ell = atom.z.d;
      m.nu.atoms.push_back(atom);
    }
  }
  m.nu.compensate_small = cfg.bool_or("model.nu.compensate_small", false);
  auto gvars = txz_vars(m.d, std::max(m.nu.ell, 1));

  m.b.resize(R);
  m.sigma.resize(R);
  bool any_gamma = false;
  for (int i = 1; i <= R; ++i) {
    const std::string& label = m.regimes.labels[static_cast<std::size_t>(i - 1)];
    m.b[i - 1] = parse_expr_array(cfg, "model.b." + label + ".exprs", m.d, vars, params);
    m.sigma[i - 1] =
        parse_expr_array(cfg, "model.sigma." + label + ".exprs", m.d * m.d, vars, params);
    if (cfg.has("model.gamma." + label + ".exprs")) any_gamma = true;
  }
  if (any_gamma) {
    m.gamma.resize(R);
    for (int i = 1; i <= R; ++i) {
      const std::string& label = m.regimes.labels[static_cast<std::size_t>(i - 1)];
      std::string key = "model.gamma." + label + ".exprs";
      if (cfg.has(key)) m.gamma[i - 1] = parse_expr_array(cfg, key, m.d, gvars, params);
      else
        for (int k = 0; k < m.d; ++k) m.gamma[i - 1].push_back(Expr::constant(0.0));
    }
  }

  m.Q.resize(static_cast<std::size_t>(R) * R);
  for (int i = 1; i <= R; ++i)
    for (int j = 1; j <= R; ++j) {
      if (i == j) continue;
      std::string key = "model.Q.q_" + std::to_string(i) + std::to_string(j);
      if (cfg.has(key)) m.Q[static_cast<std::size_t>(i - 1) * R + (j - 1)] =
          Expr::parse(cfg.string(key), vars, params);
    }

  bool any_psi = false;
  for (int i = 1; i <= R && !any_psi; ++i)
    for (int j = 1; j <= R && !any_psi; ++j)
      if (cfg.has("model.psi.psi_" + std::to_string(i) + std::to_string(j))) any_psi = true;
  if (any_psi) {
    m.psi.resize(static_cast<std::size_t>(R) * R);
    for (int i = 1; i <= R; ++i)
      for (int j = 1; j <= R; ++j) {
        if (i == j) continue;
        std::string key = "model.psi.psi_" + std::to_string(i) + std::to_string(j);
        if (!cfg.has(key)) continue;
        const auto& arr = cfg.get(key).array();
        if (static_cast<int>(arr.size()) != m.d)
          throw ConfigError("'" + key + "' must have d entries");
        for (const auto& it : arr)
          m.psi[static_cast<std::size_t>(i - 1) * R + (j - 1)].push_back(
              Expr::parse(it.str(), vars, params));
      }
  }

  m.validate();
  return m;
}

KillingModel load_killing_model(const ConfigFile& cfg) {
  KillingModel km;
  km.base = load_model(cfg);
  if (km.base.nregimes() != 1)
    throw ConfigError("usbp config: the [model] section must declare one regime");
  km.T = km.base.T;
  km.V_source = cfg.string("usbp.V");
  km.V = Expr::parse(km.V_source, {"t"}, load_params(cfg));
  const auto& x0 = cfg.get("usbp.x0").array();
  if (static_cast<int>(x0.size()) != km.base.d)
    throw ConfigError("usbp.x0 must have d coordinates");
  km.x0.d = km.base.d;
  for (int k = 0; k < km.base.d; ++k) km.x0[k] = x0[static_cast<std::size_t>(k)].num();
  km.validate();
  return km;
}

UsbpTarget load_usbp_target(const ConfigFile& cfg, const KillingModel& km, const Grid& grid) {
  auto params = load_params(cfg);
  std::vector<std::string> yvars;
  for (int k = 1; k <= grid.d; ++k) yvars.push_back("x" + std::to_string(k));
  Expr active = Expr::parse(cfg.string("usbp.target_active"), yvars, params);
  Expr dead = Expr::parse(cfg.string("usbp.target_dead"), yvars, params);
  double dead_fraction = cfg.number("usbp.dead_fraction");

  const int n = grid.size();
  std::vector<double> sa(static_cast<std::size_t>(n)), sd(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    Pt y = grid.point(k);
    std::span<const double> sp(y.c.data(), static_cast<std::size_t>(grid.d));
    sa[static_cast<std::size_t>(k)] = std::max(0.0, active.eval(sp));
    sd[static_cast<std::size_t>(k)] = std::max(0.0, dead.eval(sp));
  }
  return make_target(km, grid, sa, sd, dead_fraction);
}

Grid load_grid(const ConfigFile& cfg, const std::string& override_spec) {
  if (!override_spec.empty()) return Grid::parse(override_spec);
  if (cfg.has("grid.spec")) return Grid::parse(cfg.string("grid.spec"));
  throw ConfigError("no grid specified (use [grid] spec = \"lo:hi:n\" or --grid)");
}

}  // namespace rsb
