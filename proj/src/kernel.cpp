#include "rsb/kernel.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "rsb/quadrature.hpp"
#include "rsb/simulate.hpp"
#include "rsb/threads.hpp"

namespace rsb {

double Kernel::row_mass(int i, int x) const {
  const int n = rows();
  const double w = grid.cell_weight();
  const double* row = values.data() + static_cast<std::size_t>(row_index(i, x)) * n;
  double s = 0;
  for (int c = 0; c < n; ++c) s += row[c];
  return s * w;
}

void Kernel::record_truncation_leak() {
  for (int i = 1; i <= regimes; ++i)
    for (int x = 0; x < grid.size(); ++x) {
      double m = row_mass(i, x);
      leak[static_cast<std::size_t>(row_index(i, x))] = std::max(0.0, 1.0 - m);
    }
}

std::uint64_t Kernel::content_hash() const {
  Fnv1a h;
  grid.hash_into(h);
  h.add(regimes);
  h.add(t);
  h.add(s);
  h.add(static_cast<std::uint64_t>(prov));
  h.add(static_cast<std::int64_t>(mc_paths));
  for (double v : values) h.add(v);
  return h.h;
}

Kernel kernel_gaussian(const Grid& grid, double t, double s, const Pt& drift, const Mat& sigma) {
  if (!(s > t)) throw ConfigError("kernel_gaussian requires s > t");
  const int d = grid.d;
  if (drift.d != d || sigma.rows != d || sigma.cols != d)
    throw ConfigError("kernel_gaussian: dimension mismatch");
  const double tau = s - t;
  Mat cov = sigma * sigma.transposed();
  for (int a = 0; a < d * d; ++a) cov.m[static_cast<std::size_t>(a)] *= tau;
  double dv = det(cov);
  if (dv <= 0) throw NumericError("kernel_gaussian: singular covariance");
  Mat prec = inverse(cov);
  const double norm = 1.0 / (std::pow(2.0 * M_PI, 0.5 * d) * std::sqrt(dv));

  Kernel k = Kernel::zeros(grid, 1, t, s);
  const int n = grid.size();
  parallel_for(n, [&](int xi) {
    Pt mean = grid.point(xi) + tau * drift;
    for (int yi = 0; yi < n; ++yi) {
      Pt u = grid.point(yi) - mean;
      double q = 0;
      for (int a = 0; a < d; ++a)
        for (int bI = 0; bI < d; ++bI) q += u[a] * prec(a, bI) * u[bI];
      k.at(1, xi, 1, yi) = norm * std::exp(-0.5 * q);
    }
  });
  k.prov = Kernel::Provenance::analytic;
  k.record_truncation_leak();
  return k;
}

Kernel kernel_killing(const Kernel& base, const Expr& V) {
  if (base.regimes != 1) throw ConfigError("kernel_killing expects a single-regime base kernel");
  auto v_at = [&V](double r) {
    double slot = r;
    double val = V.eval(std::span<const double>(&slot, 1));
    if (val < 0) throw NumericError("negative killing rate V encountered");
    return val;
  };
  double integral = adaptive_simpson(v_at, base.t, base.s, 1e-10);
  double factor = std::exp(-integral);
  Kernel out = base;
  for (double& v : out.values) v *= factor;
  // the removed mass is killed, not leaked; leak bookkeeping is inherited
  return out;
}

Kernel kernel_mc(const ModelSpec& model, const Grid& grid, double t, double s, std::int64_t paths,
                 double dt, std::uint64_t seed) {
  if (paths < 1000) throw ConfigError("kernel_mc requires at least 1e3 paths per node");
  if (grid.d != model.d) throw ConfigError("kernel_mc: grid dimension != model dimension");
  const int R = model.nregimes();
  const int n = grid.size();
  Kernel k = Kernel::zeros(grid, R, t, s);
  const double cell = grid.cell_weight();

  parallel_for(R * n, [&](int row) {
    int i = row / n + 1;
    int xi = row % n;
    Pt x0 = grid.point(xi);
    std::vector<std::int64_t> counts(static_cast<std::size_t>(R) * n, 0);
    std::int64_t leaked = 0;
    for (std::int64_t p = 0; p < paths; ++p) {
      RngStream rng(seed, static_cast<std::uint64_t>(row) * static_cast<std::uint64_t>(paths) + p);
      SamplePath path = simulate_reference(model, t, x0, i, dt, rng, s);
      const Pt& y = path.states.back().x;
      int j = path.states.back().regime;
      int yi = grid.locate(y);
      if (yi < 0)
        ++leaked;
      else
        ++counts[static_cast<std::size_t>(j - 1) * n + yi];
    }
    for (int j = 1; j <= R; ++j)
      for (int yi = 0; yi < n; ++yi) {
        std::int64_t c = counts[static_cast<std::size_t>(j - 1) * n + yi];
        k.at(i, xi, j, yi) = static_cast<double>(c) / (static_cast<double>(paths) * cell);
      }
    k.leak[static_cast<std::size_t>(row)] = static_cast<double>(leaked) / static_cast<double>(paths);
  });

  k.prov = Kernel::Provenance::monte_carlo;
  k.mc_paths = paths;
  k.bandwidth = cell;  // binning with no smoothing: bandwidth equals cell size
  for (double l : k.leak)
    if (l > 0.05) k.leak_warning = true;
  return k;
}

Kernel compose(const Kernel& k1, const Kernel& k2) {
  if (std::abs(k1.s - k2.t) > 1e-12) throw ConfigError("compose: k1.s != k2.t");
  if (!k1.grid.same_as(k2.grid) || k1.regimes != k2.regimes)
    throw ConfigError("compose: grid or regime mismatch");
  const int n = k1.rows();
  const double w = k1.grid.cell_weight();
  Kernel out = Kernel::zeros(k1.grid, k1.regimes, k1.t, k2.s);
  // out = k1 * diag(w) * k2
  parallel_for(n, [&](int r) {
    const double* a = k1.values.data() + static_cast<std::size_t>(r) * n;
    double* o = out.values.data() + static_cast<std::size_t>(r) * n;
    for (int m = 0; m < n; ++m) {
      double av = a[m] * w;
      if (av == 0.0) continue;
      const double* b = k2.values.data() + static_cast<std::size_t>(m) * n;
      for (int c = 0; c < n; ++c) o[c] += av * b[c];
    }
  });
  out.prov = Kernel::Provenance::composed;
  for (int r = 0; r < n; ++r) {
    // leaked mass compounds: what k1 leaked never reaches k2
    out.leak[static_cast<std::size_t>(r)] = std::min(1.0, k1.leak[static_cast<std::size_t>(r)]);
  }
  out.leak_warning = k1.leak_warning || k2.leak_warning;
  return out;
}

Kernel kernel_identity(const Grid& grid, int regimes, double t) {
  Kernel k = Kernel::zeros(grid, regimes, t, t);
  double inv_w = 1.0 / grid.cell_weight();
  for (int i = 1; i <= regimes; ++i)
    for (int x = 0; x < grid.size(); ++x) k.at(i, x, i, x) = inv_w;
  return k;
}

namespace {
constexpr char kMagic[4] = {'R', 'S', 'B', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <typename T>
void get(std::ifstream& f, T& v) {
  f.read(reinterpret_cast<char*>(&v), sizeof v);
}
}  // namespace

void save_kernel(const Kernel& k, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open kernel file for writing: " + path);
  f.write(kMagic, 4);
  put(f, kVersion);
  put(f, k.content_hash());
  put(f, static_cast<std::uint32_t>(k.grid.d));
  for (int a = 0; a < k.grid.d; ++a) {
    put(f, k.grid.ax[a].lo);
    put(f, k.grid.ax[a].hi);
    put(f, static_cast<std::uint32_t>(k.grid.ax[a].n));
  }
  put(f, static_cast<std::uint32_t>(k.regimes));
  put(f, k.t);
  put(f, k.s);
  put(f, static_cast<std::uint8_t>(k.prov));
  put(f, static_cast<std::int64_t>(k.mc_paths));
  put(f, k.bandwidth);
  f.write(reinterpret_cast<const char*>(k.values.data()),
          static_cast<std::streamsize>(k.values.size() * sizeof(double)));
  f.write(reinterpret_cast<const char*>(k.leak.data()),
          static_cast<std::streamsize>(k.leak.size() * sizeof(double)));
  if (!f) throw NumericError("kernel write failed: " + path);
}

Kernel load_kernel(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open kernel file: " + path);
  char magic[4];
  f.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw ConfigError("bad kernel file magic: " + path);
  std::uint32_t version = 0;
  get(f, version);
  if (version != kVersion) throw ConfigError("unsupported kernel file version");
  std::uint64_t hash = 0;
  get(f, hash);
  std::uint32_t d = 0;
  get(f, d);
  Grid g;
  g.d = static_cast<int>(d);
  for (std::uint32_t a = 0; a < d; ++a) {
    std::uint32_t n = 0;
    get(f, g.ax[a].lo);
    get(f, g.ax[a].hi);
    get(f, n);
    g.ax[a].n = static_cast<int>(n);
  }
  g.check();
  std::uint32_t regimes = 0;
  Kernel k;
  get(f, regimes);
  k.grid = g;
  k.regimes = static_cast<int>(regimes);
  get(f, k.t);
  get(f, k.s);
  std::uint8_t prov = 0;
  get(f, prov);
  k.prov = static_cast<Kernel::Provenance>(prov);
  get(f, k.mc_paths);
  get(f, k.bandwidth);
  std::size_t n = static_cast<std::size_t>(k.rows());
  k.values.resize(n * n);
  k.leak.resize(n);
  f.read(reinterpret_cast<char*>(k.values.data()),
         static_cast<std::streamsize>(k.values.size() * sizeof(double)));
  f.read(reinterpret_cast<char*>(k.leak.data()),
         static_cast<std::streamsize>(k.leak.size() * sizeof(double)));
  if (!f) throw ConfigError("truncated kernel file: " + path);
  if (k.content_hash() != hash) throw ConfigError("kernel file hash mismatch: " + path);
  for (double l : k.leak)
    if (l > 0.05) k.leak_warning = true;
  return k;
}

}  // namespace rsb
