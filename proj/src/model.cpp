#include "rsb/model.hpp"

#include <algorithm>
#include <set>

namespace rsb {

void RegimeSet::validate() const {
  if (count < 1) throw ConfigError("regime count must be >= 1");
  if (!labels.empty()) {
    if (static_cast<int>(labels.size()) != count)
      throw ConfigError("regime labels must match regime count");
    std::set<std::string> seen(labels.begin(), labels.end());
    if (static_cast<int>(seen.size()) != count) throw ConfigError("regime labels must be unique");
  }
}

void JumpMeasure::validate() const {
  for (const auto& a : atoms) {
    if (a.weight < 0) throw ConfigError("jump atom weight must be nonnegative");
    if (a.z.norm() == 0) throw ConfigError("jump measure must not charge z = 0");
    if (a.z.d != ell) throw ConfigError("jump atom dimension mismatch");
  }
}

void ModelSpec::validate() const {
  if (d < 1 || d > kMaxDim) throw ConfigError("spatial dimension out of range");
  if (T <= 0) throw ConfigError("horizon T must be positive");
  regimes.validate();
  nu.validate();
  const int R = regimes.count;
  if (static_cast<int>(b.size()) != R || static_cast<int>(sigma.size()) != R)
    throw ConfigError("b and sigma must be given per regime");
  for (int i = 0; i < R; ++i) {
    if (static_cast<int>(b[i].size()) != d) throw ConfigError("drift must have d components");
    if (static_cast<int>(sigma[i].size()) != d * d)
      throw ConfigError("sigma must have d*d components");
  }
  if (!gamma.empty() && static_cast<int>(gamma.size()) != R)
    throw ConfigError("gamma must be given per regime");
  if (!Q.empty() && static_cast<int>(Q.size()) != R * R) throw ConfigError("Q must be R*R");
  if (!psi.empty() && static_cast<int>(psi.size()) != R * R) throw ConfigError("psi must be R*R");
}

namespace {

// Slot layout for coefficient evaluation: [t, x1..xd] (+ z1..zl for gamma).
inline void fill_tx(double* slots, double t, const Pt& x) {
  slots[0] = t;
  for (int k = 0; k < x.d; ++k) slots[k + 1] = x[k];
}

}  // namespace

Pt ModelSpec::drift(double t, const Pt& x, int i) const {
  double slots[1 + kMaxDim];
  fill_tx(slots, t, x);
  std::span<const double> sp(slots, static_cast<std::size_t>(1 + d));
  Pt out(d);
  for (int m = 0; m < d; ++m) out[m] = b[i - 1][m].eval(sp);
  return out;
}

Mat ModelSpec::sigma_at(double t, const Pt& x, int i) const {
  double slots[1 + kMaxDim];
  fill_tx(slots, t, x);
  std::span<const double> sp(slots, static_cast<std::size_t>(1 + d));
  Mat s(d, d);
  for (int m = 0; m < d; ++m)
    for (int n = 0; n < d; ++n) s(m, n) = sigma[i - 1][m * d + n].eval(sp);
  return s;
}

Mat ModelSpec::diffusion_aa(double t, const Pt& x, int i) const {
  Mat s = sigma_at(t, x, i);
  return s * s.transposed();
}

Pt ModelSpec::gamma_at(double t, const Pt& x, int i, const Pt& z) const {
  if (gamma.empty() || gamma[i - 1].empty()) return Pt(d);
  double slots[1 + 2 * kMaxDim];
  fill_tx(slots, t, x);
  for (int k = 0; k < z.d; ++k) slots[1 + d + k] = z[k];
  std::span<const double> sp(slots, static_cast<std::size_t>(1 + d + z.d));
  Pt out(d);
  for (int m = 0; m < d; ++m) out[m] = gamma[i - 1][m].eval(sp);
  return out;
}

double ModelSpec::switch_rate(double t, const Pt& x, int i, int j) const {
  if (i == j || Q.empty()) return 0.0;
  const Expr& e = Q[(i - 1) * regimes.count + (j - 1)];
  if (e.empty()) return 0.0;
  double slots[1 + kMaxDim];
  fill_tx(slots, t, x);
  double q = e.eval(std::span<const double>(slots, static_cast<std::size_t>(1 + d)));
  if (q < 0) throw NumericError("negative switch rate Q_" + std::to_string(i) +
                                std::to_string(j) + " encountered");
  return q;
}

Pt ModelSpec::psi_at(double t, const Pt& x, int i, int j) const {
  if (i == j || psi.empty()) return x;
  const auto& exprs = psi[(i - 1) * regimes.count + (j - 1)];
  if (exprs.empty()) return x;
  double slots[1 + kMaxDim];
  fill_tx(slots, t, x);
  std::span<const double> sp(slots, static_cast<std::size_t>(1 + d));
  Pt out(d);
  for (int m = 0; m < d; ++m) out[m] = exprs[m].eval(sp);
  return out;
}

Pt ModelSpec::small_jump_compensator(double t, const Pt& x, int i) const {
  Pt s(d);
  for (const auto& atom : nu.atoms) {
    if (atom.z.norm() <= JumpMeasure::kSmallJumpRadius)
      s += atom.weight * gamma_at(t, x, i, atom.z);
  }
  return s;
}

SwitchLayout switch_layout(const ModelSpec& model, double t, const Pt& x, int i) {
  SwitchLayout layout;
  double pos = 0;
  for (int j = 1; j <= model.regimes.count; ++j) {
    if (j == i) continue;
    double q = model.switch_rate(t, x, i, j);
    if (q > 0) layout.intervals.push_back({j, pos, q});
    pos += q;
  }
  layout.total = pos;
  return layout;
}

std::pair<int, Pt> switch_maps(const ModelSpec& model, double t, const Pt& x, int i, double w) {
  if (w < 0) throw NumericError("switch_maps: w must be nonnegative");
  SwitchLayout layout = switch_layout(model, t, x, i);
  int j = layout.target(w);
  if (j == 0) return {0, Pt(model.d)};
  return {j - i, model.psi_at(t, x, i, j) - x};
}

}  // namespace rsb
