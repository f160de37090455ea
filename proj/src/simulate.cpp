#include "rsb/simulate.hpp"

#include <cmath>

namespace rsb {

ControlTriple ControlTriple::identity(int d) {
  ControlTriple c;
  c.u = [d](double, const Pt&, int) { return Pt(d); };
  c.theta = [](double, const Pt&, int, int) { return 0.0; };
  c.xi = [](double, const Pt&, int, int) { return 1.0; };
  c.is_identity = true;
  return c;
}

namespace {

struct StepRates {
  // per-atom acceptance probability numerator (tilted weight), switch layout
  std::vector<double> jump_rate;
  SwitchLayout layout;
};

// One Euler step shared by the reference and the controlled simulator;
// controls == nullptr means reference dynamics.
SamplePath run_euler(const ModelSpec& model, const ControlTriple* controls, double t0,
                     const Pt& x0, int i0, double dt, RngStream& rng, double t_end) {
  if (dt <= 0) throw ConfigError("simulation step dt must be positive");
  if (t_end < 0) t_end = model.T;
  if (t_end <= t0) throw ConfigError("simulation horizon must exceed start time");

  // setup validation: per-step event probabilities must be small
  {
    double rate0 = model.nu.total_weight();
    SwitchLayout lay0 = switch_layout(model, t0, x0, i0);
    double max_rate = std::max(rate0, lay0.total);
    if (max_rate > 0 && dt >= 0.1 / max_rate)
      throw ConfigError("dt too large for event rates: need dt < 0.1/max-rate");
  }

  const int K = std::max(1, static_cast<int>(std::lround((t_end - t0) / dt)));
  const double h = (t_end - t0) / K;
  const double sqrt_h = std::sqrt(h);
  const int d = model.d;
  const int natoms = static_cast<int>(model.nu.atoms.size());

  SamplePath path;
  path.dt = h;
  path.states.reserve(K + 1);
  path.brownian.reserve(K);
  path.states.push_back({t0, x0, i0});

  Pt x = x0;
  int regime = i0;
  for (int k = 0; k < K; ++k) {
    const double t = t0 + k * h;

    Pt drift = model.drift(t, x, regime);
    if (controls) {
      Mat sg = model.sigma_at(t, x, regime);
      drift -= sg.mul(controls->u(t, x, regime));
    }
    if (model.nu.compensate_small) drift -= model.small_jump_compensator(t, x, regime);

    Pt dB(d);
    for (int m = 0; m < d; ++m) dB[m] = sqrt_h * rng.normal();
    path.brownian.push_back(dB);

    Mat sg = model.sigma_at(t, x, regime);
    Pt x_new = x + h * drift + sg.mul(dB);

    // jumps: thinning per atom, at most one jump per atom per step
    for (int a = 0; a < natoms; ++a) {
      const JumpAtom& atom = model.nu.atoms[a];
      double rate = atom.weight;
      if (controls) {
        double th = controls->theta(t, x, regime, a);
        if (th >= 1.0) throw NumericError("control theta >= 1 encountered");
        rate *= (1.0 - th);
      }
      double p = rate * h;
      if (p >= 1.0) throw NumericError("per-step jump probability >= 1; decrease dt");
      if (p > 0 && rng.uniform() < p) {
        x_new += model.gamma_at(t, x, regime, atom.z);
        path.events.push_back(
            {SamplePath::EventKind::jump, k, t, a, 0.0, regime, regime});
      }
    }

    // switching: one uniform against the total (tilted) rate
    SwitchLayout lay = switch_layout(model, t, x, regime);
    int new_regime = regime;
    if (!lay.intervals.empty()) {
      double total = 0;
      SwitchLayout tilted = lay;
      if (controls) {
        double pos = 0;
        for (auto& iv : tilted.intervals) {
          double xr = controls->xi(t, x, regime, iv.j);
          if (xr < 0) throw NumericError("control xi < 0 encountered");
          iv.length *= xr;  // xi = 0 disables the channel
          iv.start = pos;
          pos += iv.length;
        }
        tilted.total = pos;
      }
      total = tilted.total;
      double p = total * h;
      if (p >= 1.0) throw NumericError("per-step switch probability >= 1; decrease dt");
      double v = rng.uniform();
      if (v < p) {
        double w_tilted = v / h;  // layout coordinate in the tilted layout
        int j = tilted.target(w_tilted);
        if (j != 0) {
          // record the coordinate in the reference layout of the chosen pair
          double w_ref = 0;
          for (const auto& iv : lay.intervals)
            if (iv.j == j) w_ref = iv.start + 0.5 * iv.length;
          x_new += model.psi_at(t, x, regime, j) - x;
          path.events.push_back({SamplePath::EventKind::sw, k, t, -1, w_ref, regime, j});
          new_regime = j;
        }
      }
    }

    if (!x_new.finite())
      throw NumericError("simulation produced a non-finite state at step " + std::to_string(k));
    x = x_new;
    regime = new_regime;
    path.states.push_back({t0 + (k + 1) * h, x, regime});
  }
  return path;
}

}  // namespace

SamplePath simulate_reference(const ModelSpec& model, double t0, const Pt& x0, int i0, double dt,
                              RngStream& rng, double t_end) {
  return run_euler(model, nullptr, t0, x0, i0, dt, rng, t_end);
}

SamplePath simulate_controlled(const ModelSpec& model, const ControlTriple& controls, double t0,
                               const Pt& x0, int i0, double dt, RngStream& rng, double t_end) {
  if (controls.is_identity) return run_euler(model, nullptr, t0, x0, i0, dt, rng, t_end);
  return run_euler(model, &controls, t0, x0, i0, dt, rng, t_end);
}

double girsanov_weight(const SamplePath& path, const ControlTriple& controls,
                       const ModelSpec& model) {
  const int K = path.steps();
  const int natoms = static_cast<int>(model.nu.atoms.size());
  double log_z = 0;

  // event terms: log(1-theta) at realized jumps, log(xi) at realized switches
  for (const auto& ev : path.events) {
    const auto& st = path.states[static_cast<std::size_t>(ev.step)];
    if (ev.kind == SamplePath::EventKind::jump) {
      double th = controls.theta(st.t, st.x, st.regime, ev.atom);
      if (th >= 1.0) throw NumericError("control theta >= 1 on path");
      log_z += std::log1p(-th);
    } else if (ev.kind == SamplePath::EventKind::sw) {
      double xr = controls.xi(st.t, st.x, ev.from, ev.to);
      if (!(xr > 0)) throw NumericError("control xi <= 0 on path");
      log_z += std::log(xr);
    }
  }

  // Brownian term and the three compensator integrals, left-point quadrature
  for (int k = 0; k < K; ++k) {
    const auto& st = path.states[static_cast<std::size_t>(k)];
    Pt u = controls.u(st.t, st.x, st.regime);
    log_z -= dot(u, path.brownian[static_cast<std::size_t>(k)]);
    log_z -= 0.5 * dot(u, u) * path.dt;

    double theta_comp = 0;
    for (int a = 0; a < natoms; ++a) {
      double th = controls.theta(st.t, st.x, st.regime, a);
      if (th >= 1.0) throw NumericError("control theta >= 1 on path");
      theta_comp += th * model.nu.atoms[static_cast<std::size_t>(a)].weight;
    }
    log_z += theta_comp * path.dt;

    double xi_comp = 0;
    SwitchLayout lay = switch_layout(model, st.t, st.x, st.regime);
    for (const auto& iv : lay.intervals) {
      double xr = controls.xi(st.t, st.x, st.regime, iv.j);
      if (xr < 0) throw NumericError("control xi < 0 on path");
      xi_comp += iv.length * (1.0 - xr);
    }
    log_z += xi_comp * path.dt;
  }
  return std::exp(log_z);
}

double kl_running_cost(const SamplePath& path, const ControlTriple& controls,
                       const ModelSpec& model) {
  const int K = path.steps();
  const int natoms = static_cast<int>(model.nu.atoms.size());
  double cost = 0;
  for (int k = 0; k < K; ++k) {
    const auto& st = path.states[static_cast<std::size_t>(k)];
    Pt u = controls.u(st.t, st.x, st.regime);
    double f = 0.5 * dot(u, u);
    for (int a = 0; a < natoms; ++a) {
      double th = controls.theta(st.t, st.x, st.regime, a);
      if (th >= 1.0) throw NumericError("control theta >= 1 on path");
      f += ((1.0 - th) * std::log1p(-th) + th) * model.nu.atoms[static_cast<std::size_t>(a)].weight;
    }
    SwitchLayout lay = switch_layout(model, st.t, st.x, st.regime);
    for (const auto& iv : lay.intervals) {
      double xr = controls.xi(st.t, st.x, st.regime, iv.j);
      if (xr < 0) throw NumericError("control xi < 0 on path");
      // xi log xi -> 0 as xi -> 0
      f += iv.length * (xr > 0 ? xr * std::log(xr) + 1.0 - xr : 1.0);
    }
    cost += f * path.dt;
  }
  return cost;
}

SamplePath::State sample_start(const Marginal& rho0, double t0, RngStream& rng) {
  double total = rho0.total();
  if (total <= 0) throw ConfigError("start marginal has no mass");
  double u = rng.uniform() * total;
  for (const auto& dd : rho0.diracs) {
    if (u < dd.m) return {t0, rho0.grid.point(dd.node), dd.regime};
    u -= dd.m;
  }
  const int n = rho0.grid.size();
  for (int i = 1; i <= rho0.regimes; ++i)
    for (int node = 0; node < n; ++node) {
      double m = rho0.at(i, node);
      if (u < m) return {t0, rho0.grid.point(node), i};
      u -= m;
    }
  // numerical tail: fall back to the last positive cell
  for (int i = rho0.regimes; i >= 1; --i)
    for (int node = n - 1; node >= 0; --node)
      if (rho0.at(i, node) > 0) return {t0, rho0.grid.point(node), i};
  throw NumericError("sample_start failed");
}

}  // namespace rsb
