#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "rsb/grid.hpp"
#include "rsb/model.hpp"
#include "rsb/rng.hpp"

namespace rsb {

// Cadlag trajectory on a uniform step grid with the noise record needed to
// replay any Girsanov weight along the path: Brownian increments, accepted
// jump atoms, accepted switch uniforms.
struct SamplePath {
  struct State {
    double t;
    Pt x;
    int regime;
  };
  enum class EventKind { diffstep, jump, sw };
  struct Event {
    EventKind kind;
    int step;        // event applied within step [times[step], times[step+1])
    double t;
    int atom = -1;   // jump: atom index
    double w = 0;    // switch: layout coordinate
    int from = 0, to = 0;
  };

  std::vector<State> states;   // K+1 entries; state at t_k is post-event
  std::vector<Event> events;   // jumps and switches only
  std::vector<Pt> brownian;    // K increments dB_k
  double dt = 0;

  int steps() const { return static_cast<int>(brownian.size()); }
  const State& terminal() const { return states.back(); }
};

// Girsanov control triple (u, theta, xi); theta is per jump atom, xi in the
// matrix form xi_ij. Defaults are the identity transform.
struct ControlTriple {
  std::function<Pt(double t, const Pt& x, int i)> u;
  std::function<double(double t, const Pt& x, int i, int atom)> theta;
  std::function<double(double t, const Pt& x, int i, int j)> xi;

  static ControlTriple identity(int d);
  bool is_identity = false;
};

// Euler-Maruyama simulation of the reference SDE with per-step thinning for
// jumps and switches. Starts at (t0, x0, i0), ends at t_end (model horizon by
// default).
SamplePath simulate_reference(const ModelSpec& model, double t0, const Pt& x0, int i0, double dt,
                              RngStream& rng, double t_end = -1);

// Same scheme under the controlled dynamics: drift b - sigma u (minus the
// small-jump compensator when enabled), jump intensity (1 - theta) nu, switch
// rates xi_ij Q_ij.
SamplePath simulate_controlled(const ModelSpec& model, const ControlTriple& controls, double t0,
                               const Pt& x0, int i0, double dt, RngStream& rng, double t_end = -1);

// Z_{0,T} computed by replaying the recorded noise: Brownian integral, jump
// and switch log terms at realized events, and the three compensator
// integrals by left-point quadrature on the path grid.
double girsanov_weight(const SamplePath& path, const ControlTriple& controls,
                       const ModelSpec& model);

// Integral over the path of F = |u|^2/2 + sum_atoms[(1-theta)log(1-theta)+theta] nu
//                                + sum_j Q_ij [xi log xi + 1 - xi].
double kl_running_cost(const SamplePath& path, const ControlTriple& controls,
                       const ModelSpec& model);

// Draws a start state from a marginal (categorical over cell masses plus
// Dirac components).
SamplePath::State sample_start(const Marginal& rho0, double t0, RngStream& rng);

}  // namespace rsb
