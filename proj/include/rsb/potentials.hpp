#pragma once

#include <optional>
#include <vector>

#include "rsb/kernel.hpp"
#include "rsb/simulate.hpp"

namespace rsb {

// phi or phihat sampled on time slices x grid x regimes. phi propagates
// backward from the boundary field ghat at T; phihat forward from the
// measure fhat * R0 at time 0.
struct PotentialField {
  enum class Kind { phi, phihat };

  Grid grid;
  int regimes = 1;
  Kind kind = Kind::phi;
  std::vector<double> times;                // t_0 < ... < t_M
  std::vector<std::vector<double>> slices;  // [m][(i-1)*N + node], densities/values
  std::optional<Marginal> slice0_measure;   // phihat only: the measure at t_0

  int nslices() const { return static_cast<int>(times.size()); }
  double value(int m, int regime, int node) const {
    return slices[static_cast<std::size_t>(m)]
                 [static_cast<std::size_t>(regime - 1) * grid.size() + node];
  }
  // index of the slice at time t (within tol), or -1
  int slice_at(double t, double tol = 1e-9) const {
    for (int m = 0; m < nslices(); ++m)
      if (std::abs(times[static_cast<std::size_t>(m)] - t) <= tol) return m;
    return -1;
  }
};

// Backward propagation of the boundary field ghat. The kernel list is either
// a chain (kernels[m] spans slice m -> slice m+1) or direct hops (kernels[m]
// spans slice m -> T); the layout is detected from the kernel time stamps.
PotentialField propagate_phi(const std::vector<double>& g_at_T, const std::vector<Kernel>& kernels);

// Forward propagation of the start measure fhat * R0 (chain kernels[m]:
// slice m -> m+1, or direct: t0 -> slice m+1).
PotentialField propagate_phihat(const Marginal& fhat_R0, const std::vector<Kernel>& kernels);

// Tilted kernel p^hat_ij(t,x,s,y) = phi(s,y,j)/phi(t,x,i) p_ij(t,x,s,y);
// rows with phi(t,x,i) = 0 are identically zero.
Kernel bridge_kernel(const PotentialField& phi, const Kernel& K);

// Marginal density phi(t) * phihat(t) as cell masses.
Marginal bridge_marginal(const PotentialField& phi, const PotentialField& phihat, double t);

// Grid-interpolated optimal triple u* = -sigma^T grad log phi,
// theta* = 1 - phi(t,x+gamma,i)/phi(t,x,i), xi*_ij = phi(t,psi_ij,j)/phi(t,x,i).
// With strict=true, a zero phi at any interior node is a domain error listing
// the nodes; strict=false leaves identity controls on zero-phi nodes (used by
// killing fixtures where a dead-regime potential legitimately vanishes).
ControlTriple optimal_controls(const PotentialField& phi, const ModelSpec& model,
                               bool strict = true);

// Tilted SDE data per (slice, node, regime): drift b^phi, per-atom jump
// multipliers, switch multipliers. Assembly is cross-checked against the
// control-triple route b^phi = b - sigma u* - sum theta* gamma nu at build.
struct BridgeCoefficients {
  Grid grid;
  int regimes = 1;
  std::vector<double> times;
  int d = 1;
  int natoms = 0;
  // [m][((i-1)*N + node)*d + dim]
  std::vector<std::vector<double>> drift;
  // [m][((i-1)*N + node)*natoms + atom]
  std::vector<std::vector<double>> jump_mult;
  // [m][((i-1)*N + node)*R + (j-1)]
  std::vector<std::vector<double>> switch_mult;
  double max_consistency_error = 0;
};

BridgeCoefficients bridge_coefficients(const PotentialField& phi, const ModelSpec& model,
                                       bool strict = true);

// Bridge path sampler: controls are precomputed from phi once; control
// evaluation time is frozen over the last clamp_steps steps to keep the
// near-terminal drift finite for nearly pinned targets.
class BridgeSampler {
 public:
  BridgeSampler(const ModelSpec& model, const PotentialField& phi, Marginal rho0, double dt,
                int clamp_steps = 2, bool strict = false);

  SamplePath sample(RngStream& rng) const;

  // Rejection-counting batch: paths that leave the domain where phi > 0 are
  // rejected and re-drawn with a fresh stream.
  struct Batch {
    std::vector<SamplePath> paths;
    long rejected = 0;
  };
  Batch sample_batch(std::uint64_t seed, int n_paths, bool keep_paths = true) const;

  const ControlTriple& controls() const { return controls_; }

 private:
  const ModelSpec& model_;
  Marginal rho0_;
  double dt_;
  ControlTriple controls_;
};

// Single bridge path: delegates to simulate_controlled with the optimal
// triple; throws NumericError if phi vanishes at a visited state before T.
SamplePath simulate_bridge(const ModelSpec& model, const PotentialField& phi,
                           const Marginal& rho0, double dt, RngStream& rng);

}  // namespace rsb
