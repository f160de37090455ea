#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rsb/core.hpp"
#include "rsb/expr.hpp"

namespace rsb {

struct RegimeSet {
  int count = 1;
  std::vector<std::string> labels;  // size count, unique; regimes are 1..count

  void validate() const;
};

struct JumpAtom {
  Pt z;           // mark in R^ell, never 0
  double weight;  // nonnegative rate
};

struct JumpMeasure {
  int ell = 0;
  std::vector<JumpAtom> atoms;
  bool compensate_small = false;
  static constexpr double kSmallJumpRadius = 1.0;

  double total_weight() const {
    double s = 0;
    for (const auto& a : atoms) s += a.weight;
    return s;
  }
  void validate() const;
};

// Complete description of a regime-switching jump diffusion. Immutable after
// construction; expression evaluation is pure, so instances are safe to share
// across threads.
struct ModelSpec {
  int d = 1;
  RegimeSet regimes;
  double T = 1.0;

  // Coefficient expressions. b[i] has d entries over (t, x1..xd); sigma[i]
  // has d*d row-major entries; gamma[i] has d entries over (t, x.., z..).
  std::vector<std::vector<Expr>> b;
  std::vector<std::vector<Expr>> sigma;
  std::vector<std::vector<Expr>> gamma;
  JumpMeasure nu;

  // Off-diagonal switch rates, row-major [ (i-1)*R + (j-1) ]; empty Expr on
  // the diagonal and for absent entries (rate 0).
  std::vector<Expr> Q;

  // Hybrid-jump maps psi_ij, d entries each over (t, x..); empty => identity.
  std::vector<std::vector<Expr>> psi;

  void validate() const;

  int nregimes() const { return regimes.count; }

  Pt drift(double t, const Pt& x, int i) const;
  Mat sigma_at(double t, const Pt& x, int i) const;
  Mat diffusion_aa(double t, const Pt& x, int i) const;  // sigma sigma^T
  Pt gamma_at(double t, const Pt& x, int i, const Pt& z) const;
  double switch_rate(double t, const Pt& x, int i, int j) const;  // Q_ij, i != j
  Pt psi_at(double t, const Pt& x, int i, int j) const;
  bool has_jumps() const { return !nu.atoms.empty(); }

  // Drift correction for the compensated small-jump integral:
  // sum over atoms with |z| <= 1 of gamma(t,x,i,z) * weight.
  Pt small_jump_compensator(double t, const Pt& x, int i) const;
};

// Half-open intervals Delta_ij laid consecutively from 0 in increasing j
// (skipping i); length of Delta_ij equals Q_ij(t,x).
struct SwitchInterval {
  int j;
  double start;
  double length;
};

struct SwitchLayout {
  std::vector<SwitchInterval> intervals;
  double total = 0;  // sum of lengths

  // Target regime for layout coordinate w, or 0 if outside every interval.
  int target(double w) const {
    for (const auto& iv : intervals)
      if (w >= iv.start && w < iv.start + iv.length) return iv.j;
    return 0;
  }
};

SwitchLayout switch_layout(const ModelSpec& model, double t, const Pt& x, int i);

// (alpha, beta) = (j - i, psi_ij(t,x) - x) if w falls in Delta_ij, else (0, 0).
std::pair<int, Pt> switch_maps(const ModelSpec& model, double t, const Pt& x, int i, double w);

}  // namespace rsb
