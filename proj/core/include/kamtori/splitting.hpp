#pragma once

#include <optional>

#include "kamtori/cohomology.hpp"
#include "kamtori/geometry.hpp"

namespace kamtori {

// Linear skew product (v, theta) -> (Z(theta) v, theta + omega).
struct Cocycle {
  FourierSeries Z;
  FourierSeries Z_inv;
  RotationVector omega;
};

// Z = DF o K, Z^{-1} = (DF)^{-1} o K, sampled on the embedding grid.
Cocycle make_cocycle(const TorusEmbedding& K, const SymplecticMap& F);
// Constant-matrix cocycle (tests and synthetic problems).
Cocycle constant_cocycle(const GridShape& grid, const Mat& Z, const RotationVector& omega);

// Projections onto the stable / unstable bundles and their invariant complements.
struct InvariantSplitting {
  FourierSeries Pi_s;
  FourierSeries Pi_cu;
  std::optional<FourierSeries> Pi_u;
  std::optional<FourierSeries> Pi_cs;
  int stable_rank = 0;
  int unstable_rank = 0;

  bool has_unstable() const { return Pi_u.has_value(); }
  // Pi_c = Id - Pi_s - Pi_u.
  FourierSeries center() const;
};

struct HyperbolicityRates {
  double mu_stable = 0.0;    // ||M(n) Pi_s|| <= C mu_stable^n
  double mu_unstable = 0.0;  // ||M(-n) Pi_u|| <= C mu_unstable^n
  double mu_center = 1.0;    // growth of M(+-n) Pi_c
  double C = 1.0;
  bool reliable = true;      // false when the log-linear fit is poor
};

struct SplittingOptions {
  double pinv_threshold = 1e-10;
  double snap_zero = 0.1;   // singular values below are snapped to 0
  double snap_one = 0.9;    // singular values above are kept
  double snap_max = 1.1;    // and must not exceed this
  double tol = 1e-12;
  int max_iter = 8;
  DoublingOptions doubling;
};

enum class Side { stable, unstable };

// Spectral projections of the averaged cocycle matrix; exact for constant Z.
// With hyperbolic_rank >= 0 that many extreme moduli are taken on each side,
// otherwise moduli outside [1 - gap, 1 + gap] count as hyperbolic.
InvariantSplitting initial_splitting(const Cocycle& Z, double gap = 1e-3, int hyperbolic_rank = -1);

struct ProjectionPair {
  FourierSeries E_complement;  // Pi_q(theta+omega) Z Pi_p(theta)
  FourierSeries E_own;         // Pi_p(theta+omega) Z Pi_q(theta)
  double norm = 0.0;
};

// Residuals of the invariance equations for a hyperbolic projection P and Q = Id - P.
ProjectionPair projection_residuals(const FourierSeries& P, const Cocycle& Z);

struct ProjectionStep {
  FourierSeries P;
  double residual_before = 0.0;
  double kappa = 0.0;
};

// One Newton step for the stable (or unstable) projection.
ProjectionStep newton_projection_step(const FourierSeries& P, int rank, const Cocycle& Z,
                                      Side side, const SplittingOptions& opts = {});

// Nearest projection of the given rank: range from the leading left singular
// vectors, kernel from the trailing right singular vectors.
FourierSeries reproject(const FourierSeries& P, int rank, const SplittingOptions& opts = {});

struct SplittingReport {
  std::vector<double> stable_residuals;
  std::vector<double> unstable_residuals;
};

// Newton iteration on both pairs until both residuals are below opts.tol.
InvariantSplitting refine_splitting(InvariantSplitting S, const Cocycle& Z,
                                    const SplittingOptions& opts = {},
                                    SplittingReport* report = nullptr);

struct SplitError {
  FourierSeries stable;
  FourierSeries center;
  FourierSeries unstable;
};

SplitError split_error(const FourierSeries& E, const InvariantSplitting& S,
                       const RotationVector& omega);

// Z Delta - Delta o T_omega = -E_s with Delta in the stable bundle.
FourierSeries solve_stable(const FourierSeries& E_s, const Cocycle& Z,
                           const InvariantSplitting& S, const DoublingOptions& opts = {});
// Z Delta - Delta o T_omega = -E_u with Delta in the unstable bundle.
FourierSeries solve_unstable(const FourierSeries& E_u, const Cocycle& Z,
                             const InvariantSplitting& S, const DoublingOptions& opts = {});

HyperbolicityRates estimate_rates(const Cocycle& Z, const InvariantSplitting& S, int n_max = 30);

}  // namespace kamtori
