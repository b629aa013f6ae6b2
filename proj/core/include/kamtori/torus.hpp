#pragma once

#include <functional>
#include <optional>

#include "kamtori/geometry.hpp"
#include "kamtori/splitting.hpp"

namespace kamtori {

// Adapted frame around a torus: M = [alpha | gamma] with alpha = DK,
// beta = alpha N, gamma = J^{-1} beta, N = (alpha^T alpha)^{-1}.
struct ReducibilityFrame {
  FourierSeries alpha;  // 2d x ell
  FourierSeries N;      // ell x ell
  FourierSeries beta;   // 2d x ell
  FourierSeries gamma;  // 2d x ell
  FourierSeries M;      // 2d x 2ell
  FourierSeries torsion;  // ell x ell, A(theta)
  double cond_M = 0.0;    // sup of the pointwise condition number of M
  double min_sigma = 0.0; // smallest singular value of DK over the grid
};

enum class FrameInverse { shortcut, exact };

struct SolverOptions {
  double tol = 1e-12;
  int max_iter = 30;
  double lambda_tol = 1e-10;
  bool counterterm = false;
  FrameInverse frame_inverse = FrameInverse::shortcut;
  double twist_floor = 1e-8;
  double degenerate_floor = 1e-8;  // smallest singular value of DK
  CohomologyOptions cohomology;
  bool refine_grid = true;
  double tail_threshold = 1e-9;
  int max_grid = 1 << 15;       // per axis
  int divergence_steps = 3;     // consecutive growth before giving up
  double divergence_level = 1e3;
  SplittingOptions splitting;   // whiskered tori only
  DoublingOptions doubling;
};

struct NewtonReport {
  int iter = 0;
  double residual_before = 0.0;
  double residual_after = 0.0;
  double lambda = 0.0;         // max |lambda|
  double twist = 0.0;          // smallest singular value of avg(A)
  double norm_N = 0.0;
  double cond_M = 0.0;
  double divisor_margin = 0.0; // smallest |1 - e^{2 pi i k.omega}| used
  double tail = 0.0;
  int grid = 0;                // points per axis
  double seconds = 0.0;
};

struct ResidualOptions {
  double jump_threshold = 0.5;
};

// E = F o K - K o T_omega - c0 lambda, with c0 = ((J o K0)^{-1} DK0) o T_omega and
// angle components reduced to the branch nearest zero.
FourierSeries invariance_residual(const TorusEmbedding& K, const SymplecticMap& F,
                                  const ResidualOptions& opts = {});

// ((J o K0)^{-1} DK0)(theta + omega), the counterterm direction (2d x ell).
FourierSeries counterterm_direction(const TorusEmbedding& K, const SymplecticMap& F);

ReducibilityFrame build_frame(const TorusEmbedding& K, const SymplecticMap& F,
                              const SolverOptions& opts = {});

struct StepResult {
  TorusEmbedding torus;
  NewtonReport report;
};

// One Newton step for a Lagrangian torus (ell = d).
StepResult newton_center_step(const TorusEmbedding& K, const SymplecticMap& F,
                              const SolverOptions& opts = {});

// One Newton step for a whiskered torus (ell < d) using the given splitting:
// the center part as for Lagrangian tori, stable and unstable parts by the
// hyperbolic series.
StepResult newton_whiskered_step(const TorusEmbedding& K, const SymplecticMap& F,
                                 const InvariantSplitting& S, const SolverOptions& opts = {});

struct SolveResult {
  TorusEmbedding torus;
  std::vector<NewtonReport> log;
  std::optional<InvariantSplitting> splitting;
};

// Iterates Newton steps to opts.tol; doubles the grid when the spectral tail is
// too heavy. For whiskered tori the splitting is tracked along the iteration,
// starting from `splitting` or from the spectrum of the averaged cocycle.
SolveResult newton_solve(TorusEmbedding guess, const SymplecticMap& F, const SolverOptions& opts = {},
                         std::optional<InvariantSplitting> splitting = std::nullopt);

// Torus normalization used after each step.
TorusEmbedding normalize(TorusEmbedding K);

// Spectral resampling onto another grid (zero padding or truncation).
TorusEmbedding resample_torus(const TorusEmbedding& K, const GridShape& g);
InvariantSplitting resample_splitting(const InvariantSplitting& S, const GridShape& g);

using ModelFamily = std::function<MapPtr(double)>;

struct ContinuationOptions {
  double min_step = 1e-3;
  SolverOptions solver;
};

struct ContinuationPoint {
  double parameter = 0.0;
  SolveResult result;
};

// Follows the torus along `schedule`; on failure the step toward the next
// scheduled value is halved down to min_step. `on_point` sees every scheduled
// value that was reached.
std::vector<ContinuationPoint> continuation(
    const ModelFamily& family, const std::vector<double>& schedule, TorusEmbedding initial,
    const ContinuationOptions& opts,
    const std::function<void(const ContinuationPoint&)>& on_point = {});

}  // namespace kamtori
