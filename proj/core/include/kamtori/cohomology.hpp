#pragma once

#include <optional>

#include "kamtori/fields.hpp"
#include "kamtori/fourier.hpp"

namespace kamtori {

// Which side of the equation carries the contraction.
//   contractive: ||A^{-1}|| ||B|| < 1, solved by the forward series
//   expansive:   ||A|| ||B^{-1}|| < 1, solved by the backward series
//   scalar_1d:   A, B scalar functions, reduced to constant coefficients
enum class Regime { contractive, expansive, scalar_1d };

// A(theta) Delta(theta) - Delta(theta + omega) B(theta) = eta(theta).
// A is r x r, B is c x c, eta and Delta are r x c. A_inv / B_inv may carry
// restricted (pseudo)inverses when A or B acts on a bundle.
struct TwoSidedEquation {
  FourierSeries A;
  FourierSeries B;
  FourierSeries eta;
  RotationVector omega;
  Regime regime = Regime::contractive;
  std::optional<FourierSeries> A_inv;
  std::optional<FourierSeries> B_inv;
};

struct DoublingOptions {
  int max_doublings = 7;
  double early_exit = 1e-14;  // relative size of the last increment
  double kappa_limit = 1.0;
};

struct DoublingResult {
  FourierSeries delta;
  double kappa = 0.0;     // sup||A^{-1}|| sup||B|| (or the expansive analogue)
  int doublings = 0;
  std::vector<double> increments;  // relative size of each doubling increment
};

DoublingResult solve_doubling_contractive(const TwoSidedEquation& eq,
                                          const DoublingOptions& opts = {});
DoublingResult solve_doubling_expansive(const TwoSidedEquation& eq,
                                        const DoublingOptions& opts = {});

struct ScalarOptions {
  double unit_tol = 1e-6;
  double log_floor = 1e-12;
  double divisor_floor = 1e-12;
};

struct ScalarResult {
  FourierSeries delta;
  double nu = 0.0;  // signed constant multiplier of the reduced equation
  FourierSeries C;  // A/B = nu C / C o T_omega
};

ScalarResult solve_1d(const TwoSidedEquation& eq, const ScalarOptions& opts = {});

// Dispatch on eq.regime.
FourierSeries solve_twosided(const TwoSidedEquation& eq, const DoublingOptions& opts = {});

// sup || A Delta - (Delta o T_omega) B - eta ||.
double twosided_residual(const TwoSidedEquation& eq, const FourierSeries& delta);

}  // namespace kamtori
