#include "kamtori/cohomology.hpp"

#include <cmath>

#include "kamtori/errors.hpp"

namespace kamtori {

namespace {

void require_finite(const FourierSeries& f, const char* what) {
  for (double x : f.grid_data()) {
    if (!std::isfinite(x)) {
      throw ScalingError(std::string("overflow in ") + what + "; rescale the problem");
    }
  }
}

std::vector<double> scaled(std::span<const double> w, double s) {
  std::vector<double> out(w.begin(), w.end());
  for (double& x : out) x *= s;
  return out;
}

}  // namespace

DoublingResult solve_doubling_contractive(const TwoSidedEquation& eq, const DoublingOptions& opts) {
  FourierSeries a_inv = eq.A_inv ? to_grid(*eq.A_inv) : field_inverse(eq.A);
  FourierSeries b = to_grid(eq.B);
  DoublingResult res;
  res.kappa = field_sup_opnorm(a_inv) * field_sup_opnorm(b);
  if (res.kappa >= opts.kappa_limit) {
    throw RegimeViolationError("contractive regime needs ||A^-1|| ||B|| < 1, got " +
                               std::to_string(res.kappa));
  }
  FourierSeries delta = field_multiply(a_inv, eq.eta);
  std::vector<double> shift(eq.omega.omega);
  for (int k = 0; k < opts.max_doublings; ++k) {
    const FourierSeries inc = field_multiply(field_multiply(a_inv, rotate(delta, shift)), b);
    delta = field_add(delta, inc);
    require_finite(delta, "contractive doubling");
    const double scale = std::max(sup_norm(delta), 1e-300);
    res.increments.push_back(sup_norm(inc) / scale);
    res.doublings = k + 1;
    if (res.increments.back() < opts.early_exit) break;
    a_inv = field_multiply(a_inv, rotate(a_inv, shift));
    b = field_multiply(rotate(b, shift), b);
    shift = scaled(shift, 2.0);
  }
  res.delta = std::move(delta);
  return res;
}

DoublingResult solve_doubling_expansive(const TwoSidedEquation& eq, const DoublingOptions& opts) {
  FourierSeries a = to_grid(eq.A);
  FourierSeries b_inv = eq.B_inv ? to_grid(*eq.B_inv) : field_inverse(eq.B);
  DoublingResult res;
  res.kappa = field_sup_opnorm(a) * field_sup_opnorm(b_inv);
  if (res.kappa >= opts.kappa_limit) {
    throw RegimeViolationError("expansive regime needs ||A|| ||B^-1|| < 1, got " +
                               std::to_string(res.kappa));
  }
  // Builds Delta(theta + omega); shifted back at the end.
  FourierSeries delta = field_scale(field_multiply(eq.eta, b_inv), -1.0);
  std::vector<double> back = scaled(eq.omega.omega, -1.0);
  for (int k = 0; k < opts.max_doublings; ++k) {
    const FourierSeries inc = field_multiply(field_multiply(a, rotate(delta, back)), b_inv);
    delta = field_add(delta, inc);
    require_finite(delta, "expansive doubling");
    const double scale = std::max(sup_norm(delta), 1e-300);
    res.increments.push_back(sup_norm(inc) / scale);
    res.doublings = k + 1;
    if (res.increments.back() < opts.early_exit) break;
    a = field_multiply(a, rotate(a, back));
    b_inv = field_multiply(rotate(b_inv, back), b_inv);
    back = scaled(back, 2.0);
  }
  res.delta = rotate_back(std::move(delta), eq.omega);
  return res;
}

ScalarResult solve_1d(const TwoSidedEquation& eq, const ScalarOptions& opts) {
  if (eq.A.components() != 1 || eq.B.components() != 1 || eq.eta.components() != 1) {
    throw ParameterError("scalar reduction needs 1 x 1 coefficients");
  }
  const FourierSeries A = to_grid(eq.A);
  const FourierSeries B = to_grid(eq.B);
  const GridShape& g = A.shape();
  const std::size_t n = g.total();
  std::vector<double> logr(n);
  int sign = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const double r = A.at(0, p) / B.at(0, p);
    if (!std::isfinite(r) || std::abs(r) < opts.log_floor) {
      throw LogDomainError("|A/B| below floor at grid point " + std::to_string(p));
    }
    const int s = r > 0 ? 1 : -1;
    if (sign == 0) sign = s;
    if (s != sign) throw SignError("A/B changes sign along the torus");
    logr[p] = std::log(std::abs(r));
  }
  FourierSeries L = FourierSeries::from_grid(g, 1, 1, std::move(logr));
  const double lbar = average(L)[0];
  CohomologyOptions copts;
  copts.check_average = false;
  FourierSeries LC = solve_cohomology_constant(subtract_average(L), eq.omega, copts).phi;
  ScalarResult res;
  res.nu = sign * std::exp(lbar);
  if (std::abs(std::abs(res.nu) - 1.0) < opts.unit_tol) {
    throw UnitMultiplierError("reduced multiplier has modulus " + std::to_string(std::abs(res.nu)));
  }
  std::vector<double> c(n);
  for (std::size_t p = 0; p < n; ++p) c[p] = std::exp(LC.at(0, p));
  res.C = FourierSeries::from_grid(g, 1, 1, c);
  const FourierSeries Cs = rotate(res.C, eq.omega);
  const FourierSeries eta = to_grid(eq.eta);
  std::vector<double> rhs(n);
  for (std::size_t p = 0; p < n; ++p) rhs[p] = Cs.at(0, p) * eta.at(0, p) / B.at(0, p);
  FourierSeries W = solve_twosided_constant(res.nu, 1.0, FourierSeries::from_grid(g, 1, 1, rhs),
                                            eq.omega, opts.divisor_floor);
  std::vector<double> d(n);
  for (std::size_t p = 0; p < n; ++p) d[p] = W.at(0, p) / c[p];
  res.delta = FourierSeries::from_grid(g, 1, 1, std::move(d));
  return res;
}

FourierSeries solve_twosided(const TwoSidedEquation& eq, const DoublingOptions& opts) {
  switch (eq.regime) {
    case Regime::contractive:
      return solve_doubling_contractive(eq, opts).delta;
    case Regime::expansive:
      return solve_doubling_expansive(eq, opts).delta;
    case Regime::scalar_1d:
      return solve_1d(eq).delta;
  }
  throw ParameterError("unknown regime");
}

double twosided_residual(const TwoSidedEquation& eq, const FourierSeries& delta) {
  const FourierSeries lhs =
      field_add(field_multiply(eq.A, delta), field_multiply(rotate(delta, eq.omega), eq.B), -1.0);
  return sup_norm(field_add(lhs, eq.eta, -1.0));
}

}  // namespace kamtori
