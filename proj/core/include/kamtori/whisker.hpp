#pragma once

#include <vector>

#include "kamtori/splitting.hpp"
#include "kamtori/torus.hpp"

namespace kamtori {

// sum_n W_n(theta) s^n; each order is a matrix-shaped FourierSeries on one grid.
struct FourierTaylorSeries {
  std::vector<FourierSeries> orders;

  int top() const { return static_cast<int>(orders.size()) - 1; }
  const GridShape& grid() const { return orders.front().shape(); }
  int rows() const { return orders.front().rows(); }
  int cols() const { return orders.front().cols(); }

  static FourierTaylorSeries zeros(const GridShape& g, int rows, int cols, int top);
};

// Rank-one whisker W(theta, s) of a torus with F(W(theta, s)) = W(theta + omega, mu s).
// Order 0 is the periodic part of the torus; `base` carries winding, frequency,
// angle slots and counterterm.
struct Whisker {
  TorusEmbedding base;
  FourierTaylorSeries W;
  double mu = 0.0;
  double rho = 1.0;
  double s_max = 0.2;

  bool stable() const { return std::abs(mu) < 1.0; }
  int order() const { return W.top(); }
};

// Lifted jet of F(W(theta, s)) through order `order` on the grid.
FourierTaylorSeries ft_compose_map(const SymplecticMap& F, const Whisker& w, int order);

// E(theta, s) = F(W(theta, s)) - W(theta + omega, mu s) - c0 lambda, per order.
FourierTaylorSeries whisker_residual(const SymplecticMap& F, const Whisker& w, int order);

// Max over orders n < `below` of the sup norm of E_n.
double low_order_residual(const FourierTaylorSeries& E, int below);

struct BundleResult {
  FourierSeries W1;
  double mu = 0.0;
};

// Invariant line field and its constant multiplier: DF o K W1 = mu W1 o T_omega,
// scaled so that sup |W1| = rho.
BundleResult solve_bundle_and_multiplier(const TorusEmbedding& K, const SymplecticMap& F,
                                         const InvariantSplitting& S, Side side, double rho = 1.0);

struct OrderOptions {
  double rho = 0.0;  // 0 balances |W_n| across orders
  double s_max = 0.2;
  double conjugacy_tol = 1e-9;  // s_max is halved until the sampled conjugacy error meets it
  double resonance_margin = 1e-6;
  DoublingOptions doubling;
};

// Solves DF o K W_n - mu^n W_n o T_omega = -R_n for n = 2..L.
Whisker order_by_order(const TorusEmbedding& K, const BundleResult& bundle, const SymplecticMap& F,
                       int L, const OrderOptions& opts = {});

// Halves w.s_max until the conjugacy error on a samples x samples grid of
// (theta, s), |s| <= s_max, is at most tol. Returns the last sampled error.
double fit_domain(Whisker& w, const SymplecticMap& F, double tol = 1e-9, int samples = 20,
                  int max_halvings = 6);

// Scale freedom W(theta, s) -> W(theta, b s) giving sup |W1| = rho, plus the
// phase normalization of the torus.
Whisker normalize_whisker(Whisker w, double rho);

struct WhiskerStepOptions {
  double order_contract_tol = 1e-9;
};

// Given W exact through order L-1, returns W exact through order 2L-1.
Whisker newton_whisker_step(const Whisker& w, const SymplecticMap& F, int L,
                            const WhiskerStepOptions& opts = {});

struct FullStepOptions {
  bool counterterm = false;
  double twist_floor = 1e-8;
};

struct FullStepReport {
  double residual_before = 0.0;
  double dlambda = 0.0;
  double dmu = 0.0;
};

// Simultaneous Newton step for torus, whisker, counterterm lambda and multiplier
// mu, through order w.order().
Whisker newton_full_step(const Whisker& w, const SymplecticMap& F, const FullStepOptions& opts = {},
                         FullStepReport* report = nullptr);

// Lifted W(theta, s) by direct summation.
std::vector<double> evaluate_whisker(const Whisker& w, std::span<const double> theta, double s);

// |F(W(theta, s)) - W(theta + omega, mu s)| at one point (angles reduced).
double conjugacy_error(const SymplecticMap& F, const Whisker& w, std::span<const double> theta,
                       double s);

}  // namespace kamtori
