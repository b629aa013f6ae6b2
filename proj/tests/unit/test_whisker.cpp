#include <doctest.h>

#include "oracles.hpp"

using namespace kamtori;

namespace {

struct Setup {
  MapPtr F;
  TorusEmbedding K;
  InvariantSplitting S;
};

Setup whiskered(double eps, int n) {
  Setup s;
  s.F = model_rotator_pendulum(1.0, eps);
  const RotationVector omega = RotationVector::golden();
  const std::vector<double> base = {0.0, 0.0, omega.omega[0], 0.0};
  const SolveResult r = newton_solve(constant_embedding(*s.F, omega, GridShape::uniform(1, n), base), *s.F);
  s.K = r.torus;
  s.S = *r.splitting;
  return s;
}

Whisker truncated(const Whisker& w, int top) {
  Whisker t = w;
  t.W.orders.resize(top + 1);
  return t;
}

double max_order_gap(const Whisker& a, const Whisker& b, int from, int to) {
  double worst = 0.0;
  for (int n = from; n <= to; ++n) worst = std::max(worst, sup_norm(field_add(a.W.orders[n], b.W.orders[n], -1.0)));
  return worst;
}

double stable_eigenvalue() { return (3.0 - std::sqrt(5.0)) / 2.0; }

}  // namespace

TEST_CASE("Fourier-Taylor composition matches a pointwise Taylor fit") {
  const Setup s = whiskered(0.05, 64);
  const int order = 4;
  std::mt19937_64 rng(41);
  Whisker w;
  w.base = s.K;
  w.W = FourierTaylorSeries::zeros(s.K.grid(), 4, 1, order);
  w.W.orders[0] = s.K.K;
  for (int n = 1; n <= order; ++n) w.W.orders[n] = oracle::smooth_field(rng, s.K.grid(), 4, 1, 3, 0.3);
  w.mu = 0.4;
  const FourierTaylorSeries composed = ft_compose_map(*s.F, w, order);

  const GridShape& g = s.K.grid();
  double worst = 0.0;
  for (std::size_t p = 0; p < g.total(); p += 7) {
    double theta;
    g.point(p, &theta);
    const std::vector<double> k0 = lifted_at(s.K, std::vector<double>{theta});
    std::vector<std::vector<double>> coeff(order + 1);
    for (int n = 1; n <= order; ++n) coeff[n] = evaluate_at(w.W.orders[n], std::vector<double>{theta});
    for (int c = 0; c < 4; ++c) {
      const auto ref = oracle::fd_taylor(
          [&](double sv) {
            std::vector<double> z = k0, out(4);
            double pw = 1.0;
            for (int n = 1; n <= order; ++n) {
              pw *= sv;
              for (int i = 0; i < 4; ++i) z[i] += coeff[n][i] * pw;
            }
            s.F->eval(z.data(), out.data());
            return out[c];
          },
          order, 2e-2);
      for (int n = 1; n <= order; ++n) {
        worst = std::max(worst, std::abs(to_grid(composed.orders[n]).at(c, p) - ref[n]));
      }
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("bundle and multiplier at eps = 0 match the linearized pendulum") {
  const Setup s = whiskered(0.0, 64);
  const BundleResult st = solve_bundle_and_multiplier(s.K, *s.F, s.S, Side::stable);
  const BundleResult un = solve_bundle_and_multiplier(s.K, *s.F, s.S, Side::unstable);
  CHECK(st.mu == doctest::Approx(stable_eigenvalue()).epsilon(1e-13));
  CHECK(un.mu == doctest::Approx(1.0 / stable_eigenvalue()).epsilon(1e-13));
  // Z W1 = mu W1(theta + omega).
  const Cocycle Z = make_cocycle(s.K, *s.F);
  const FourierSeries lhs = field_multiply(Z.Z, st.W1);
  const FourierSeries rhs = field_scale(rotate(st.W1, s.K.omega), st.mu);
  CHECK(sup_norm(field_add(lhs, rhs, -1.0)) < 1e-13);
}

TEST_CASE("order-by-order whisker: residual, conjugacy and orbit rate") {
  const Setup s = whiskered(0.05, 256);
  const BundleResult b = solve_bundle_and_multiplier(s.K, *s.F, s.S, Side::stable);
  const int L = 8;
  const Whisker w = order_by_order(s.K, b, *s.F, L);
  CHECK(w.order() == L);
  CHECK(w.mu == doctest::Approx(b.mu).epsilon(1e-15));
  CHECK(low_order_residual(whisker_residual(*s.F, w, L), L + 1) < 1e-12);

  // Conjugacy by direct map evaluation.
  double worst = 0.0;
  std::vector<double> image(4);
  for (int i = 0; i < 10; ++i) {
    const double theta = 0.1 * i + 0.013;
    for (double sv : {-w.s_max, -0.3 * w.s_max, 0.5 * w.s_max, w.s_max}) {
      const std::vector<double> z = evaluate_whisker(w, std::vector<double>{theta}, sv);
      s.F->eval(z.data(), image.data());
      const std::vector<double> target = evaluate_whisker(w, std::vector<double>{theta + s.K.omega.omega[0]}, w.mu * sv);
      for (int c = 0; c < 4; ++c) worst = std::max(worst, std::abs(image[c] - target[c]));
    }
  }
  CHECK(worst < 1e-9);

  // Forward orbit approaches the torus at rate mu.
  std::vector<double> z = evaluate_whisker(w, std::vector<double>{0.2}, 0.5 * w.s_max), next(4);
  std::vector<double> dist;
  for (int n = 1; n <= 10; ++n) {
    s.F->eval(z.data(), next.data());
    z = next;
    const std::vector<double> k = lifted_at(s.K, std::vector<double>{0.2 + n * s.K.omega.omega[0]});
    double d = 0.0;
    for (int c = 0; c < 4; ++c) d = std::max(d, std::abs(z[c] - k[c]));
    dist.push_back(d);
  }
  const double rate = std::pow(dist.back() / dist.front(), 1.0 / 9.0);
  CHECK(rate == doctest::Approx(w.mu).epsilon(0.02));
}

TEST_CASE("unstable branch") {
  const Setup s = whiskered(0.05, 256);
  const BundleResult b = solve_bundle_and_multiplier(s.K, *s.F, s.S, Side::unstable);
  CHECK(b.mu > 1.0);
  const Whisker w = order_by_order(s.K, b, *s.F, 8);
  CHECK_FALSE(w.stable());
  CHECK(low_order_residual(whisker_residual(*s.F, w, 8), 9) < 1e-11);
}

TEST_CASE("normalization fixes the bundle scale") {
  const Setup s = whiskered(0.05, 128);
  const BundleResult b = solve_bundle_and_multiplier(s.K, *s.F, s.S, Side::stable, 0.7);
  CHECK(sup_norm(b.W1) == doctest::Approx(0.7).epsilon(1e-12));
  const Whisker w = order_by_order(s.K, b, *s.F, 5);
  const Whisker n = normalize_whisker(w, 0.35);
  CHECK(sup_norm(n.W.orders[1]) == doctest::Approx(0.35).epsilon(1e-12));
  // Rescaling s keeps the parameterization invariant: W_n scales by b^n.
  const double ratio = sup_norm(n.W.orders[3]) / sup_norm(w.W.orders[3]);
  const double bscale = 0.35 / w.rho;
  CHECK(ratio == doctest::Approx(bscale * bscale * bscale).epsilon(1e-10));
}

TEST_CASE("order doubling reproduces order-by-order coefficients") {
  const Setup s = whiskered(0.05, 256);
  const BundleResult b = solve_bundle_and_multiplier(s.K, *s.F, s.S, Side::stable);
  OrderOptions o;
  o.rho = 1.0;
  const Whisker ref = order_by_order(s.K, b, *s.F, 7, o);
  Whisker w = truncated(ref, 1);
  w = newton_whisker_step(w, *s.F, 2);
  CHECK(w.order() == 3);
  w = newton_whisker_step(w, *s.F, 4);
  CHECK(w.order() == 7);
  const FourierTaylorSeries E = whisker_residual(*s.F, w, 7);
  for (int n = 0; n < 8; ++n) CHECK(sup_norm(E.orders[n]) <= 1e-11);
  CHECK(max_order_gap(w, ref, 2, 7) <= 1e-10);
}

TEST_CASE("order doubling refuses inputs whose low orders are not solved") {
  const Setup s = whiskered(0.05, 64);
  const BundleResult b = solve_bundle_and_multiplier(s.K, *s.F, s.S, Side::stable);
  Whisker w = order_by_order(s.K, b, *s.F, 3);
  w.W.orders[1] = field_scale(w.W.orders[1], 1.1);
  w.mu *= 1.01;
  CHECK_THROWS_AS(newton_whisker_step(w, *s.F, 2), OrderContractError);
}

TEST_CASE("full Newton step converges quadratically from a perturbed multiplier") {
  const Setup s = whiskered(0.05, 256);
  const BundleResult b = solve_bundle_and_multiplier(s.K, *s.F, s.S, Side::stable);
  const Whisker ref = order_by_order(s.K, b, *s.F, 8);
  Whisker w = ref;
  w.mu *= 1.0 + 1e-3;
  std::vector<double> res;
  for (int it = 0; it < 6; ++it) {
    FullStepReport rep;
    w = newton_full_step(w, *s.F, {}, &rep);
    res.push_back(rep.residual_before);
    if (rep.residual_before < 1e-13) break;
  }
  const double final_res = low_order_residual(whisker_residual(*s.F, w, w.order()), w.order() + 1);
  CHECK(final_res < 1e-12);
  CHECK(w.mu == doctest::Approx(ref.mu).epsilon(1e-12));
  for (std::size_t k = 0; k + 1 < res.size() && res[k + 1] > 1e-12; ++k) CHECK(res[k + 1] < 1e3 * res[k] * res[k]);
}
