// Acceptance run: one line per criterion, nonzero exit if any fails.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <new>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"

using namespace kamtori;

// Live-byte accounting for everything allocated through operator new.
namespace {
std::atomic<std::size_t> g_live{0};
std::atomic<std::size_t> g_peak{0};

void note_alloc(std::size_t n) {
  const std::size_t now = g_live.fetch_add(n) + n;
  std::size_t peak = g_peak.load();
  while (now > peak && !g_peak.compare_exchange_weak(peak, now)) {
  }
}
}  // namespace

void* operator new(std::size_t n) {
  void* p = std::malloc(n + 16);
  if (!p) throw std::bad_alloc();
  *static_cast<std::size_t*>(p) = n;
  note_alloc(n);
  return static_cast<char*>(p) + 16;
}
void* operator new[](std::size_t n) { return operator new(n); }
void operator delete(void* p) noexcept {
  if (!p) return;
  char* base = static_cast<char*>(p) - 16;
  g_live.fetch_sub(*reinterpret_cast<std::size_t*>(base));
  std::free(base);
}
void operator delete[](void* p) noexcept { operator delete(p); }
void operator delete(void* p, std::size_t) noexcept { operator delete(p); }
void operator delete[](void* p, std::size_t) noexcept { operator delete(p); }

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int g_failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("[PRIMARY] criterion %d (%s): %s  %s\n", id, name, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

template <class Fn>
void guarded(int id, const char* name, Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    report(id, name, false, std::string("exception: ") + e.what());
  }
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

TorusEmbedding integrable(const SymplecticMap& F, const RotationVector& omega, int n) {
  std::vector<double> base(F.phase_dim(), 0.0);
  for (int a = 0; a < F.ell(); ++a) base[F.d() + F.angle_slots()[a]] = omega.omega[a];
  return constant_embedding(F, omega, GridShape::uniform(F.ell(), n), base);
}

// Least-squares slope and coefficient of determination.
std::pair<double, double> linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
    syy += y[i] * y[i];
  }
  const double cov = sxy - sx * sy / n, vx = sxx - sx * sx / n, vy = syy - sy * sy / n;
  return {cov / vx, cov * cov / (vx * vy)};
}

void integrable_exactness() {
  const auto t0 = Clock::now();
  const MapPtr F = model_standard_map(0.0);
  const SolveResult r = newton_solve(integrable(*F, RotationVector::golden(), 256), *F);
  const double res = sup_norm(invariance_residual(r.torus, *F));
  const double t = seconds_since(t0);
  report(1, "integrable exactness", res <= 1e-14 && r.log.empty() && t < 0.1,
         fmt("residual=%.2e", res) + " steps=" + std::to_string(r.log.size()) + fmt(" time=%.3fs", t));
}

void quadratic_convergence() {
  const auto t0 = Clock::now();
  const MapPtr F = model_standard_map(0.3);
  const SolveResult r = newton_solve(integrable(*F, RotationVector::golden(), 1024), *F);
  const double t = seconds_since(t0);
  double constant = 0.0;
  for (const NewtonReport& s : r.log) {
    if (s.residual_after < 1e-13) break;
    constant = std::max(constant, s.residual_after / (s.residual_before * s.residual_before));
  }
  const double res = r.log.empty() ? 0.0 : r.log.back().residual_after;
  report(2, "quadratic convergence",
         r.log.size() <= 6 && res <= 1e-12 && std::isfinite(constant) && t < 5.0,
         "steps=" + std::to_string(r.log.size()) + fmt(" residual=%.2e", res) + fmt(" C=%.3g", constant) +
             fmt(" time=%.3fs", t));
}

void counterterm_vanishes() {
  const MapPtr F = model_standard_map(0.3);
  SolverOptions o;
  o.counterterm = true;
  const SolveResult r = newton_solve(integrable(*F, RotationVector::golden(), 1024), *F, o);
  const double lam = std::abs(r.torus.lambda[0]);
  report(3, "counterterm vanishes", lam <= 1e-10 && r.log.back().residual_after <= 1e-12, fmt("|lambda|=%.2e", lam));
}

void complexity() {
  const auto t0 = Clock::now();
  const MapPtr F = model_standard_map(0.3);
  std::vector<double> times, peaks;
  std::ostringstream detail;
  for (int e = 12; e <= 15; ++e) {
    const int n = 1 << e;
    const TorusEmbedding K = integrable(*F, RotationVector::golden(), n);
    (void)newton_center_step(K, *F);  // warm-up: transform plans
    double best = 1e300;
    std::size_t extra = 0;
    for (int rep = 0; rep < 7; ++rep) {
      const std::size_t base = g_live.load();
      g_peak.store(base);
      const auto s0 = Clock::now();
      const StepResult st = newton_center_step(K, *F);
      best = std::min(best, seconds_since(s0));
      extra = std::max(extra, g_peak.load() - base);
    }
    times.push_back(best);
    peaks.push_back(static_cast<double>(extra));
    detail << " N=2^" << e << ":" << fmt("%.4fs", best) << "/" << fmt("%.2fMB", extra / 1048576.0);
  }
  const double r1 = times[2] / times[1], r2 = times[3] / times[2];
  double mem_ratio = 0.0;
  for (std::size_t i = 0; i + 1 < peaks.size(); ++i) mem_ratio = std::max(mem_ratio, peaks[i + 1] / peaks[i]);
  const double t = seconds_since(t0);
  report(4, "O(N log N) step cost", r1 <= 2.5 && r2 <= 2.5 && mem_ratio <= 2.2 && t < 60.0,
         fmt("time ratios=%.2f", r1) + fmt(",%.2f", r2) + fmt(" max memory ratio=%.2f", mem_ratio) +
             fmt(" total=%.1fs", t) + detail.str());
}

void cohomology_oracles() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240605);
  const RotationVector omega = RotationVector::golden();
  const GridShape g = GridShape::uniform(1, 64);
  double worst = 0.0, worst_r2 = 1.0, worst_slope = -1e300;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = trial % 2 == 0 ? 1 : 2;
    const oracle::TrigMatrix A = oracle::random_trig_matrix(rng, n, 2.0, 0.05);
    const oracle::TrigMatrix B = oracle::random_trig_matrix(rng, n, 0.9, 0.05);
    const oracle::TrigMatrix eta = oracle::random_trig_matrix(rng, n, 0.0, 1.0);
    const TwoSidedEquation eq{A.sample(g), B.sample(g), eta.sample(g), omega, Regime::contractive, {}, {}};
    auto deviation = [&](const FourierSeries& delta) {
      const FourierSeries v = to_grid(delta);
      double d = 0.0;
      for (std::size_t p = 0; p < v.points(); ++p) {
        double theta;
        g.point(p, &theta);
        const Mat exact = oracle::forward_series(A, B, eta, omega.omega[0], theta, 64);
        d = std::max(d, (matrix_at(v, p) - exact).cwiseAbs().maxCoeff());
      }
      return d;
    };
    worst = std::max(worst, deviation(solve_doubling_contractive(eq).delta));

    // Truncation error against the number of doublings.
    if (trial % 5 == 0) {
      std::vector<double> x, y;
      for (int k = 1; k <= 6; ++k) {
        DoublingOptions o;
        o.max_doublings = k;
        o.early_exit = 0.0;
        const double err = deviation(solve_doubling_contractive(eq, o).delta);
        if (err < 1e-13) break;
        x.push_back(std::ldexp(1.0, k));
        y.push_back(std::log(err));
      }
      if (x.size() >= 3) {
        const auto [slope, r2] = linear_fit(x, y);
        worst_r2 = std::min(worst_r2, r2);
        worst_slope = std::max(worst_slope, slope);
      } else {
        worst_r2 = 0.0;
      }
    }
  }
  const double t = seconds_since(t0);
  report(5, "cohomology oracles", worst <= 1e-11 && worst_r2 >= 0.98 && worst_slope < 0.0 && t < 10.0,
         fmt("max deviation=%.2e", worst) + fmt(" fit R^2>=%.4f", worst_r2) + fmt(" slope<=%.3f", worst_slope) +
             fmt(" time=%.2fs", t));
}

void projection_newton() {
  const auto t0 = Clock::now();
  const MapPtr F = model_rotator_pendulum(1.0, 0.0);
  const SolveResult run = newton_solve(integrable(*F, RotationVector::golden(), 128), *F);
  const Cocycle Z = make_cocycle(run.torus, *F);
  const InvariantSplitting exact = initial_splitting(Z, 1e-3, 1);
  std::mt19937_64 rng(606);

  bool ok = true;
  std::ostringstream detail;
  std::vector<FourierSeries> finals;
  for (Side side : {Side::stable, Side::unstable}) {
    const FourierSeries& P0 = side == Side::stable ? exact.Pi_s : *exact.Pi_u;
    FourierSeries P = reproject(field_add(P0, oracle::smooth_field(rng, run.torus.grid(), 4, 4, 3, 1e-3)), 1);
    std::vector<double> res;
    for (int it = 0; it < 4; ++it) {
      const ProjectionStep st = newton_projection_step(P, 1, Z, side);
      P = reproject(st.P, 1);
      res.push_back(projection_residuals(P, Z).norm);
      if (res.back() <= 1e-12) break;
    }
    double ratio = 0.0;
    for (std::size_t k = 0; k + 1 < res.size(); ++k) {
      if (res[k + 1] > 1e-13) ratio = std::max(ratio, res[k + 1] / (res[k] * res[k]));
    }
    ok = ok && res.back() <= 1e-12 && std::isfinite(ratio);
    detail << (side == Side::stable ? " stable:" : " unstable:") << res.size() << " steps"
           << fmt(" final=%.2e", res.back()) << fmt(" C=%.3g", ratio);
    finals.push_back(P);
  }
  InvariantSplitting S = exact;
  S.Pi_s = finals[0];
  S.Pi_u = finals[1];
  S.Pi_cu = field_add(field_identity(S.Pi_s.shape(), 4), S.Pi_s, -1.0);
  const double idem_s = sup_norm(field_add(field_multiply(S.Pi_s, S.Pi_s), S.Pi_s, -1.0));
  const double idem_u = sup_norm(field_add(field_multiply(*S.Pi_u, *S.Pi_u), *S.Pi_u, -1.0));
  const double idem_cu = sup_norm(field_add(field_multiply(S.Pi_cu, S.Pi_cu), S.Pi_cu, -1.0));
  const double sum = sup_norm(field_add(field_add(S.Pi_s, S.Pi_cu), field_identity(S.Pi_s.shape(), 4), -1.0));
  const double cu_invariance = projection_residuals(S.Pi_s, Z).norm;
  const double idem = std::max({idem_s, idem_u, idem_cu});
  const double t = seconds_since(t0);
  ok = ok && idem <= 1e-12 && sum <= 1e-12 && cu_invariance <= 1e-12 && t < 5.0;
  report(6, "projection Newton", ok,
         fmt("idempotence=%.2e", idem) + fmt(" |Pi_s+Pi_cu-Id|=%.2e", sum) + fmt(" time=%.2fs", t) + detail.str());
}

struct WhiskeredRun {
  MapPtr F;
  SolveResult run;
};

WhiskeredRun whiskered_run(double eps, int n) {
  WhiskeredRun w;
  w.F = model_rotator_pendulum(1.0, eps);
  w.run = newton_solve(integrable(*w.F, RotationVector::golden(), n), *w.F);
  return w;
}

void whisker_conjugacy() {
  const auto t0 = Clock::now();
  const WhiskeredRun wr = whiskered_run(0.05, 512);
  const TorusEmbedding& K = wr.run.torus;
  const BundleResult b = solve_bundle_and_multiplier(K, *wr.F, *wr.run.splitting, Side::stable);
  OrderOptions o;
  o.s_max = 0.1;
  const Whisker w = order_by_order(K, b, *wr.F, 10, o);

  // Direct evaluation on a 20 x 20 sample with |s| <= 0.1.
  double worst = 0.0;
  std::vector<double> image(4);
  for (int i = 0; i < 20; ++i) {
    const double theta = (i + 0.5) / 20.0;
    for (int j = 0; j < 20; ++j) {
      const double s = -0.1 + 0.2 * j / 19.0;
      const std::vector<double> z = evaluate_whisker(w, std::vector<double>{theta}, s);
      wr.F->eval(z.data(), image.data());
      const std::vector<double> target = evaluate_whisker(w, std::vector<double>{theta + K.omega.omega[0]}, w.mu * s);
      for (int c = 0; c < 4; ++c) worst = std::max(worst, std::abs(image[c] - target[c]));
    }
  }

  // Distance of forward orbits to the torus, fitted rate over several starts.
  double worst_rate_err = 0.0;
  for (double theta0 : {0.1, 0.4, 0.75}) {
    std::vector<double> z = evaluate_whisker(w, std::vector<double>{theta0}, 0.05), next(4);
    std::vector<double> x, y;
    for (int n = 1; n <= 12; ++n) {
      wr.F->eval(z.data(), next.data());
      z = next;
      const std::vector<double> k = lifted_at(K, std::vector<double>{theta0 + n * K.omega.omega[0]});
      double d = 0.0;
      for (int c = 0; c < 4; ++c) d = std::max(d, std::abs(z[c] - k[c]));
      x.push_back(n);
      y.push_back(std::log(d));
    }
    const double rate = std::exp(linear_fit(x, y).first);
    worst_rate_err = std::max(worst_rate_err, std::abs(rate / w.mu - 1.0));
  }
  const double t = seconds_since(t0);
  report(7, "whisker conjugacy", worst <= 1e-9 && worst_rate_err <= 0.02 && t < 30.0,
         fmt("conjugacy=%.2e", worst) + fmt(" mu=%.9f", w.mu) + fmt(" rate deviation=%.2e", worst_rate_err) +
             fmt(" time=%.2fs", t));
}

void order_doubling() {
  const WhiskeredRun wr = whiskered_run(0.05, 256);
  const BundleResult b = solve_bundle_and_multiplier(wr.run.torus, *wr.F, *wr.run.splitting, Side::stable);
  OrderOptions o;
  o.rho = 1.0;
  const Whisker ref = order_by_order(wr.run.torus, b, *wr.F, 7, o);
  Whisker w = ref;
  w.W.orders.resize(2);
  w = newton_whisker_step(w, *wr.F, 2);
  w = newton_whisker_step(w, *wr.F, 4);
  const FourierTaylorSeries E = whisker_residual(*wr.F, w, 7);
  double worst_res = 0.0, worst_gap = 0.0;
  for (int n = 0; n < 8; ++n) worst_res = std::max(worst_res, sup_norm(E.orders[n]));
  for (int n = 2; n <= 7; ++n) {
    worst_gap = std::max(worst_gap, sup_norm(field_add(w.W.orders[n], ref.W.orders[n], -1.0)));
  }
  report(8, "order doubling", w.order() == 7 && worst_res <= 1e-11 && worst_gap <= 1e-10,
         "order=" + std::to_string(w.order()) + fmt(" residual orders<8=%.2e", worst_res) +
             fmt(" |W_n - W_n(order-by-order)|=%.2e", worst_gap));
}

void center_splitting() {
  const WhiskeredRun wr = whiskered_run(0.05, 256);
  const InvariantSplitting& S = *wr.run.splitting;
  const RotationVector& omega = wr.run.torus.omega;
  double worst_sum = 0.0, worst_eq = 0.0;
  // The converged torus and the starting guess of the same run, with the run's splitting.
  for (const TorusEmbedding& K : {wr.run.torus, integrable(*wr.F, omega, 256)}) {
    const Cocycle Z = make_cocycle(K, *wr.F);
    const FourierSeries E = invariance_residual(K, *wr.F);
    const SplitError parts = split_error(E, S, omega);
    const FourierSeries sum = field_add(field_add(parts.stable, parts.center), parts.unstable);
    const double scale = std::max(1.0, sup_norm(E));
    worst_sum = std::max(worst_sum, sup_norm(field_add(sum, E, -1.0)) / scale);
    auto defect = [&](const FourierSeries& delta, const FourierSeries& rhs) {
      const FourierSeries lhs = field_add(field_multiply(Z.Z, delta), rotate(delta, omega), -1.0);
      return sup_norm(field_add(lhs, rhs)) / scale;
    };
    // Hyperbolic corrections use the splitting of the cocycle they solve for.
    const InvariantSplitting local = refine_splitting(initial_splitting(Z, 1e-3, 1), Z);
    const SplitError lp = split_error(E, local, omega);
    worst_eq = std::max(worst_eq, defect(solve_stable(lp.stable, Z, local), lp.stable));
    worst_eq = std::max(worst_eq, defect(solve_unstable(lp.unstable, Z, local), lp.unstable));
  }
  report(9, "center/hyperbolic splitting", worst_sum <= 1e-13 && worst_eq <= 1e-11,
         fmt("recombination=%.2e", worst_sum) + fmt(" hyperbolic equations=%.2e", worst_eq));
}

}  // namespace

int main() {
  guarded(1, "integrable exactness", integrable_exactness);
  guarded(2, "quadratic convergence", quadratic_convergence);
  guarded(3, "counterterm vanishes", counterterm_vanishes);
  guarded(4, "O(N log N) step cost", complexity);
  guarded(5, "cohomology oracles", cohomology_oracles);
  guarded(6, "projection Newton", projection_newton);
  guarded(7, "whisker conjugacy", whisker_conjugacy);
  guarded(8, "order doubling", order_doubling);
  guarded(9, "center/hyperbolic splitting", center_splitting);
  std::printf("%d criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
