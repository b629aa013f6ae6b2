#include "kamtori/splitting.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

#include "kamtori/errors.hpp"

namespace kamtori {

namespace {

FourierSeries scalar_one(const GridShape& g) {
  const double one = 1.0;
  return FourierSeries::constant(g, 1, 1, std::span<const double>(&one, 1));
}

FourierSeries complement(const FourierSeries& P) {
  return field_add(field_identity(P.shape(), P.rows()), P, -1.0);
}

// Q(theta) pinv(N(theta)) Qs(theta): inverse of N restricted to range(Q) -> range(Qs).
FourierSeries restricted_inverse(const FourierSeries& N, const FourierSeries& Q,
                                 const FourierSeries& Qs, double threshold) {
  return field_map(N.shape(), N.rows(), N.cols(), [&](std::size_t p) -> Mat {
    return matrix_at(Q, p) * pseudo_inverse(matrix_at(N, p), threshold) * matrix_at(Qs, p);
  });
}

// Real eigenvectors of m for eigenvalues selected by `pick`.
Mat eigvecs(const Mat& m, const std::function<bool(double)>& pick, std::vector<double>& values) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(m), true);
  std::vector<Eigen::VectorXd> cols;
  values.clear();
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    const std::complex<double> ev = es.eigenvalues()(i);
    if (!pick(std::abs(ev))) continue;
    if (std::abs(ev.imag()) > 1e-12) {
      throw UnsupportedRankError("complex hyperbolic eigenvalues are not supported");
    }
    values.push_back(ev.real());
    cols.push_back(es.eigenvectors().col(i).real());
  }
  // Sort by eigenvalue so that left and right bases pair up.
  std::vector<int> order(values.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return values[a] < values[b]; });
  Mat v(m.rows(), static_cast<int>(cols.size()));
  std::vector<double> sorted;
  for (std::size_t j = 0; j < order.size(); ++j) {
    v.col(j) = cols[order[j]];
    sorted.push_back(values[order[j]]);
  }
  values = sorted;
  return v;
}

Mat spectral_projection(const Mat& zbar, const std::function<bool(double)>& pick) {
  std::vector<double> vr, vl;
  const Mat right = eigvecs(zbar, pick, vr);
  const Mat left = eigvecs(zbar.transpose(), pick, vl);
  if (right.cols() == 0) return Mat::Zero(zbar.rows(), zbar.cols());
  const Mat pairing = left.transpose() * right;
  return right * pairing.inverse() * left.transpose();
}

double fit_rate(const std::vector<double>& norms, double* prefactor, bool* reliable) {
  // Least squares log s_n = a + n log mu over n = 1..n_max.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const int n = static_cast<int>(norms.size());
  for (int i = 0; i < n; ++i) {
    const double x = i + 1;
    const double y = std::log(std::max(norms[i], 1e-300));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / n;
  double worst = 0.0, cmax = 0.0;
  for (int i = 0; i < n; ++i) {
    const double y = std::log(std::max(norms[i], 1e-300));
    worst = std::max(worst, std::abs(y - intercept - slope * (i + 1)));
    cmax = std::max(cmax, norms[i] / std::exp(slope * (i + 1)));
  }
  *prefactor = std::max(cmax, 1.0);
  *reliable = worst < 0.5 * std::abs(slope) * n + 1.0;
  return std::exp(slope);
}

// sup_theta || prod of n one-step maps ||, forward along theta + k omega
// (sign > 0) or backward along theta - (k+1) omega (sign < 0).
std::vector<double> product_norms(const FourierSeries& step, const RotationVector& omega, int sign,
                                  int n_max) {
  auto shifted = [&](int k) {
    std::vector<double> w(omega.omega);
    for (double& x : w) x *= k;
    return rotate(step, w);
  };
  std::vector<double> out;
  FourierSeries prod = sign > 0 ? to_grid(step) : shifted(-1);
  for (int n = 1; n <= n_max; ++n) {
    out.push_back(field_sup_opnorm(prod));
    prod = field_multiply(shifted(sign > 0 ? n : -(n + 1)), prod);
  }
  return out;
}

}  // namespace

FourierSeries InvariantSplitting::center() const {
  FourierSeries c = complement(Pi_s);
  if (Pi_u) c = field_add(c, *Pi_u, -1.0);
  return c;
}

Cocycle make_cocycle(const TorusEmbedding& K, const SymplecticMap& F) {
  const std::vector<double> z = lifted_values(K);
  const GridShape& g = K.grid();
  const std::size_t n = g.total();
  const int m = F.phase_dim();
  auto point = [&](std::size_t p) {
    std::vector<double> v(m);
    for (int i = 0; i < m; ++i) v[i] = z[i * n + p];
    return v;
  };
  Cocycle c;
  c.omega = K.omega;
  c.Z = field_map(g, m, m, [&](std::size_t p) { return F.jacobian(point(p).data()); });
  c.Z_inv = field_map(g, m, m, [&](std::size_t p) { return F.jacobian_inverse(point(p).data()); });
  return c;
}

Cocycle constant_cocycle(const GridShape& grid, const Mat& Z, const RotationVector& omega) {
  Cocycle c;
  c.omega = omega;
  c.Z = field_map(grid, Z.rows(), Z.cols(), [&](std::size_t) { return Z; });
  const Mat zi = Z.inverse();
  c.Z_inv = field_map(grid, Z.rows(), Z.cols(), [&](std::size_t) { return zi; });
  return c;
}

InvariantSplitting initial_splitting(const Cocycle& Z, double gap, int hyperbolic_rank) {
  const std::vector<double> avg = average(Z.Z);
  const int m = Z.Z.rows();
  Mat zbar(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) zbar(i, j) = avg[i * m + j];
  }
  double lo = 1.0 - gap, hi = 1.0 + gap;
  if (hyperbolic_rank >= 0) {
    if (2 * hyperbolic_rank > m) throw ParameterError("hyperbolic rank exceeds half the dimension");
    // Cut between the r-th and (r+1)-th modulus from each end.
    Eigen::VectorXd mod = zbar.eigenvalues().cwiseAbs();
    std::sort(mod.begin(), mod.end());
    const int r = hyperbolic_rank;
    lo = r == 0 ? 0.0 : 0.5 * (mod[r - 1] + mod[r]);
    hi = r == 0 ? std::numeric_limits<double>::infinity() : 0.5 * (mod[m - r - 1] + mod[m - r]);
    if (r > 0 && (mod[r - 1] >= 1.0 - gap || mod[m - r] <= 1.0 + gap)) {
      throw InsufficientHyperbolicityError("averaged cocycle has no hyperbolic gap at the requested rank");
    }
  }
  const Mat ps = spectral_projection(zbar, [&](double r) { return r < lo; });
  const Mat pu = spectral_projection(zbar, [&](double r) { return r > hi; });
  const GridShape& g = Z.Z.shape();
  InvariantSplitting s;
  s.Pi_s = field_map(g, m, m, [&](std::size_t) { return ps; });
  s.Pi_cu = complement(s.Pi_s);
  s.Pi_u = field_map(g, m, m, [&](std::size_t) { return pu; });
  s.Pi_cs = complement(*s.Pi_u);
  s.stable_rank = static_cast<int>(std::lround(ps.trace()));
  s.unstable_rank = static_cast<int>(std::lround(pu.trace()));
  return s;
}

ProjectionPair projection_residuals(const FourierSeries& P, const Cocycle& Z) {
  const FourierSeries Q = complement(P);
  const FourierSeries Ps = rotate(P, Z.omega);
  const FourierSeries Qs = rotate(Q, Z.omega);
  ProjectionPair r;
  r.E_complement = field_multiply(field_multiply(Qs, Z.Z), P);
  r.E_own = field_multiply(field_multiply(Ps, Z.Z), Q);
  r.norm = std::max(sup_norm(r.E_complement), sup_norm(r.E_own));
  return r;
}

FourierSeries reproject(const FourierSeries& P0, int rank, const SplittingOptions& opts) {
  const FourierSeries P = to_grid(P0);
  return field_map(P.shape(), P.rows(), P.cols(), [&](std::size_t p) -> Mat {
    const Mat m = matrix_at(P, p);
    Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    int r = 0;
    for (int i = 0; i < s.size(); ++i) {
      if (s(i) > opts.snap_zero && s(i) < opts.snap_one) {
        throw AmbiguousRankError("singular value " + std::to_string(s(i)) +
                                 " is neither near 0 nor near 1");
      }
      if (s(i) > opts.snap_max) {
        throw AmbiguousRankError("singular value " + std::to_string(s(i)) +
                                 " exceeds the projection window");
      }
      if (s(i) >= opts.snap_one) ++r;
    }
    if (r != rank) {
      throw AmbiguousRankError("projection rank " + std::to_string(r) + " differs from expected " +
                               std::to_string(rank));
    }
    if (r == 0) return Mat::Zero(m.rows(), m.cols());
    const Mat U = svd.matrixU().leftCols(r);
    const Mat V = svd.matrixV().leftCols(r);
    const Mat pairing = V.transpose() * U;
    return U * pairing.inverse() * V.transpose();
  });
}

ProjectionStep newton_projection_step(const FourierSeries& P0, int rank, const Cocycle& Z,
                                      Side side, const SplittingOptions& opts) {
  const FourierSeries P = to_grid(P0);
  const FourierSeries Q = complement(P);
  const FourierSeries Ps = rotate(P, Z.omega);
  const FourierSeries Qs = rotate(Q, Z.omega);
  const FourierSeries NP = field_multiply(field_multiply(Ps, Z.Z), P);
  const FourierSeries NQ = field_multiply(field_multiply(Qs, Z.Z), Q);
  const FourierSeries EQ = field_multiply(field_multiply(Qs, Z.Z), P);
  const FourierSeries EP = field_multiply(field_multiply(Ps, Z.Z), Q);
  ProjectionStep step;
  step.residual_before = std::max(sup_norm(EQ), sup_norm(EP));

  // N_P D_P - D_P(theta+omega) N_Q = E_P and N_Q D_Q - D_Q(theta+omega) N_P = -E_Q.
  TwoSidedEquation own{NP, NQ, EP, Z.omega, Regime::expansive, std::nullopt, std::nullopt};
  TwoSidedEquation other{NQ, NP, field_scale(EQ, -1.0), Z.omega, Regime::contractive,
                         std::nullopt, std::nullopt};
  if (side == Side::stable) {
    const FourierSeries RQ = restricted_inverse(NQ, Q, Qs, opts.pinv_threshold);
    own.B_inv = RQ;
    other.A_inv = RQ;
  } else {
    const FourierSeries RP = restricted_inverse(NP, P, Ps, opts.pinv_threshold);
    own.regime = Regime::contractive;
    own.A_inv = RP;
    other.regime = Regime::expansive;
    other.B_inv = RP;
  }
  DoublingResult dp, dq;
  try {
    dp = own.regime == Regime::contractive ? solve_doubling_contractive(own, opts.doubling)
                                           : solve_doubling_expansive(own, opts.doubling);
    dq = other.regime == Regime::contractive ? solve_doubling_contractive(other, opts.doubling)
                                             : solve_doubling_expansive(other, opts.doubling);
  } catch (const RegimeViolationError& e) {
    throw InsufficientHyperbolicityError(e.what());
  }
  step.kappa = std::max(dp.kappa, dq.kappa);
  step.P = reproject(field_add(field_add(P, dp.delta), dq.delta), rank, opts);
  return step;
}

InvariantSplitting refine_splitting(InvariantSplitting S, const Cocycle& Z,
                                    const SplittingOptions& opts, SplittingReport* report) {
  auto iterate = [&](FourierSeries P, int rank, Side side, std::vector<double>* log) {
    for (int it = 0; it <= opts.max_iter; ++it) {
      const double r = projection_residuals(P, Z).norm;
      if (log) log->push_back(r);
      if (r <= opts.tol) return P;
      if (it == opts.max_iter) break;
      P = newton_projection_step(P, rank, Z, side, opts).P;
    }
    std::vector<double> trace = log ? *log : std::vector<double>{};
    throw NoConvergenceError("projection Newton did not reach tolerance", trace);
  };
  S.Pi_s = iterate(S.Pi_s, S.stable_rank, Side::stable, report ? &report->stable_residuals : nullptr);
  S.Pi_cu = complement(S.Pi_s);
  if (S.Pi_u) {
    S.Pi_u = iterate(*S.Pi_u, S.unstable_rank, Side::unstable,
                     report ? &report->unstable_residuals : nullptr);
    S.Pi_cs = complement(*S.Pi_u);
  }
  return S;
}

SplitError split_error(const FourierSeries& E, const InvariantSplitting& S,
                       const RotationVector& omega) {
  if (!S.Pi_u) throw ParameterError("error splitting needs the unstable projection");
  SplitError out;
  out.stable = field_multiply(rotate(S.Pi_s, omega), E);
  out.unstable = field_multiply(rotate(*S.Pi_u, omega), E);
  out.center = field_add(field_add(E, out.stable, -1.0), out.unstable, -1.0);
  return out;
}

FourierSeries solve_stable(const FourierSeries& E_s, const Cocycle& Z, const InvariantSplitting& S,
                           const DoublingOptions& opts) {
  const FourierSeries Ps = rotate(S.Pi_s, Z.omega);
  const FourierSeries one = scalar_one(Z.Z.shape());
  TwoSidedEquation eq{field_multiply(field_multiply(Ps, Z.Z), S.Pi_s), one, field_scale(E_s, -1.0),
                      Z.omega, Regime::expansive, std::nullopt, one};
  try {
    return solve_doubling_expansive(eq, opts).delta;
  } catch (const RegimeViolationError& e) {
    throw InsufficientHyperbolicityError(e.what());
  }
}

FourierSeries solve_unstable(const FourierSeries& E_u, const Cocycle& Z,
                             const InvariantSplitting& S, const DoublingOptions& opts) {
  if (!S.Pi_u) throw ParameterError("unstable correction needs the unstable projection");
  const FourierSeries Pus = rotate(*S.Pi_u, Z.omega);
  const FourierSeries one = scalar_one(Z.Z.shape());
  TwoSidedEquation eq{Z.Z, one, field_scale(E_u, -1.0), Z.omega, Regime::contractive,
                      field_multiply(field_multiply(*S.Pi_u, Z.Z_inv), Pus), std::nullopt};
  try {
    return solve_doubling_contractive(eq, opts).delta;
  } catch (const RegimeViolationError& e) {
    throw InsufficientHyperbolicityError(e.what());
  }
}

HyperbolicityRates estimate_rates(const Cocycle& Z, const InvariantSplitting& S, int n_max) {
  HyperbolicityRates r;
  bool ok = true;
  double c = 1.0;
  // Restricted one-step maps re-project at every step, removing leakage.
  const FourierSeries Ps = rotate(S.Pi_s, Z.omega);
  const FourierSeries Ns = field_multiply(field_multiply(Ps, Z.Z), S.Pi_s);
  r.mu_stable = fit_rate(product_norms(Ns, Z.omega, +1, n_max), &c, &ok);
  r.C = c;
  r.reliable = ok;
  if (S.Pi_u) {
    const FourierSeries Pus = rotate(*S.Pi_u, Z.omega);
    const FourierSeries Ru = field_multiply(field_multiply(*S.Pi_u, Z.Z_inv), Pus);
    r.mu_unstable = fit_rate(product_norms(Ru, Z.omega, -1, n_max), &c, &ok);
    r.C = std::max(r.C, c);
    r.reliable = r.reliable && ok;
  }
  const FourierSeries Pc = S.center();
  if (sup_norm(Pc) > 1e-12) {
    const FourierSeries Pcs = rotate(Pc, Z.omega);
    const FourierSeries Nc = field_multiply(field_multiply(Pcs, Z.Z), Pc);
    const FourierSeries Rc = field_multiply(field_multiply(Pc, Z.Z_inv), Pcs);
    double c1 = 1.0, c2 = 1.0;
    bool ok1 = true, ok2 = true;
    const double fwd = fit_rate(product_norms(Nc, Z.omega, +1, n_max), &c1, &ok1);
    const double bwd = fit_rate(product_norms(Rc, Z.omega, -1, n_max), &c2, &ok2);
    r.mu_center = std::max(fwd, bwd);
    r.C = std::max({r.C, c1, c2});
  }
  return r;
}

}  // namespace kamtori
