#include "kamtori/torus.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "kamtori/errors.hpp"

namespace kamtori {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Mat average_matrix(const FourierSeries& f) {
  const std::vector<double> avg = average(f);
  Mat m(f.rows(), f.cols());
  for (int i = 0; i < f.rows(); ++i) {
    for (int j = 0; j < f.cols(); ++j) m(i, j) = avg[i * f.cols() + j];
  }
  return m;
}

FourierSeries constant_field(const GridShape& g, const Mat& m) {
  return field_map(g, m.rows(), m.cols(), [&](std::size_t) { return m; });
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

void check_jumps(const FourierSeries& E, const std::vector<int>& slots, double threshold) {
  const GridShape& g = E.shape();
  const std::size_t n = g.total();
  // Neighbour along the last axis (wrapping) is enough to catch branch flips.
  const int last = g.size(g.dim() - 1);
  for (int s : slots) {
    const auto v = E.grid(s);
    for (std::size_t p = 0; p < n; ++p) {
      const std::size_t q = (p % last == static_cast<std::size_t>(last - 1)) ? p + 1 - last : p + 1;
      if (std::abs(v[p] - v[q]) > threshold) {
        throw WindingError("angle residual jumps between neighbouring grid points; the winding "
                           "is inconsistent with the map");
      }
    }
  }
}

struct CenterCorrection {
  FourierSeries delta;        // 2d x 1
  std::vector<double> dlambda;
  double twist = 0.0;
  double norm_N = 0.0;
  double cond_M = 0.0;
  double divisor = 0.0;
};

// Solves Z D - D o T_omega - c0 dlambda = -E on the center directions spanned by M.
CenterCorrection center_correction(const TorusEmbedding& K, const SymplecticMap& F,
                                   const FourierSeries& E, const FourierSeries& c0,
                                   const SolverOptions& opts) {
  const int ell = K.ell();
  const GridShape& g = K.grid();
  const ReducibilityFrame fr = build_frame(K, F, opts);
  const FourierSeries Ms = rotate(fr.M, K.omega);
  const Mat& J = F.structure().J;

  Mat shortcut = Mat::Zero(2 * ell, 2 * ell);
  shortcut.topRightCorner(ell, ell) = -Mat::Identity(ell, ell);
  shortcut.bottomLeftCorner(ell, ell) = Mat::Identity(ell, ell);

  // Pointwise projector (M+^T J M+)^{-1} M+^T J.
  const FourierSeries proj = field_map(g, 2 * ell, K.phase_dim(), [&](std::size_t p) -> Mat {
    const Mat m = matrix_at(Ms, p);
    const Mat mtj = m.transpose() * J;
    if (opts.frame_inverse == FrameInverse::shortcut) return shortcut * mtj;
    const Mat G = mtj * m;
    return G.partialPivLu().solve(mtj);
  });
  const FourierSeries Et = field_multiply(proj, E);
  const FourierSeries E1 = field_block(Et, 0, 0, ell, 1);
  const FourierSeries E2 = field_block(Et, ell, 0, ell, 1);

  CenterCorrection out;
  out.cond_M = fr.cond_M;
  out.norm_N = sup_norm(fr.N);
  Vec delta = Vec::Zero(ell);
  FourierSeries B1, B2;
  if (opts.counterterm) {
    const FourierSeries Bt = field_multiply(proj, c0);
    B1 = field_block(Bt, 0, 0, ell, ell);
    B2 = field_block(Bt, ell, 0, ell, ell);
    const Mat b2 = average_matrix(B2);
    Eigen::JacobiSVD<Mat> svd(b2);
    if (svd.singularValues()(ell - 1) < opts.twist_floor) {
      throw DegeneratePairingError("counterterm direction does not pair with the torus");
    }
    const std::vector<double> e2 = average(E2);
    delta = b2.partialPivLu().solve(Eigen::Map<const Eigen::VectorXd>(e2.data(), ell));
  } else {
    const std::vector<double> e2 = average(E2);
    const double scale = sup_norm(E2);
    if (max_abs(e2) > std::max(opts.cohomology.zero_average_tol, scale)) {
      throw ObstructionError("average of the symplectic-conjugate residual is not small");
    }
  }

  FourierSeries rhs2 = field_scale(E2, -1.0);
  if (opts.counterterm) rhs2 = field_add(rhs2, field_multiply(B2, constant_field(g, delta)));
  CohomologyOptions copts = opts.cohomology;
  copts.check_average = false;
  CohomologyResult w2 = solve_cohomology_constant(subtract_average(rhs2), K.omega, copts);

  const Mat abar = average_matrix(fr.torsion);
  Eigen::JacobiSVD<Mat> asvd(abar);
  out.twist = asvd.singularValues()(ell - 1);
  if (out.twist < opts.twist_floor) {
    std::ostringstream os;
    os << "average torsion " << out.twist << " below floor " << opts.twist_floor;
    throw TwistDegeneracyError(os.str());
  }
  const std::vector<double> e1 = average(E1);
  const std::vector<double> aw = average(field_multiply(fr.torsion, w2.phi));
  Vec r(ell);
  for (int i = 0; i < ell; ++i) r(i) = -e1[i] - aw[i];
  if (opts.counterterm) r += average_matrix(B1) * delta;
  const Vec w2bar = abar.partialPivLu().solve(r);
  const FourierSeries W2 = field_add(w2.phi, constant_field(g, w2bar));

  FourierSeries rhs1 = field_add(field_scale(E1, -1.0), field_multiply(fr.torsion, W2), -1.0);
  if (opts.counterterm) rhs1 = field_add(rhs1, field_multiply(B1, constant_field(g, delta)));
  CohomologyResult w1 = solve_cohomology_constant(subtract_average(rhs1), K.omega, copts);
  out.divisor = std::min(w1.min_divisor, w2.min_divisor);

  const FourierSeries W = field_map(g, 2 * ell, 1, [&](std::size_t p) -> Mat {
    Mat v(2 * ell, 1);
    for (int i = 0; i < ell; ++i) {
      v(i, 0) = w1.phi.at(i, p);
      v(ell + i, 0) = W2.at(i, p);
    }
    return v;
  });
  out.delta = field_multiply(fr.M, W);
  out.dlambda.assign(delta.data(), delta.data() + ell);
  return out;
}

TorusEmbedding apply_correction(const TorusEmbedding& K, const FourierSeries& delta,
                                const std::vector<double>& dlambda) {
  TorusEmbedding next = K;
  next.K = field_add(to_grid(K.K), delta);
  for (int i = 0; i < K.ell(); ++i) next.lambda[i] += dlambda[i];
  return normalize(std::move(next));
}

}  // namespace

TorusEmbedding resample_torus(const TorusEmbedding& K, const GridShape& g) {
  TorusEmbedding r = K;
  r.K = resample(K.K, g);
  if (K.K0) r.K0 = resample(*K.K0, g);
  return r;
}

InvariantSplitting resample_splitting(const InvariantSplitting& S, const GridShape& g) {
  InvariantSplitting r = S;
  r.Pi_s = resample(S.Pi_s, g);
  r.Pi_cu = resample(S.Pi_cu, g);
  if (S.Pi_u) r.Pi_u = resample(*S.Pi_u, g);
  if (S.Pi_cs) r.Pi_cs = resample(*S.Pi_cs, g);
  return r;
}

FourierSeries counterterm_direction(const TorusEmbedding& K, const SymplecticMap& F) {
  TorusEmbedding ref = K;
  if (K.K0) ref.K = *K.K0;
  if (ref.K.shape() != K.grid()) ref.K = resample(ref.K, K.grid());
  const FourierSeries DK0 = embedding_jacobian(ref);
  const Mat& Jinv = F.structure().J_inv;
  const FourierSeries c = field_map(K.grid(), DK0.rows(), DK0.cols(),
                                    [&](std::size_t p) -> Mat { return Jinv * matrix_at(DK0, p); });
  return rotate(c, K.omega);
}

FourierSeries invariance_residual(const TorusEmbedding& K, const SymplecticMap& F,
                                  const ResidualOptions& opts) {
  const GridShape& g = K.grid();
  const std::size_t n = g.total();
  const int m = K.phase_dim();
  if (m != F.phase_dim()) throw ParameterError("embedding range does not match the map");
  const std::vector<double> z = lifted_values(K);
  const std::vector<double> zs = lifted_values(K, rotate(K.K, K.omega), K.omega.omega);
  std::vector<double> e(static_cast<std::size_t>(m) * n);
  std::vector<double> in(m), out(m);
  for (std::size_t p = 0; p < n; ++p) {
    for (int i = 0; i < m; ++i) in[i] = z[i * n + p];
    F.eval(in.data(), out.data());
    for (int i = 0; i < m; ++i) e[i * n + p] = out[i] - zs[i * n + p];
  }
  FourierSeries E = FourierSeries::from_grid(g, m, 1, std::move(e));
  if (max_abs(K.lambda) > 0.0) {
    const FourierSeries c0 = counterterm_direction(K, F);
    Mat lam(K.ell(), 1);
    for (int i = 0; i < K.ell(); ++i) lam(i, 0) = K.lambda[i];
    E = field_add(E, field_multiply(c0, constant_field(g, lam)), -1.0);
  }
  auto& data = E.grid_data_mut();
  for (int s : K.angle_slots) {
    for (std::size_t p = 0; p < n; ++p) {
      double& v = data[s * n + p];
      v -= std::round(v);
    }
  }
  check_jumps(E, K.angle_slots, opts.jump_threshold);
  return E;
}

ReducibilityFrame build_frame(const TorusEmbedding& K, const SymplecticMap& F,
                              const SolverOptions& opts) {
  const int ell = K.ell();
  const int m = K.phase_dim();
  const GridShape& g = K.grid();
  const Mat& Jinv = F.structure().J_inv;
  ReducibilityFrame fr;
  fr.alpha = embedding_jacobian(K);
  fr.min_sigma = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < g.total(); ++p) {
    Eigen::JacobiSVD<Mat> svd(matrix_at(fr.alpha, p));
    fr.min_sigma = std::min(fr.min_sigma, svd.singularValues()(ell - 1));
  }
  if (fr.min_sigma < opts.degenerate_floor) {
    throw DegenerateEmbeddingError("DK loses rank on the grid");
  }
  fr.N = field_map(g, ell, ell, [&](std::size_t p) -> Mat {
    const Mat a = matrix_at(fr.alpha, p);
    return (a.transpose() * a).inverse();
  });
  fr.beta = field_multiply(fr.alpha, fr.N);
  fr.gamma = field_map(g, m, ell, [&](std::size_t p) -> Mat { return Jinv * matrix_at(fr.beta, p); });
  fr.M = field_hstack(fr.alpha, fr.gamma);
  fr.cond_M = 0.0;
  for (std::size_t p = 0; p < g.total(); ++p) {
    Eigen::JacobiSVD<Mat> svd(matrix_at(fr.M, p));
    const auto& s = svd.singularValues();
    fr.cond_M = std::max(fr.cond_M, s(0) / s(s.size() - 1));
  }
  // A = beta(theta+omega)^T [Z gamma - gamma(theta+omega)]; the second term drops
  // out when J^{-1} is skew, as for every supported structure.
  const std::vector<double> z = lifted_values(K);
  const std::size_t n = g.total();
  const FourierSeries beta_s = rotate(fr.beta, K.omega);
  const FourierSeries gamma_s = rotate(fr.gamma, K.omega);
  const bool simplified = F.structure().almost_complex;
  fr.torsion = field_map(g, ell, ell, [&](std::size_t p) -> Mat {
    std::vector<double> zp(m);
    for (int i = 0; i < m; ++i) zp[i] = z[i * n + p];
    Mat dg = F.jacobian(zp.data()) * matrix_at(fr.gamma, p);
    if (!simplified) dg -= matrix_at(gamma_s, p);
    return matrix_at(beta_s, p).transpose() * dg;
  });
  return fr;
}

TorusEmbedding normalize(TorusEmbedding K) { return normalize_translation(std::move(K)); }

StepResult newton_center_step(const TorusEmbedding& K, const SymplecticMap& F,
                              const SolverOptions& opts) {
  const auto t0 = Clock::now();
  if (K.ell() != F.d()) {
    throw ParameterError("center step alone needs a Lagrangian torus; use the whiskered step");
  }
  const FourierSeries E = invariance_residual(K, F);
  const FourierSeries c0 = counterterm_direction(K, F);
  const CenterCorrection cc = center_correction(K, F, E, c0, opts);
  StepResult r;
  r.torus = apply_correction(K, cc.delta, cc.dlambda);
  r.report.residual_before = sup_norm(E);
  r.report.residual_after = sup_norm(invariance_residual(r.torus, F));
  r.report.lambda = max_abs(r.torus.lambda);
  r.report.twist = cc.twist;
  r.report.norm_N = cc.norm_N;
  r.report.cond_M = cc.cond_M;
  r.report.divisor_margin = cc.divisor;
  r.report.tail = tail_fraction(r.torus.K);
  r.report.grid = K.grid().size(0);
  r.report.seconds = seconds_since(t0);
  return r;
}

StepResult newton_whiskered_step(const TorusEmbedding& K, const SymplecticMap& F,
                                 const InvariantSplitting& S, const SolverOptions& opts) {
  const auto t0 = Clock::now();
  const FourierSeries E = invariance_residual(K, F);
  const FourierSeries c0 = counterterm_direction(K, F);
  const SplitError parts = split_error(E, S, K.omega);
  const SplitError cparts = split_error(c0, S, K.omega);
  const CenterCorrection cc = center_correction(K, F, parts.center, cparts.center, opts);

  Mat dl(K.ell(), 1);
  for (int i = 0; i < K.ell(); ++i) dl(i, 0) = cc.dlambda[i];
  const FourierSeries dlf = constant_field(K.grid(), dl);
  const FourierSeries Es = field_add(parts.stable, field_multiply(cparts.stable, dlf), -1.0);
  const FourierSeries Eu = field_add(parts.unstable, field_multiply(cparts.unstable, dlf), -1.0);
  const Cocycle Z = make_cocycle(K, F);
  const FourierSeries ds = solve_stable(Es, Z, S, opts.doubling);
  const FourierSeries du = solve_unstable(Eu, Z, S, opts.doubling);

  StepResult r;
  r.torus = apply_correction(K, field_add(field_add(cc.delta, ds), du), cc.dlambda);
  r.report.residual_before = sup_norm(E);
  r.report.residual_after = sup_norm(invariance_residual(r.torus, F));
  r.report.lambda = max_abs(r.torus.lambda);
  r.report.twist = cc.twist;
  r.report.norm_N = cc.norm_N;
  r.report.cond_M = cc.cond_M;
  r.report.divisor_margin = cc.divisor;
  r.report.tail = tail_fraction(r.torus.K);
  r.report.grid = K.grid().size(0);
  r.report.seconds = seconds_since(t0);
  return r;
}

SolveResult newton_solve(TorusEmbedding K, const SymplecticMap& F, const SolverOptions& opts,
                         std::optional<InvariantSplitting> splitting) {
  if (K.ell() != F.ell() || K.phase_dim() != F.phase_dim()) {
    throw ParameterError("embedding dimensions do not match the map");
  }
  K.omega.check_irrational(K.grid().size(0));
  if (opts.counterterm && !K.K0) K.K0 = K.K;
  const bool whiskered = F.ell() < F.d();
  SolveResult res;
  std::vector<double> trace;
  int growth = 0;
  for (int it = 0;; ++it) {
    if (whiskered) {
      const Cocycle Z = make_cocycle(K, F);
      if (!splitting) splitting = initial_splitting(Z, 1e-3, F.d() - F.ell());
      splitting = refine_splitting(*splitting, Z, opts.splitting);
    }
    double r = 0.0;
    try {
      r = sup_norm(invariance_residual(K, F));
    } catch (const WindingError&) {
      if (it == 0) throw;
      throw NoConvergenceError("Newton iterates lost the winding of the initial guess", trace);
    }
    trace.push_back(r);
    if (!std::isfinite(r)) throw NumericCorruptionError("residual is not finite");
    if (r <= opts.tol) break;
    if (it >= opts.max_iter) {
      throw NoConvergenceError("Newton iteration did not reach tolerance in " +
                                   std::to_string(opts.max_iter) + " steps",
                               trace);
    }
    StepResult step;
    try {
      step = whiskered ? newton_whiskered_step(K, F, *splitting, opts) : newton_center_step(K, F, opts);
    } catch (const WindingError&) {
      throw NoConvergenceError("Newton step lost the winding of the torus", trace);
    }
    step.report.iter = it + 1;
    res.log.push_back(step.report);
    const double after = step.report.residual_after;
    growth = after > step.report.residual_before ? growth + 1 : 0;
    if (!std::isfinite(after) || after > opts.divergence_level || growth >= opts.divergence_steps) {
      trace.push_back(after);
      throw NoConvergenceError("Newton iteration diverges", trace);
    }
    K = std::move(step.torus);
    if (opts.refine_grid && step.report.tail > opts.tail_threshold) {
      if (K.grid().size(0) * 2 > opts.max_grid) {
        trace.push_back(after);
        throw NoConvergenceError("spectral tail stays above threshold at the largest grid", trace);
      }
      const GridShape g2 = K.grid().doubled();
      K = resample_torus(K, g2);
      if (splitting) splitting = resample_splitting(*splitting, g2);
    }
  }
  res.torus = std::move(K);
  res.splitting = std::move(splitting);
  return res;
}

std::vector<ContinuationPoint> continuation(
    const ModelFamily& family, const std::vector<double>& schedule, TorusEmbedding initial,
    const ContinuationOptions& opts, const std::function<void(const ContinuationPoint&)>& on_point) {
  if (schedule.empty()) throw ParameterError("empty continuation schedule");
  std::vector<ContinuationPoint> out;
  auto solve_at = [&](double eps, const TorusEmbedding& guess,
                      const std::optional<InvariantSplitting>& S) {
    TorusEmbedding g = guess;
    g.K0.reset();
    return newton_solve(std::move(g), *family(eps), opts.solver, S);
  };
  ContinuationPoint first{schedule.front(), solve_at(schedule.front(), initial, std::nullopt)};
  if (on_point) on_point(first);
  out.push_back(first);
  double current = schedule.front();
  SolveResult last = first.result;
  for (std::size_t i = 1; i < schedule.size(); ++i) {
    const double target = schedule[i];
    double h = target - current;
    while (current != target) {
      const double next = std::abs(target - current) <= std::abs(h) ? target : current + h;
      try {
        SolveResult r = solve_at(next, last.torus, last.splitting);
        last = std::move(r);
        current = next;
        h = target - current;
      } catch (const Error&) {
        h *= 0.5;
        if (std::abs(h) < opts.min_step) {
          std::ostringstream os;
          os << "continuation stalled after parameter " << current << " toward " << target;
          throw ContinuationStallError(os.str(), current);
        }
      }
    }
    ContinuationPoint pt{target, last};
    if (on_point) on_point(pt);
    out.push_back(std::move(pt));
  }
  return out;
}

}  // namespace kamtori
