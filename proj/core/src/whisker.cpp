#include "kamtori/whisker.hpp"

#include <cmath>
#include <sstream>

#include "kamtori/errors.hpp"
#include "kamtori/parallel.hpp"

namespace kamtori {

namespace {

// Taylor coefficients in s of a matrix field at one grid point.
using MatJet = std::vector<Mat>;

MatJet jet_zero(int rows, int cols, int top) { return MatJet(top + 1, Mat::Zero(rows, cols)); }

MatJet jet_mul(const MatJet& a, const MatJet& b) {
  const int top = static_cast<int>(a.size()) - 1;
  MatJet c = jet_zero(a[0].rows(), b[0].cols(), top);
  for (int n = 0; n <= top; ++n) {
    for (int k = 0; k <= n; ++k) c[n].noalias() += a[k] * b[n - k];
  }
  return c;
}

MatJet jet_inverse(const MatJet& a) {
  const int top = static_cast<int>(a.size()) - 1;
  MatJet x(top + 1);
  x[0] = a[0].inverse();
  for (int n = 1; n <= top; ++n) {
    Mat acc = Mat::Zero(a[0].rows(), a[0].cols());
    for (int k = 1; k <= n; ++k) acc.noalias() += a[k] * x[n - k];
    x[n] = -x[0] * acc;
  }
  return x;
}

MatJet jet_transpose(const MatJet& a) {
  MatJet t(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) t[k] = a[k].transpose();
  return t;
}

MatJet jet_left(const Mat& m, const MatJet& a) {
  MatJet r(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) r[k] = m * a[k];
  return r;
}

MatJet gather(const FourierTaylorSeries& f, std::size_t p, int top) {
  MatJet out = jet_zero(f.rows(), f.cols(), top);
  for (int k = 0; k <= std::min(top, f.top()); ++k) out[k] = matrix_at(f.orders[k], p);
  return out;
}

// Grid buffers filled point by point, then turned into a FourierTaylorSeries.
class JetBuffer {
 public:
  JetBuffer(const GridShape& g, int rows, int cols, int top)
      : g_(g), rows_(rows), cols_(cols), n_(g.total()),
        data_(top + 1, std::vector<double>(static_cast<std::size_t>(rows * cols) * g.total())) {}

  void put(std::size_t p, const MatJet& v) {
    for (std::size_t k = 0; k < data_.size(); ++k) {
      for (int i = 0; i < rows_; ++i) {
        for (int j = 0; j < cols_; ++j) data_[k][(i * cols_ + j) * n_ + p] = v[k](i, j);
      }
    }
  }

  FourierTaylorSeries finish() {
    FourierTaylorSeries f;
    for (auto& d : data_) f.orders.push_back(FourierSeries::from_grid(g_, rows_, cols_, std::move(d)));
    return f;
  }

 private:
  GridShape g_;
  int rows_, cols_;
  std::size_t n_;
  std::vector<std::vector<double>> data_;
};

FourierTaylorSeries on_grid(FourierTaylorSeries f) {
  for (auto& o : f.orders) o = to_grid(std::move(o));
  return f;
}

// W(theta + omega, mu s).
FourierTaylorSeries shift(const FourierTaylorSeries& f, const RotationVector& omega, double mu) {
  FourierTaylorSeries r;
  double scale = 1.0;
  for (const auto& o : f.orders) {
    r.orders.push_back(to_grid(field_scale(rotate(o, omega), scale)));
    scale *= mu;
  }
  return r;
}

TorusEmbedding torus_of(const Whisker& w) {
  TorusEmbedding K = w.base;
  K.K = w.W.orders[0];
  return K;
}

void require_rank_one(const SymplecticMap& F, int ell) {
  if (F.d() != ell + 1) {
    throw UnsupportedRankError("whiskers are implemented for one hyperbolic pair (d = ell + 1)");
  }
}

// Lifted jets z(p) of W at each grid point, fed to `fn`.
template <class Fn>
void for_each_point_jet(const Whisker& w, int top, Fn&& fn) {
  const TorusEmbedding K = torus_of(w);
  const GridShape& g = K.grid();
  const std::size_t n = g.total();
  const int m = K.phase_dim();
  const std::vector<double> lift = lifted_values(K);
  std::vector<FourierSeries> ord;
  for (int k = 0; k <= std::min(top, w.order()); ++k) ord.push_back(to_grid(w.W.orders[k]));
  parallel_for(n, [&](std::size_t b, std::size_t e) {
    std::vector<Jet> z(m);
    for (std::size_t p = b; p < e; ++p) {
      for (int i = 0; i < m; ++i) {
        z[i] = Jet(top, lift[i * n + p]);
        for (std::size_t k = 1; k < ord.size(); ++k) z[i][static_cast<int>(k)] = ord[k].at(i, p);
      }
      fn(p, z);
    }
  });
}

double sup_over(const FourierTaylorSeries& f, int from, int to) {
  double m = 0.0;
  for (int k = from; k <= std::min(to, f.top()); ++k) m = std::max(m, sup_norm(f.orders[k]));
  return m;
}

FourierSeries constant_scalar(const GridShape& g, double v) {
  return FourierSeries::constant(g, 1, 1, std::span<const double>(&v, 1));
}

// Frame M = [alpha | gamma | beta | eta] along the whisker, with [gamma | eta] the
// symplectic conjugate of [alpha | beta], and the transformed
// problem M^{-1}(theta + omega, mu s) [DF(W) M, E, c0, dW/ds(theta + omega, mu s)].
struct WhiskerFrame {
  FourierTaylorSeries M;     // 2d x 2d
  FourierTaylorSeries Rhat;  // 2d x 2d
  FourierTaylorSeries Et;    // 2d x 1
  FourierTaylorSeries C;     // 2d x ell
  FourierTaylorSeries H;     // 2d x 1
};

WhiskerFrame build_whisker_frame(const Whisker& w, const SymplecticMap& F,
                                 const FourierTaylorSeries& E, const FourierSeries& c0) {
  const int top = w.order();
  const int ell = w.base.ell();
  const int m = F.phase_dim();
  const GridShape g = w.W.grid();
  const std::size_t n = g.total();
  const Mat& Jinv = F.structure().J_inv;

  // alpha_k = D_theta W_k (winding at order 0), beta_k = (k + 1) W_{k+1}.
  FourierTaylorSeries alpha;
  alpha.orders.push_back(to_grid(embedding_jacobian(torus_of(w))));
  for (int k = 1; k <= top; ++k) {
    std::vector<FourierSeries> parts;
    for (int b = 0; b < ell; ++b) parts.push_back(to_grid(derivative(w.W.orders[k], b)));
    alpha.orders.push_back(field_map(g, m, ell, [&](std::size_t p) -> Mat {
      Mat a(m, ell);
      for (int b = 0; b < ell; ++b) {
        for (int i = 0; i < m; ++i) a(i, b) = parts[b].at(i, p);
      }
      return a;
    }));
  }
  FourierTaylorSeries beta;
  for (int k = 0; k <= top; ++k) {
    beta.orders.push_back(k < top ? to_grid(field_scale(w.W.orders[k + 1], k + 1.0))
                                  : FourierSeries(g, m, 1));
  }

  JetBuffer mbuf(g, m, m, top);
  parallel_for(n, [&](std::size_t b, std::size_t e) {
    for (std::size_t p = b; p < e; ++p) {
      const MatJet a = gather(alpha, p, top);
      const MatJet be = gather(beta, p, top);
      // Y = J^{-1} X (X^T X)^{-1} with X = [alpha | beta] makes [X | Y] symplectic.
      MatJet X(top + 1, Mat(m, ell + 1));
      for (int k = 0; k <= top; ++k) X[k] << a[k], be[k];
      const MatJet Y = jet_left(Jinv, jet_mul(X, jet_inverse(jet_mul(jet_transpose(X), X))));
      MatJet M(top + 1, Mat(m, m));
      for (int k = 0; k <= top; ++k) M[k] << a[k], Y[k].leftCols(ell), be[k], Y[k].col(ell);
      mbuf.put(p, M);
    }
  });
  WhiskerFrame fr;
  fr.M = mbuf.finish();
  const FourierTaylorSeries Ms = shift(fr.M, w.base.omega, w.mu);
  const FourierSeries c0g = to_grid(c0);
  const FourierTaylorSeries Eg = on_grid(E);

  JetBuffer rbuf(g, m, m, top), ebuf(g, m, 1, top), cbuf(g, m, ell, top), hbuf(g, m, 1, top);
  std::vector<MatJet> dfs(n);
  for_each_point_jet(w, top, [&](std::size_t p, const std::vector<Jet>& z) {
    std::vector<Jet> dz(static_cast<std::size_t>(m) * m);
    F.jacobian_jet(z.data(), dz.data());
    MatJet df = jet_zero(m, m, top);
    for (int k = 0; k <= top; ++k) {
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) df[k](i, j) = dz[i * m + j][k];
      }
    }
    dfs[p] = std::move(df);
  });
  parallel_for(n, [&](std::size_t b, std::size_t e) {
    for (std::size_t p = b; p < e; ++p) {
      const MatJet ms = gather(Ms, p, top);
      const MatJet msinv = jet_inverse(ms);
      rbuf.put(p, jet_mul(msinv, jet_mul(dfs[p], gather(fr.M, p, top))));
      ebuf.put(p, jet_mul(msinv, gather(Eg, p, top)));
      MatJet c = jet_zero(m, ell, top);
      c[0] = matrix_at(c0g, p);
      cbuf.put(p, jet_mul(msinv, c));
      MatJet bs(top + 1);
      for (int k = 0; k <= top; ++k) bs[k] = ms[k].col(2 * ell);
      hbuf.put(p, jet_mul(msinv, bs));
    }
  });
  fr.Rhat = rbuf.finish();
  fr.Et = ebuf.finish();
  fr.C = cbuf.finish();
  fr.H = hbuf.finish();
  return fr;
}

// Scalar component i of a column field.
FourierSeries component(const FourierSeries& f, int i) {
  const FourierSeries fg = to_grid(f);
  const auto v = fg.grid(i);
  return FourierSeries::from_grid(f.shape(), 1, 1, std::vector<double>(v.begin(), v.end()));
}

FourierSeries stack(const std::vector<FourierSeries>& comps) {
  const GridShape& g = comps.front().shape();
  std::vector<double> data;
  data.reserve(comps.size() * g.total());
  for (const auto& c : comps) {
    const FourierSeries cg = to_grid(c);
    const auto v = cg.grid(0);
    data.insert(data.end(), v.begin(), v.end());
  }
  return FourierSeries::from_grid(g, static_cast<int>(comps.size()), 1, std::move(data));
}

// rhs_n = base - sum_{k in [from, n)} Rhat_{n-k} V_k, pointwise.
FourierSeries convolve_rhs(const FourierSeries& base, const FourierTaylorSeries& Rhat,
                           const std::vector<FourierSeries>& V, int n, int from) {
  const GridShape& g = base.shape();
  const FourierSeries bg = to_grid(base);
  return field_map(g, bg.rows(), 1, [&](std::size_t p) -> Mat {
    Mat r = matrix_at(bg, p);
    for (int k = from; k < n; ++k) r -= matrix_at(Rhat.orders[n - k], p) * matrix_at(V[k], p);
    return r;
  });
}

// Couplings of the order-0 transformed Jacobian. Up to O(E) it reads
//   [1 A 0 x; 0 1 0 0; 0 y mu B; 0 0 0 1/mu]   (blocks ell, ell, 1, 1).
struct Couplings {
  FourierSeries A, x, y, B;
};

Couplings couplings(const FourierSeries& R0, int ell) {
  return {field_block(R0, 0, ell, ell, ell), field_block(R0, 0, 2 * ell + 1, ell, 1),
          field_block(R0, 2 * ell, ell, 1, ell), field_block(R0, 2 * ell, 2 * ell + 1, 1, 1)};
}

std::vector<FourierSeries> components(const FourierSeries& f) {
  std::vector<FourierSeries> r;
  for (int i = 0; i < f.rows(); ++i) r.push_back(component(f, i));
  return r;
}

FourierSeries slice(const std::vector<FourierSeries>& v, int from, int count) {
  return stack(std::vector<FourierSeries>(v.begin() + from, v.begin() + from + count));
}

// Order-n solve with b = mu^n, n >= 2 (no resonances):
//   V1 + A V2 + x V4 - b V1 o T = r1,  V2 - b V2 o T = r2,
//   mu V3 + y V2 + B V4 - b V3 o T = r3,  V4 / mu - b V4 o T = r4.
FourierSeries structured_solve(const FourierSeries& rhs, const Couplings& cp, double mu, int n, int ell,
                               const RotationVector& omega) {
  const double b = std::pow(mu, n);
  const std::vector<FourierSeries> r = components(rhs);
  std::vector<FourierSeries> v(rhs.rows());
  for (int i = 0; i < ell; ++i) v[ell + i] = solve_twosided_constant(1.0, b, r[ell + i], omega);
  v[2 * ell + 1] = solve_twosided_constant(1.0 / mu, b, r[2 * ell + 1], omega);
  const FourierSeries V2 = slice(v, ell, ell);
  const FourierSeries& V4 = v[2 * ell + 1];
  const FourierSeries r1 =
      field_add(field_add(slice(r, 0, ell), field_multiply(cp.A, V2), -1.0), field_multiply(cp.x, V4), -1.0);
  for (int i = 0; i < ell; ++i) v[i] = solve_twosided_constant(1.0, b, component(r1, i), omega);
  const FourierSeries r3 =
      field_add(field_add(r[2 * ell], field_multiply(cp.y, V2), -1.0), field_multiply(cp.B, V4), -1.0);
  v[2 * ell] = solve_twosided_constant(mu, b, r3, omega);
  return stack(v);
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

// dW = M V through the top order, starting at order `from`.
FourierTaylorSeries frame_product(const FourierTaylorSeries& M, const std::vector<FourierSeries>& V,
                                  int from) {
  const int top = M.top();
  const GridShape& g = M.grid();
  FourierTaylorSeries out;
  for (int n = 0; n <= top; ++n) {
    if (n < from) {
      out.orders.emplace_back(g, M.rows(), 1);
      continue;
    }
    out.orders.push_back(field_map(g, M.rows(), 1, [&](std::size_t p) -> Mat {
      Mat r = Mat::Zero(M.rows(), 1);
      for (int k = from; k <= n; ++k) r += matrix_at(M.orders[n - k], p) * matrix_at(V[k], p);
      return r;
    }));
  }
  return out;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Scale b making log |b^n W_n| flat in n (least squares over the orders that are
// not negligible). With two orders this is |b^2 W_2| = |b W_1|.
double balanced_scale(const FourierTaylorSeries& W) {
  std::vector<double> norms;
  double big = 0.0;
  for (int n = 1; n <= W.top(); ++n) {
    norms.push_back(sup_norm(W.orders[n]));
    big = std::max(big, norms.back());
  }
  double sn = 0, sy = 0, snn = 0, sny = 0;
  int count = 0;
  for (std::size_t i = 0; i < norms.size(); ++i) {
    if (norms[i] <= 1e-12 * big) continue;
    const double n = static_cast<double>(i + 1), y = std::log(norms[i]);
    sn += n;
    sy += y;
    snn += n * n;
    sny += n * y;
    ++count;
  }
  if (count < 2) return 1.0;
  const double slope = (count * sny - sn * sy) / (count * snn - sn * sn);
  return std::exp(-slope);
}

}  // namespace

FourierTaylorSeries FourierTaylorSeries::zeros(const GridShape& g, int rows, int cols, int top) {
  FourierTaylorSeries f;
  for (int k = 0; k <= top; ++k) f.orders.emplace_back(g, rows, cols);
  return f;
}

FourierTaylorSeries ft_compose_map(const SymplecticMap& F, const Whisker& w, int order) {
  if (order + 1 > Jet::kCapacity) throw ParameterError("Taylor order exceeds the jet capacity");
  const int m = F.phase_dim();
  JetBuffer buf(w.W.grid(), m, 1, order);
  for_each_point_jet(w, order, [&](std::size_t p, const std::vector<Jet>& z) {
    std::vector<Jet> out(m);
    F.eval_jet(z.data(), out.data());
    MatJet v = jet_zero(m, 1, order);
    for (int k = 0; k <= order; ++k) {
      for (int i = 0; i < m; ++i) v[k](i, 0) = out[i][k];
    }
    buf.put(p, v);
  });
  return buf.finish();
}

FourierTaylorSeries whisker_residual(const SymplecticMap& F, const Whisker& w, int order) {
  FourierTaylorSeries E;
  E.orders.push_back(invariance_residual(torus_of(w), F));
  if (order == 0) return E;
  const FourierTaylorSeries FW = ft_compose_map(F, w, order);
  double scale = w.mu;
  for (int k = 1; k <= order; ++k) {
    if (k <= w.order()) {
      E.orders.push_back(field_add(FW.orders[k], rotate(w.W.orders[k], w.base.omega), -scale));
    } else {
      E.orders.push_back(FW.orders[k]);
    }
    scale *= w.mu;
  }
  return E;
}

double low_order_residual(const FourierTaylorSeries& E, int below) {
  return sup_over(E, 0, below - 1);
}

BundleResult solve_bundle_and_multiplier(const TorusEmbedding& K, const SymplecticMap& F,
                                         const InvariantSplitting& S, Side side, double rho) {
  const Cocycle Z = make_cocycle(K, F);
  const FourierSeries Pi = to_grid(side == Side::stable ? S.Pi_s : S.Pi_u.value());
  const int rank = side == Side::stable ? S.stable_rank : S.unstable_rank;
  if (rank != 1) throw UnsupportedRankError("bundle solver needs a rank-one bundle");
  const GridShape& g = K.grid();
  const int m = Pi.rows();
  const std::size_t n = g.total();

  // Column of the projection with the largest smallest norm spans the bundle.
  int col = 0;
  double best = -1.0;
  for (int j = 0; j < m; ++j) {
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < n; ++p) lo = std::min(lo, matrix_at(Pi, p).col(j).norm());
    if (lo > best) {
      best = lo;
      col = j;
    }
  }
  if (best < 1e-8) throw DegenerateEmbeddingError("no projection column spans the bundle everywhere");
  const FourierSeries v = field_map(g, m, 1, [&](std::size_t p) -> Mat { return matrix_at(Pi, p).col(col); });
  const FourierSeries vs = to_grid(rotate(v, K.omega));
  const FourierSeries Zg = to_grid(Z.Z);

  std::vector<double> logc(n);
  int sign = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const Mat zv = matrix_at(Zg, p) * matrix_at(v, p);
    const Mat vp = matrix_at(vs, p);
    const double c = (vp.transpose() * zv)(0, 0) / vp.squaredNorm();
    const int s = c > 0 ? 1 : -1;
    if (sign == 0) sign = s;
    if (s != sign) throw SignError("bundle multiplier changes sign along the torus");
    if (std::abs(c) < 1e-300) throw LogDomainError("bundle multiplier vanishes");
    logc[p] = std::log(std::abs(c));
  }
  FourierSeries L = FourierSeries::from_grid(g, 1, 1, std::move(logc));
  const double lbar = average(L)[0];
  CohomologyOptions copts;
  copts.check_average = false;
  const FourierSeries LC = to_grid(solve_cohomology_constant(subtract_average(L), K.omega, copts).phi);

  BundleResult r;
  r.mu = sign * std::exp(lbar);
  FourierSeries W1 = field_map(g, m, 1, [&](std::size_t p) -> Mat {
    return std::exp(-LC.at(0, p)) * matrix_at(v, p);
  });
  // Sign: the component with the largest average is positive.
  const std::vector<double> avg = average(W1);
  int big = 0;
  for (int i = 1; i < m; ++i) {
    if (std::abs(avg[i]) > std::abs(avg[big])) big = i;
  }
  const double flip = avg[big] < 0 ? -1.0 : 1.0;
  r.W1 = to_grid(field_scale(W1, flip * rho / sup_norm(W1)));
  return r;
}

Whisker order_by_order(const TorusEmbedding& K, const BundleResult& bundle, const SymplecticMap& F,
                       int L, const OrderOptions& opts) {
  if (L < 1) throw ParameterError("whisker order must be at least 1");
  require_rank_one(F, K.ell());
  const double amu = std::abs(bundle.mu);
  if (std::abs(amu - 1.0) < 1e-6) throw UnitMultiplierError("multiplier on the unit circle");
  for (int n = 2; n <= L; ++n) {
    const double pn = std::pow(amu, n);
    for (double x : {1.0, amu, 1.0 / amu}) {
      if (std::abs(pn - x) < opts.resonance_margin) {
        std::ostringstream os;
        os << "|mu|^" << n << " = " << pn << " hits the spectrum value " << x;
        throw ResonanceError(os.str(), n);
      }
    }
  }

  Whisker w;
  w.base = K;
  w.mu = bundle.mu;
  w.s_max = opts.s_max;
  w.W.orders.push_back(to_grid(K.K));
  w.W.orders.push_back(to_grid(bundle.W1));
  const GridShape& g = K.grid();
  const Cocycle Z = make_cocycle(K, F);
  for (int n = 2; n <= L; ++n) {
    w.W.orders.emplace_back(g, F.phase_dim(), 1);
    const FourierSeries R = ft_compose_map(F, w, n).orders[n];
    const double b = std::pow(bundle.mu, n);
    TwoSidedEquation eq{Z.Z, constant_scalar(g, b), field_scale(R, -1.0), K.omega,
                        Regime::contractive, std::nullopt, std::nullopt};
    DoublingResult res;
    if (amu < 1.0) {
      eq.A_inv = Z.Z_inv;
      res = solve_doubling_contractive(eq, opts.doubling);
    } else {
      eq.regime = Regime::expansive;
      eq.B_inv = constant_scalar(g, 1.0 / b);
      res = solve_doubling_expansive(eq, opts.doubling);
    }
    w.W.orders[n] = to_grid(res.delta);
  }
  double rho = opts.rho;
  if (rho <= 0.0) rho = balanced_scale(w.W) * sup_norm(w.W.orders[1]);
  w = normalize_whisker(std::move(w), rho);
  fit_domain(w, F, opts.conjugacy_tol);
  return w;
}

double fit_domain(Whisker& w, const SymplecticMap& F, double tol, int samples, int max_halvings) {
  const int ell = w.base.ell();
  auto worst = [&]() {
    double err = 0.0;
    std::vector<int> idx(ell, 0);
    std::vector<double> theta(ell);
    // Full product grid for ell = 1, a diagonal sweep otherwise.
    for (int i = 0; i < samples; ++i) {
      for (int a = 0; a < ell; ++a) theta[a] = (i + 0.5 * a) / samples;
      for (int j = 0; j < samples; ++j) {
        const double s = samples > 1 ? -w.s_max + 2.0 * w.s_max * j / (samples - 1) : w.s_max;
        err = std::max(err, conjugacy_error(F, w, theta, s));
      }
    }
    return err;
  };
  double err = worst();
  for (int k = 0; k < max_halvings && !(err <= tol); ++k) {
    w.s_max *= 0.5;
    err = worst();
  }
  return err;
}

Whisker normalize_whisker(Whisker w, double rho) {
  const double b = rho / sup_norm(w.W.orders[1]);
  double scale = b;
  for (int k = 1; k <= w.order(); ++k) {
    w.W.orders[k] = to_grid(field_scale(w.W.orders[k], scale));
    scale *= b;
  }
  w.rho = rho;

  // Phase: the translation normalizing the torus moves every order.
  const TorusEmbedding K = torus_of(w);
  const int ell = K.ell();
  if (K.winding.rank() > 0) {
    const std::vector<double> avg = average(K.K);
    Vec mean(ell);
    for (int a = 0; a < ell; ++a) mean(a) = avg[K.angle_slots[a]];
    const Vec sigma = -pseudo_inverse(K.winding.I, 1e-12) * mean;
    const std::vector<double> shift_by(sigma.data(), sigma.data() + ell);
    for (int k = 1; k <= w.order(); ++k) w.W.orders[k] = to_grid(rotate(w.W.orders[k], shift_by));
  }
  w.W.orders[0] = to_grid(normalize_translation(K).K);
  return w;
}

Whisker newton_whisker_step(const Whisker& w0, const SymplecticMap& F, int L,
                            const WhiskerStepOptions& opts) {
  const int ell = w0.base.ell();
  require_rank_one(F, ell);
  if (w0.order() < L - 1) throw OrderContractError("whisker is shorter than the claimed exact order");
  const int top = 2 * L - 1;
  Whisker w = w0;
  const GridShape g = w.W.grid();
  while (w.order() < top) w.W.orders.emplace_back(g, F.phase_dim(), 1);
  while (w.order() > top) w.W.orders.pop_back();

  const FourierTaylorSeries E = whisker_residual(F, w, top);
  const double low = low_order_residual(E, L);
  if (low > opts.order_contract_tol) {
    std::ostringstream os;
    os << "orders below " << L << " have residual " << low;
    throw OrderContractError(os.str());
  }
  const WhiskerFrame fr = build_whisker_frame(w, F, E, counterterm_direction(torus_of(w), F));
  const Couplings cp = couplings(fr.Rhat.orders[0], ell);

  std::vector<FourierSeries> V(top + 1, FourierSeries(g, F.phase_dim(), 1));
  for (int n = L; n <= top; ++n) {
    const FourierSeries rhs = convolve_rhs(field_scale(fr.Et.orders[n], -1.0), fr.Rhat, V, n, L);
    V[n] = to_grid(structured_solve(rhs, cp, w.mu, n, ell, w.base.omega));
  }
  const FourierTaylorSeries dW = frame_product(fr.M, V, L);
  for (int n = L; n <= top; ++n) w.W.orders[n] = to_grid(field_add(w.W.orders[n], dW.orders[n]));
  return w;
}

Whisker newton_full_step(const Whisker& w0, const SymplecticMap& F, const FullStepOptions& opts,
                         FullStepReport* report) {
  const int ell = w0.base.ell();
  require_rank_one(F, ell);
  if (w0.order() < 2) throw ParameterError("full whisker step needs order at least 2");
  Whisker w = w0;
  const int top = w.order();
  const GridShape g = w.W.grid();
  const RotationVector omega = w.base.omega;
  const double mu = w.mu;

  const FourierTaylorSeries E = whisker_residual(F, w, top);
  const WhiskerFrame fr = build_whisker_frame(w, F, E, counterterm_direction(torus_of(w), F));
  const Couplings cp = couplings(fr.Rhat.orders[0], ell);
  std::vector<FourierSeries> V(top + 1);
  CohomologyOptions copts;
  copts.check_average = false;
  auto zero_mean_solve = [&](const FourierSeries& rhs) {
    return solve_cohomology_constant(subtract_average(rhs), omega, copts).phi;
  };

  // Order 0: torus correction in the whisker frame, with the counterterm.
  const FourierSeries Et0 = field_scale(fr.Et.orders[0], -1.0);
  const FourierSeries C0 = fr.C.orders[0];
  Vec dl = Vec::Zero(ell);
  if (opts.counterterm) {
    const Mat c2 = average_matrix(field_block(C0, ell, 0, ell, ell));
    Eigen::JacobiSVD<Mat> svd(c2);
    if (svd.singularValues()(ell - 1) < opts.twist_floor) {
      throw DegeneratePairingError("counterterm direction does not pair with the torus");
    }
    const Mat e2 = average_matrix(field_block(Et0, ell, 0, ell, 1));
    dl = -c2.partialPivLu().solve(e2);
  }
  const FourierSeries dlf = constant_field(g, dl);
  {
    const FourierSeries r0 = field_add(Et0, field_multiply(C0, dlf));
    const std::vector<FourierSeries> r = components(r0);
    std::vector<FourierSeries> v(r0.rows());
    for (int i = 0; i < ell; ++i) v[ell + i] = zero_mean_solve(r[ell + i]);
    v[2 * ell + 1] = solve_twosided_constant(1.0 / mu, 1.0, r[2 * ell + 1], omega);
    const FourierSeries& V4 = v[2 * ell + 1];
    const Mat abar = average_matrix(cp.A);
    Eigen::JacobiSVD<Mat> asvd(abar);
    if (asvd.singularValues()(ell - 1) < opts.twist_floor) {
      throw TwistDegeneracyError("average torsion below floor");
    }
    // The average of V2 removes the average of the first block.
    FourierSeries V2 = slice(v, ell, ell);
    const FourierSeries r1 = field_add(slice(r, 0, ell), field_multiply(cp.x, V4), -1.0);
    const Mat v2bar =
        abar.partialPivLu().solve(average_matrix(r1) - average_matrix(field_multiply(cp.A, V2)));
    V2 = field_add(V2, constant_field(g, v2bar));
    const FourierSeries r1b = field_add(r1, field_multiply(cp.A, V2), -1.0);
    for (int i = 0; i < ell; ++i) {
      v[ell + i] = component(V2, i);
      v[i] = zero_mean_solve(component(r1b, i));
    }
    const FourierSeries r3 =
        field_add(field_add(r[2 * ell], field_multiply(cp.y, V2), -1.0), field_multiply(cp.B, V4), -1.0);
    v[2 * ell] = solve_twosided_constant(mu, 1.0, r3, omega);
    V[0] = stack(v);
  }

  // Order 1: the multiplier correction removes the resonant average of the
  // beta row. Each unknown is affine in dmu: V = base part + dmu * H part.
  const FourierSeries H0 = fr.H.orders[0];
  const FourierSeries base1 = convolve_rhs(
      field_add(field_scale(fr.Et.orders[1], -1.0), field_multiply(fr.C.orders[1], dlf)), fr.Rhat, V, 1, 0);
  const std::vector<FourierSeries> q = components(base1), h = components(H0);
  std::vector<FourierSeries> P2, Q2;
  for (int i = 0; i < ell; ++i) {
    P2.push_back(solve_twosided_constant(1.0, mu, q[ell + i], omega));
    Q2.push_back(solve_twosided_constant(1.0, mu, h[ell + i], omega));
  }
  const FourierSeries G = solve_twosided_constant(1.0 / mu, mu, q[2 * ell + 1], omega);
  const FourierSeries Fh = solve_twosided_constant(1.0 / mu, mu, h[2 * ell + 1], omega);
  const double num = average(q[2 * ell])[0] - average(field_multiply(cp.y, stack(P2)))[0] -
                     average(field_multiply(cp.B, G))[0];
  const double den = average(h[2 * ell])[0] - average(field_multiply(cp.y, stack(Q2)))[0] -
                     average(field_multiply(cp.B, Fh))[0];
  if (std::abs(den) < opts.twist_floor) throw DegeneratePairingError("multiplier direction is degenerate");
  const double dmu = -num / den;
  {
    const std::vector<FourierSeries> r = components(field_add(base1, field_scale(H0, dmu)));
    std::vector<FourierSeries> u(r.size());
    for (int i = 0; i < ell; ++i) u[ell + i] = field_add(P2[i], Q2[i], dmu);
    u[2 * ell + 1] = field_add(G, Fh, dmu);
    const FourierSeries U2 = slice(u, ell, ell);
    const FourierSeries& U4 = u[2 * ell + 1];
    const FourierSeries r1 = field_add(field_add(slice(r, 0, ell), field_multiply(cp.A, U2), -1.0),
                                       field_multiply(cp.x, U4), -1.0);
    for (int i = 0; i < ell; ++i) u[i] = solve_twosided_constant(1.0, mu, component(r1, i), omega);
    // mu (V3 - V3 o T) = r3; the free average is the scale of W1, fixed later.
    const FourierSeries r3 =
        field_add(field_add(r[2 * ell], field_multiply(cp.y, U2), -1.0), field_multiply(cp.B, U4), -1.0);
    u[2 * ell] = zero_mean_solve(field_scale(r3, 1.0 / mu));
    V[1] = stack(u);
  }

  for (int n = 2; n <= top; ++n) {
    FourierSeries base = field_add(field_scale(fr.Et.orders[n], -1.0), field_multiply(fr.C.orders[n], dlf));
    base = field_add(base, field_scale(fr.H.orders[n - 1], dmu));
    const FourierSeries rhs = convolve_rhs(base, fr.Rhat, V, n, 0);
    V[n] = to_grid(structured_solve(rhs, cp, mu, n, ell, omega));
  }

  const FourierTaylorSeries dW = frame_product(fr.M, V, 0);
  for (int n = 0; n <= top; ++n) w.W.orders[n] = to_grid(field_add(w.W.orders[n], dW.orders[n]));
  for (int i = 0; i < ell; ++i) w.base.lambda[i] += dl(i);
  w.mu += dmu;
  if (report) {
    report->residual_before = sup_over(E, 0, top);
    report->dlambda = max_abs(std::vector<double>(dl.data(), dl.data() + ell));
    report->dmu = dmu;
  }
  return normalize_whisker(std::move(w), w0.rho);
}

std::vector<double> evaluate_whisker(const Whisker& w, std::span<const double> theta, double s) {
  std::vector<double> z = lifted_at(torus_of(w), theta);
  double sn = s;
  for (int k = 1; k <= w.order(); ++k) {
    const std::vector<double> v = evaluate_at(w.W.orders[k], theta);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += sn * v[i];
    sn *= s;
  }
  return z;
}

double conjugacy_error(const SymplecticMap& F, const Whisker& w, std::span<const double> theta,
                       double s) {
  const std::vector<double> z = evaluate_whisker(w, theta, s);
  std::vector<double> fz(z.size());
  F.eval(z.data(), fz.data());
  std::vector<double> th(theta.begin(), theta.end());
  for (std::size_t a = 0; a < th.size(); ++a) th[a] += w.base.omega.omega[a];
  const std::vector<double> zs = evaluate_whisker(w, th, w.mu * s);
  double err = 0.0;
  std::vector<bool> angle(z.size(), false);
  for (int sl : w.base.angle_slots) angle[sl] = true;
  for (std::size_t i = 0; i < z.size(); ++i) {
    double d = fz[i] - zs[i];
    if (angle[i]) d -= std::round(d);
    err = std::max(err, std::abs(d));
  }
  return err;
}

}  // namespace kamtori
