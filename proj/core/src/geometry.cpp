#include "kamtori/geometry.hpp"

#include <cmath>
#include <numbers>

#include "kamtori/errors.hpp"

namespace kamtori {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require_finite(const double* z, int n) {
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(z[i])) throw ModelDomainError("map evaluated at a non-finite point");
  }
}

struct StandardKick {
  double eps;
  static constexpr int d = 1;
  template <class T>
  void force(const T* q, T* g) const {
    using std::sin;
    g[0] = (eps / kTwoPi) * sin(kTwoPi * q[0]);
  }
  template <class T>
  void force_jacobian(const T* q, T* dg) const {
    using std::cos;
    dg[0] = eps * cos(kTwoPi * q[0]);
  }
};

struct RotatorPendulumKick {
  double a;
  double eps;
  bool linear;
  static constexpr int d = 2;
  template <class T>
  void force(const T* q, T* g) const {
    using std::sin;
    const T coupling = (eps / kTwoPi) * sin(kTwoPi * (q[0] + q[1]));
    g[0] = coupling;
    g[1] = linear ? a * q[1] + coupling : (a / kTwoPi) * sin(kTwoPi * q[1]) + coupling;
  }
  template <class T>
  void force_jacobian(const T* q, T* dg) const {
    using std::cos;
    const T c = eps * cos(kTwoPi * (q[0] + q[1]));
    dg[0] = c;
    dg[1] = c;
    dg[2] = c;
    if (linear) {
      dg[3] = c + a;
    } else {
      dg[3] = a * cos(kTwoPi * q[1]) + c;
    }
  }
};

struct CoupledStandardKick {
  double eps;
  double coupling;
  static constexpr int d = 2;
  template <class T>
  void force(const T* q, T* g) const {
    using std::sin;
    const T c = (coupling * eps / kTwoPi) * sin(kTwoPi * (q[0] + q[1]));
    g[0] = (eps / kTwoPi) * sin(kTwoPi * q[0]) + c;
    g[1] = (eps / kTwoPi) * sin(kTwoPi * q[1]) + c;
  }
  template <class T>
  void force_jacobian(const T* q, T* dg) const {
    using std::cos;
    const T c = (coupling * eps) * cos(kTwoPi * (q[0] + q[1]));
    dg[0] = eps * cos(kTwoPi * q[0]) + c;
    dg[1] = c;
    dg[2] = c;
    dg[3] = eps * cos(kTwoPi * q[1]) + c;
  }
};

// Kick followed by drift: p' = p + g(q), q' = q + p'.
template <class Kick>
class KickMap final : public SymplecticMap {
 public:
  static constexpr int d = Kick::d;

  KickMap(std::string name, Kick kick, std::map<std::string, double> params,
          std::vector<int> angles)
      : SymplecticMap(d, std::move(angles)), name_(std::move(name)), kick_(kick),
        params_(std::move(params)) {}

  std::string name() const override { return name_; }
  std::map<std::string, double> parameters() const override { return params_; }

  void eval(const double* z, double* out) const override {
    require_finite(z, 2 * d);
    apply(z, out);
  }

  Mat jacobian(const double* z) const override {
    require_finite(z, 2 * d);
    double dg[d * d];
    kick_.force_jacobian(z, dg);
    Mat m = Mat::Zero(2 * d, 2 * d);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        m(i, j) = dg[i * d + j] + (i == j ? 1.0 : 0.0);
        m(d + i, j) = dg[i * d + j];
      }
      m(i, d + i) = 1.0;
      m(d + i, d + i) = 1.0;
    }
    return m;
  }

  Mat jacobian_inverse(const double* z) const override {
    require_finite(z, 2 * d);
    double dg[d * d];
    kick_.force_jacobian(z, dg);
    Mat m = Mat::Zero(2 * d, 2 * d);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        m(d + i, j) = -dg[i * d + j];
        m(d + i, d + j) = dg[i * d + j] + (i == j ? 1.0 : 0.0);
      }
      m(i, i) = 1.0;
      m(i, d + i) = -1.0;
    }
    return m;
  }

  void eval_jet(const Jet* z, Jet* out) const override { apply(z, out); }

  void jacobian_jet(const Jet* z, Jet* out) const override {
    const int n = 2 * d;
    const int order = z[0].order();
    Jet dg[d * d];
    kick_.force_jacobian(z, dg);
    for (int i = 0; i < n * n; ++i) out[i] = Jet(order);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        out[i * n + j] = dg[i * d + j] + (i == j ? 1.0 : 0.0);
        out[(d + i) * n + j] = dg[i * d + j];
      }
      out[i * n + d + i] = Jet(order, 1.0);
      out[(d + i) * n + d + i] = Jet(order, 1.0);
    }
  }

 private:
  template <class T>
  void apply(const T* z, T* out) const {
    T g[d];
    kick_.force(z, g);
    for (int i = 0; i < d; ++i) {
      out[d + i] = z[d + i] + g[i];
      out[i] = z[i] + out[d + i];
    }
  }

  std::string name_;
  Kick kick_;
  std::map<std::string, double> params_;
};

double param(const std::map<std::string, double>& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

}  // namespace

SymplecticStructure SymplecticStructure::canonical(int d) {
  SymplecticStructure s;
  s.J = Mat::Zero(2 * d, 2 * d);
  for (int i = 0; i < d; ++i) {
    s.J(i, d + i) = -1.0;
    s.J(d + i, i) = 1.0;
  }
  s.J_inv = -s.J;
  s.almost_complex = true;
  return s;
}

SymplecticMap::SymplecticMap(int d, std::vector<int> angle_slots)
    : d_(d), ell_(static_cast<int>(angle_slots.size())), angle_slots_(std::move(angle_slots)),
      structure_(SymplecticStructure::canonical(d)) {}

void SymplecticMap::wrap(double* z) const {
  for (int s : angle_slots_) z[s] -= std::floor(z[s]);
}

MapPtr model_standard_map(double eps) {
  return std::make_shared<KickMap<StandardKick>>("standard", StandardKick{eps},
                                                 std::map<std::string, double>{{"eps", eps}},
                                                 std::vector<int>{0});
}

MapPtr model_rotator_pendulum(double a, double eps, bool linear_pendulum) {
  if (!(a > 0.0)) throw ParameterError("pendulum strength a must be positive");
  return std::make_shared<KickMap<RotatorPendulumKick>>(
      linear_pendulum ? "rotator_linear" : "rotator_pendulum",
      RotatorPendulumKick{a, eps, linear_pendulum},
      std::map<std::string, double>{{"a", a}, {"eps", eps}}, std::vector<int>{0});
}

MapPtr model_coupled_standard(double eps, double coupling) {
  return std::make_shared<KickMap<CoupledStandardKick>>(
      "coupled_standard", CoupledStandardKick{eps, coupling},
      std::map<std::string, double>{{"eps", eps}, {"coupling", coupling}},
      std::vector<int>{0, 1});
}

MapPtr make_model(const std::string& name, const std::map<std::string, double>& p) {
  const double eps = param(p, "eps", 0.0);
  if (name == "standard") return model_standard_map(eps);
  if (name == "rotator_pendulum") return model_rotator_pendulum(param(p, "a", 1.0), eps);
  if (name == "rotator_linear") return model_rotator_pendulum(param(p, "a", 1.0), eps, true);
  if (name == "coupled_standard") return model_coupled_standard(eps, param(p, "coupling", 0.5));
  throw ConfigError("unknown model '" + name + "'");
}

WindingMatrix WindingMatrix::identity(int ell) { return {Mat::Identity(ell, ell)}; }

int WindingMatrix::rank() const {
  Eigen::JacobiSVD<Mat> svd(I);
  svd.setThreshold(1e-12);
  return static_cast<int>(svd.rank());
}

TorusEmbedding constant_embedding(const SymplecticMap& F, const RotationVector& omega,
                                  const GridShape& grid, std::span<const double> base) {
  if (grid.dim() != F.ell() || omega.dim() != F.ell()) {
    throw ParameterError("grid and frequency dimensions must match the torus dimension");
  }
  TorusEmbedding K;
  K.K = FourierSeries::constant(grid, F.phase_dim(), 1, base);
  K.winding = WindingMatrix::identity(F.ell());
  K.omega = omega;
  K.angle_slots = F.angle_slots();
  K.lambda.assign(F.ell(), 0.0);
  return K;
}

std::vector<double> lifted_values(const TorusEmbedding& K, const FourierSeries& Kper,
                                  std::span<const double> shift) {
  const GridShape& g = Kper.shape();
  const std::size_t n = g.total();
  const int ell = g.dim();
  std::vector<double> out(Kper.grid_data());
  std::vector<double> theta(ell);
  for (std::size_t p = 0; p < n; ++p) {
    g.point(p, theta.data());
    for (int a = 0; a < ell; ++a) {
      double v = 0.0;
      for (int b = 0; b < ell; ++b) v += K.winding.I(a, b) * (theta[b] + shift[b]);
      out[K.angle_slots[a] * n + p] += v;
    }
  }
  return out;
}

std::vector<double> lifted_values(const TorusEmbedding& K) {
  const std::vector<double> zero(K.ell(), 0.0);
  return lifted_values(K, to_grid(K.K), zero);
}

std::vector<double> lifted_at(const TorusEmbedding& K, std::span<const double> theta) {
  std::vector<double> z = evaluate_at(K.K, theta);
  for (int a = 0; a < K.ell(); ++a) {
    double v = 0.0;
    for (int b = 0; b < K.ell(); ++b) v += K.winding.I(a, b) * theta[b];
    z[K.angle_slots[a]] += v;
  }
  return z;
}

FourierSeries embedding_jacobian(const TorusEmbedding& K) {
  const int ell = K.ell();
  const int n = K.phase_dim();
  std::vector<FourierSeries> parts;
  for (int b = 0; b < ell; ++b) parts.push_back(derivative(K.K, b));
  const GridShape& g = K.grid();
  return field_map(g, n, ell, [&](std::size_t p) -> Mat {
    Mat m(n, ell);
    for (int b = 0; b < ell; ++b) {
      for (int i = 0; i < n; ++i) m(i, b) = parts[b].at(i, p);
    }
    for (int a = 0; a < ell; ++a) {
      for (int b = 0; b < ell; ++b) m(K.angle_slots[a], b) += K.winding.I(a, b);
    }
    return m;
  });
}

TorusEmbedding lift_normalize(const GridShape& grid, std::span<const double> raw,
                              const WindingMatrix& I, const RotationVector& omega,
                              std::vector<int> angle_slots) {
  const std::size_t n = grid.total();
  const int ell = grid.dim();
  const int m = static_cast<int>(raw.size() / n);
  std::vector<double> per(raw.begin(), raw.end());
  std::vector<double> theta(ell);
  for (std::size_t p = 0; p < n; ++p) {
    grid.point(p, theta.data());
    for (int a = 0; a < ell; ++a) {
      double v = 0.0;
      for (int b = 0; b < ell; ++b) v += I.I(a, b) * theta[b];
      per[angle_slots[a] * n + p] -= v;
    }
  }
  TorusEmbedding K;
  K.K = FourierSeries::from_grid(grid, m, 1, std::move(per));
  K.winding = I;
  K.omega = omega;
  K.angle_slots = std::move(angle_slots);
  K.lambda.assign(ell, 0.0);
  return normalize_translation(std::move(K));
}

TorusEmbedding normalize_translation(TorusEmbedding K) {
  const int ell = K.ell();
  if (K.winding.rank() == 0) return K;
  const std::vector<double> avg = average(K.K);
  Vec mean(ell);
  for (int a = 0; a < ell; ++a) mean(a) = avg[K.angle_slots[a]];
  const Vec sigma = -pseudo_inverse(K.winding.I, 1e-12) * mean;
  std::vector<double> shift(sigma.data(), sigma.data() + ell);
  K.K = rotate(std::move(K.K), shift);
  const Vec lift = K.winding.I * sigma;
  auto& c = K.K.coeff_data_mut();
  for (int a = 0; a < ell; ++a) c[K.angle_slots[a] * K.grid().packed()] += lift(a);
  K.K.ensure_grid();
  return K;
}

double coisotropy_defect(const TorusEmbedding& K, const SymplecticStructure& J) {
  const FourierSeries DK = embedding_jacobian(K);
  double worst = 0.0;
  for (std::size_t p = 0; p < DK.points(); ++p) {
    const Mat a = matrix_at(DK, p);
    const Mat w = a.transpose() * J.J_inv * a;
    worst = std::max(worst, w.cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace kamtori
