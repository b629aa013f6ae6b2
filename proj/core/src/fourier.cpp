#include "kamtori/fourier.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>

#include "kamtori/errors.hpp"

namespace kamtori {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

bool is_power_of_two(int n) { return n >= 2 && (n & (n - 1)) == 0; }

struct PlanPair {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
};

class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plans] : plans_) {
      fftw_destroy_plan(plans.forward);
      fftw_destroy_plan(plans.backward);
    }
  }

  PlanPair get(const GridShape& shape) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = plans_.find(shape.sizes());
    if (it != plans_.end()) return it->second;
    std::vector<double> real(shape.total());
    std::vector<cplx> spec(shape.packed());
    auto* in = real.data();
    auto* out = reinterpret_cast<fftw_complex*>(spec.data());
    const int rank = shape.dim();
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    PlanPair p;
    p.forward = fftw_plan_dft_r2c(rank, shape.sizes().data(), in, out, flags);
    p.backward = fftw_plan_dft_c2r(rank, shape.sizes().data(), out, in, flags);
    plans_.emplace(shape.sizes(), p);
    return p;
  }

 private:
  std::mutex mutex_;
  std::map<std::vector<int>, PlanPair> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericCorruptionError(std::string("non-finite value in ") + what);
  }
}

void check_finite(std::span<const cplx> v, const char* what) {
  for (const cplx& x : v) {
    if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) {
      throw NumericCorruptionError(std::string("non-finite coefficient in ") + what);
    }
  }
}

double dot_k(const int* k, std::span<const double> w) {
  double s = 0.0;
  for (std::size_t a = 0; a < w.size(); ++a) s += k[a] * w[a];
  return s;
}

}  // namespace

// ---------------------------------------------------------------- GridShape

GridShape::GridShape(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.empty()) throw ParameterError("grid needs at least one axis");
  total_ = 1;
  for (int n : sizes_) {
    if (!is_power_of_two(n)) {
      throw ParameterError("grid size " + std::to_string(n) + " is not a power of two");
    }
    total_ *= static_cast<std::size_t>(n);
  }
  packed_ = total_ / sizes_.back() * (sizes_.back() / 2 + 1);
}

void GridShape::wavenumber(std::size_t idx, int* k, bool* nyquist) const {
  const int last = dim() - 1;
  const int nl = sizes_[last] / 2 + 1;
  bool nyq = false;
  int j = static_cast<int>(idx % nl);
  idx /= nl;
  k[last] = j;
  if (j == sizes_[last] / 2) nyq = true;
  for (int a = last - 1; a >= 0; --a) {
    const int n = sizes_[a];
    j = static_cast<int>(idx % n);
    idx /= n;
    if (j == n / 2) nyq = true;
    k[a] = j <= n / 2 ? j : j - n;
  }
  *nyquist = nyq;
}

void GridShape::point(std::size_t idx, double* theta) const {
  for (int a = dim() - 1; a >= 0; --a) {
    const int n = sizes_[a];
    theta[a] = static_cast<double>(idx % n) / n;
    idx /= n;
  }
}

GridShape GridShape::doubled() const {
  std::vector<int> s = sizes_;
  for (int& n : s) n *= 2;
  return GridShape(std::move(s));
}

// ----------------------------------------------------------- RotationVector

RotationVector::RotationVector(std::vector<double> w, double nu_, double tau_)
    : omega(std::move(w)), nu(nu_), tau(tau_) {
  if (omega.empty()) throw ParameterError("rotation vector is empty");
  for (double x : omega) {
    if (!std::isfinite(x)) throw ParameterError("rotation vector is not finite");
  }
  if (tau == 0.0) tau = static_cast<double>(omega.size());
}

RotationVector RotationVector::golden() {
  return RotationVector({std::strtod("0.61803398874989484820458683436564", nullptr)}, 3.0, 1.0);
}

RotationVector RotationVector::sqrt2() {
  return RotationVector({std::strtod("0.41421356237309504880168872420970", nullptr)}, 3.0, 1.0);
}

RotationVector RotationVector::parse(const std::string& text) {
  if (text == "golden") return golden();
  if (text == "sqrt2") return sqrt2();
  std::vector<double> w;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "golden" || item == "sqrt2") {
      w.push_back(item == "golden" ? golden().omega[0] : sqrt2().omega[0]);
      continue;
    }
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (end == item.c_str() || *end != '\0') {
      throw ParameterError("cannot parse frequency component '" + item + "'");
    }
    w.push_back(v);
  }
  if (w.empty()) throw ParameterError("empty frequency specification");
  return RotationVector(std::move(w));
}

void RotationVector::check_irrational(int max_q, double tol) const {
  for (std::size_t a = 0; a < omega.size(); ++a) {
    for (int q = 1; q <= max_q; ++q) {
      const double x = q * omega[a];
      if (std::abs(x - std::round(x)) < tol) {
        throw ParameterError("frequency component " + std::to_string(omega[a]) +
                             " is rational with denominator " + std::to_string(q));
      }
    }
  }
}

// ------------------------------------------------------------ FourierSeries

FourierSeries::FourierSeries(GridShape shape, int rows, int cols)
    : shape_(std::move(shape)), rows_(rows), cols_(cols),
      grid_(static_cast<std::size_t>(rows * cols) * shape_.total(), 0.0),
      coeffs_(static_cast<std::size_t>(rows * cols) * shape_.packed(), cplx(0.0)),
      grid_ok_(true), coeffs_ok_(true) {}

FourierSeries FourierSeries::from_grid(GridShape shape, int rows, int cols,
                                       std::vector<double> values) {
  FourierSeries f;
  f.shape_ = std::move(shape);
  f.rows_ = rows;
  f.cols_ = cols;
  if (values.size() != static_cast<std::size_t>(rows * cols) * f.shape_.total()) {
    throw ParameterError("grid value count does not match shape");
  }
  f.grid_ = std::move(values);
  f.grid_ok_ = true;
  return f;
}

FourierSeries FourierSeries::from_coeffs(GridShape shape, int rows, int cols,
                                         std::vector<cplx> coeffs) {
  FourierSeries f;
  f.shape_ = std::move(shape);
  f.rows_ = rows;
  f.cols_ = cols;
  if (coeffs.size() != static_cast<std::size_t>(rows * cols) * f.shape_.packed()) {
    throw ParameterError("coefficient count does not match shape");
  }
  f.coeffs_ = std::move(coeffs);
  f.coeffs_ok_ = true;
  return f;
}

FourierSeries FourierSeries::constant(GridShape shape, int rows, int cols,
                                      std::span<const double> value) {
  FourierSeries f(std::move(shape), rows, cols);
  const std::size_t n = f.points();
  for (int c = 0; c < rows * cols; ++c) {
    std::fill(f.grid_.begin() + c * n, f.grid_.begin() + (c + 1) * n, value[c]);
    f.coeffs_[c * f.shape_.packed()] = value[c];
  }
  return f;
}

std::span<const double> FourierSeries::grid(int comp) const {
  if (!grid_ok_) throw std::logic_error("grid samples are stale");
  return {grid_.data() + comp * shape_.total(), shape_.total()};
}

std::span<double> FourierSeries::grid_mut(int comp) {
  if (!grid_ok_) ensure_grid();
  coeffs_ok_ = false;
  return {grid_.data() + comp * shape_.total(), shape_.total()};
}

std::span<const cplx> FourierSeries::coeffs(int comp) const {
  if (!coeffs_ok_) throw std::logic_error("coefficients are stale");
  return {coeffs_.data() + comp * shape_.packed(), shape_.packed()};
}

std::span<cplx> FourierSeries::coeffs_mut(int comp) {
  if (!coeffs_ok_) ensure_coeffs();
  grid_ok_ = false;
  return {coeffs_.data() + comp * shape_.packed(), shape_.packed()};
}

const std::vector<double>& FourierSeries::grid_data() const {
  if (!grid_ok_) throw std::logic_error("grid samples are stale");
  return grid_;
}

std::vector<double>& FourierSeries::grid_data_mut() {
  if (!grid_ok_) ensure_grid();
  coeffs_ok_ = false;
  return grid_;
}

const std::vector<cplx>& FourierSeries::coeff_data() const {
  if (!coeffs_ok_) throw std::logic_error("coefficients are stale");
  return coeffs_;
}

std::vector<cplx>& FourierSeries::coeff_data_mut() {
  if (!coeffs_ok_) ensure_coeffs();
  grid_ok_ = false;
  return coeffs_;
}

void FourierSeries::ensure_coeffs() {
  if (coeffs_ok_) return;
  check_finite(grid_, "grid samples");
  const PlanPair plans = plan_cache().get(shape_);
  const std::size_t n = shape_.total();
  const std::size_t m = shape_.packed();
  coeffs_.assign(static_cast<std::size_t>(components()) * m, cplx(0.0));
  const double scale = 1.0 / static_cast<double>(n);
  std::vector<double> scratch(n);
  for (int c = 0; c < components(); ++c) {
    std::copy_n(grid_.begin() + c * n, n, scratch.begin());
    cplx* out = coeffs_.data() + c * m;
    fftw_execute_dft_r2c(plans.forward, scratch.data(), reinterpret_cast<fftw_complex*>(out));
    for (std::size_t i = 0; i < m; ++i) out[i] *= scale;
  }
  coeffs_ok_ = true;
}

void FourierSeries::ensure_grid() {
  if (grid_ok_) return;
  check_finite(coeffs_, "coefficients");
  const PlanPair plans = plan_cache().get(shape_);
  const std::size_t n = shape_.total();
  const std::size_t m = shape_.packed();
  grid_.assign(static_cast<std::size_t>(components()) * n, 0.0);
  std::vector<cplx> scratch(m);
  for (int c = 0; c < components(); ++c) {
    std::copy_n(coeffs_.begin() + c * m, m, scratch.begin());
    fftw_execute_dft_c2r(plans.backward, reinterpret_cast<fftw_complex*>(scratch.data()),
                         grid_.data() + c * n);
  }
  grid_ok_ = true;
}

void FourierSeries::reshape(int rows, int cols) {
  if (rows * cols != components()) throw ParameterError("reshape changes component count");
  rows_ = rows;
  cols_ = cols;
}

FourierSeries to_grid(FourierSeries f) {
  f.ensure_grid();
  return f;
}

FourierSeries to_coeffs(FourierSeries f) {
  f.ensure_coeffs();
  return f;
}

// ---------------------------------------------------------------- operators

FourierSeries rotate(FourierSeries f, std::span<const double> shift) {
  if (static_cast<int>(shift.size()) != f.dim_domain()) {
    throw ParameterError("shift dimension does not match torus dimension");
  }
  f.ensure_coeffs();
  const GridShape& g = f.shape();
  const std::size_t m = g.packed();
  std::vector<cplx> phase(m);
  std::vector<int> k(g.dim());
  bool nyq = false;
  for (std::size_t i = 0; i < m; ++i) {
    g.wavenumber(i, k.data(), &nyq);
    // Reduce the phase argument mod 1 before scaling to keep it accurate.
    double arg = dot_k(k.data(), shift);
    arg -= std::floor(arg);
    phase[i] = nyq ? cplx(std::cos(kTwoPi * arg), 0.0) : std::polar(1.0, kTwoPi * arg);
  }
  auto& c = f.coeff_data_mut();
  for (int comp = 0; comp < f.components(); ++comp) {
    cplx* p = c.data() + comp * m;
    for (std::size_t i = 0; i < m; ++i) p[i] *= phase[i];
  }
  f.ensure_grid();
  return f;
}

FourierSeries rotate(FourierSeries f, const RotationVector& omega) {
  return rotate(std::move(f), omega.values());
}

FourierSeries rotate_back(FourierSeries f, const RotationVector& omega) {
  std::vector<double> w(omega.omega);
  for (double& x : w) x = -x;
  return rotate(std::move(f), w);
}

FourierSeries derivative(FourierSeries f, int axis) {
  f.ensure_coeffs();
  const GridShape& g = f.shape();
  const std::size_t m = g.packed();
  std::vector<int> k(g.dim());
  bool nyq = false;
  auto& c = f.coeff_data_mut();
  for (std::size_t i = 0; i < m; ++i) {
    g.wavenumber(i, k.data(), &nyq);
    const cplx factor = nyq ? cplx(0.0) : cplx(0.0, kTwoPi * k[axis]);
    for (int comp = 0; comp < f.components(); ++comp) c[comp * m + i] *= factor;
  }
  f.ensure_grid();
  return f;
}

std::vector<double> average(FourierSeries f) {
  f.ensure_coeffs();
  std::vector<double> avg(f.components());
  for (int comp = 0; comp < f.components(); ++comp) avg[comp] = f.coeffs(comp)[0].real();
  return avg;
}

FourierSeries subtract_average(FourierSeries f) {
  f.ensure_coeffs();
  auto& c = f.coeff_data_mut();
  for (int comp = 0; comp < f.components(); ++comp) c[comp * f.shape().packed()] = 0.0;
  f.ensure_grid();
  return f;
}

FourierSeries resample(FourierSeries f, const GridShape& target) {
  if (target.dim() != f.dim_domain()) throw ParameterError("resample changes torus dimension");
  if (target == f.shape()) return f;
  f.ensure_coeffs();
  const GridShape& src = f.shape();
  const int ell = src.dim();
  std::vector<cplx> out(static_cast<std::size_t>(f.components()) * target.packed(), cplx(0.0));
  std::vector<int> k(ell);
  bool nyq = false;
  for (std::size_t i = 0; i < src.packed(); ++i) {
    src.wavenumber(i, k.data(), &nyq);
    // Target index; drop modes outside the target band (and Nyquist of either).
    bool keep = !nyq;
    std::size_t idx = 0;
    for (int a = 0; a < ell && keep; ++a) {
      const int n = target.size(a);
      if (std::abs(k[a]) >= n / 2) {
        keep = false;
        break;
      }
      if (a == ell - 1) {
        idx = idx * (n / 2 + 1) + k[a];
      } else {
        idx = idx * n + (k[a] >= 0 ? k[a] : k[a] + n);
      }
    }
    if (!keep) continue;
    for (int comp = 0; comp < f.components(); ++comp) {
      out[comp * target.packed() + idx] = f.coeffs(comp)[i];
    }
  }
  FourierSeries r = FourierSeries::from_coeffs(target, f.rows(), f.cols(), std::move(out));
  r.ensure_grid();
  return r;
}

std::vector<double> evaluate_at(const FourierSeries& fin, std::span<const double> theta) {
  FourierSeries f = fin;
  f.ensure_coeffs();
  const GridShape& g = f.shape();
  std::vector<double> out(f.components(), 0.0);
  std::vector<int> k(g.dim());
  bool nyq = false;
  const int last = g.dim() - 1;
  for (std::size_t i = 0; i < g.packed(); ++i) {
    g.wavenumber(i, k.data(), &nyq);
    double arg = dot_k(k.data(), theta);
    arg -= std::floor(arg);
    const bool interior = k[last] > 0 && k[last] < g.size(last) / 2;
    const double weight = interior ? 2.0 : 1.0;
    const cplx e = nyq ? cplx(std::cos(kTwoPi * arg), 0.0) : std::polar(1.0, kTwoPi * arg);
    for (int comp = 0; comp < f.components(); ++comp) {
      out[comp] += weight * (f.coeffs(comp)[i] * e).real();
    }
  }
  return out;
}

double sup_norm(const FourierSeries& fin) {
  if (fin.has_grid()) {
    double m = 0.0;
    for (double x : fin.grid_data()) m = std::max(m, std::abs(x));
    return m;
  }
  return sup_norm(to_grid(fin));
}

double tail_fraction(FourierSeries f) {
  f.ensure_coeffs();
  const GridShape& g = f.shape();
  const int last = g.dim() - 1;
  std::vector<int> k(g.dim());
  bool nyq = false;
  double tail = 0.0, total = 0.0;
  for (std::size_t i = 0; i < g.packed(); ++i) {
    g.wavenumber(i, k.data(), &nyq);
    bool top = false;
    for (int a = 0; a < g.dim(); ++a) top = top || std::abs(k[a]) > g.size(a) / 4;
    const double weight = (k[last] > 0 && k[last] < g.size(last) / 2) ? 2.0 : 1.0;
    for (int comp = 0; comp < f.components(); ++comp) {
      const double e = weight * std::norm(f.coeffs(comp)[i]);
      total += e;
      if (top) tail += e;
    }
  }
  return total > 0.0 ? std::sqrt(tail / total) : 0.0;
}

// -------------------------------------------------------------- cohomology

CohomologyResult solve_cohomology_constant(FourierSeries eta, const RotationVector& omega,
                                           const CohomologyOptions& opts) {
  eta.ensure_coeffs();
  check_finite(eta.coeff_data(), "cohomology right-hand side");
  const GridShape& g = eta.shape();
  std::vector<int> k(g.dim());
  bool nyq = false;
  CohomologyResult res;
  res.min_divisor = std::numeric_limits<double>::infinity();
  if (opts.check_average) {
    for (int comp = 0; comp < eta.components(); ++comp) {
      const double avg = eta.coeffs(comp)[0].real();
      if (std::abs(avg) > opts.zero_average_tol) {
        std::ostringstream os;
        os << "right-hand side has nonzero average " << avg << " in component " << comp;
        throw ObstructionError(os.str());
      }
    }
  }
  auto& c = eta.coeff_data_mut();
  for (std::size_t i = 0; i < g.packed(); ++i) {
    g.wavenumber(i, k.data(), &nyq);
    if (i == 0 || nyq) {
      for (int comp = 0; comp < eta.components(); ++comp) c[comp * g.packed() + i] = 0.0;
      continue;
    }
    double arg = dot_k(k.data(), omega.values());
    arg -= std::floor(arg);
    const cplx divisor = 1.0 - std::polar(1.0, kTwoPi * arg);
    const double mag = std::abs(divisor);
    if (mag < opts.divisor_floor) {
      throw SmallDivisorError("divisor below floor", k);
    }
    res.min_divisor = std::min(res.min_divisor, mag);
    for (int comp = 0; comp < eta.components(); ++comp) {
      cplx& v = c[comp * g.packed() + i];
      res.residual_bound = std::max(res.residual_bound, std::abs(v) / mag);
      v /= divisor;
    }
  }
  eta.ensure_grid();
  res.phi = std::move(eta);
  return res;
}

FourierSeries solve_twosided_constant(double a, double b, FourierSeries eta,
                                      const RotationVector& omega, double divisor_floor) {
  eta.ensure_coeffs();
  const GridShape& g = eta.shape();
  std::vector<int> k(g.dim());
  bool nyq = false;
  auto& c = eta.coeff_data_mut();
  for (std::size_t i = 0; i < g.packed(); ++i) {
    g.wavenumber(i, k.data(), &nyq);
    if (nyq) {
      for (int comp = 0; comp < eta.components(); ++comp) c[comp * g.packed() + i] = 0.0;
      continue;
    }
    double arg = dot_k(k.data(), omega.values());
    arg -= std::floor(arg);
    const cplx divisor = a - b * std::polar(1.0, kTwoPi * arg);
    if (std::abs(divisor) < divisor_floor) throw SmallDivisorError("resonant two-sided divisor", k);
    for (int comp = 0; comp < eta.components(); ++comp) c[comp * g.packed() + i] /= divisor;
  }
  eta.ensure_grid();
  return eta;
}

DiophantineReport diophantine_witness(const RotationVector& omega, int k_max) {
  DiophantineReport rep;
  const int ell = omega.dim();
  std::vector<int> k(ell, 0);
  // Enumerate the half-space of nonzero k with |k|_1 <= k_max by odometer.
  std::vector<int> lo(ell, -k_max);
  k = lo;
  while (true) {
    int l1 = 0;
    int first = 0;
    for (int a = 0; a < ell; ++a) {
      l1 += std::abs(k[a]);
      if (first == 0 && k[a] != 0) first = k[a];
    }
    if (l1 > 0 && l1 <= k_max && first > 0) {
      double x = 0.0;
      for (int a = 0; a < ell; ++a) x += k[a] * omega.omega[a];
      const double dist = std::abs(x - std::round(x));
      const double ratio =
          dist > 0.0 ? 1.0 / (dist * std::pow(static_cast<double>(l1), omega.tau))
                     : std::numeric_limits<double>::infinity();
      if (ratio > rep.worst_ratio) {
        rep.worst_ratio = ratio;
        rep.worst_k = k;
      }
    }
    int a = ell - 1;
    while (a >= 0 && k[a] == k_max) {
      k[a] = -k_max;
      --a;
    }
    if (a < 0) break;
    ++k[a];
  }
  rep.ok = omega.nu <= 0.0 || rep.worst_ratio <= omega.nu;
  return rep;
}

}  // namespace kamtori
