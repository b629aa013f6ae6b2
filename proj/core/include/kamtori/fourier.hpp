#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace kamtori {

using cplx = std::complex<double>;

// Uniform grid on the torus T^ell, one power-of-two size per axis.
class GridShape {
 public:
  GridShape() = default;
  explicit GridShape(std::vector<int> sizes);
  static GridShape uniform(int ell, int n) { return GridShape(std::vector<int>(ell, n)); }

  int dim() const { return static_cast<int>(sizes_.size()); }
  int size(int axis) const { return sizes_[axis]; }
  const std::vector<int>& sizes() const { return sizes_; }
  std::size_t total() const { return total_; }
  // Number of stored Hermitian-packed coefficients (last axis halved).
  std::size_t packed() const { return packed_; }

  // Wavenumber of a packed coefficient index along each axis. `nyquist` is set
  // when any axis sits at +-N/2.
  void wavenumber(std::size_t packed_index, int* k, bool* nyquist) const;
  // Grid coordinate theta_j (in [0,1)) of a grid point.
  void point(std::size_t grid_index, double* theta) const;

  GridShape doubled() const;

  bool operator==(const GridShape&) const = default;

 private:
  std::vector<int> sizes_;
  std::size_t total_ = 0;
  std::size_t packed_ = 0;
};

// Frequency vector with Diophantine constants (nu, tau).
struct RotationVector {
  std::vector<double> omega;
  double nu = 0.0;   // 0 means "not asserted"
  double tau = 0.0;

  RotationVector() = default;
  explicit RotationVector(std::vector<double> w, double nu_ = 0.0, double tau_ = 0.0);

  int dim() const { return static_cast<int>(omega.size()); }
  std::span<const double> values() const { return omega; }

  // Accepts "golden", "sqrt2", a decimal literal, or a comma list of these.
  static RotationVector parse(const std::string& text);
  static RotationVector golden();
  static RotationVector sqrt2();

  // Throws ParameterError if some component is within `tol` of p/q, q <= max_q.
  void check_irrational(int max_q, double tol = 1e-12) const;
};

// Vector- or matrix-valued function on T^ell held as grid samples and/or
// normalized Fourier coefficients c_k = N^{-1} sum_j f(theta_j) e^{-2 pi i k.theta_j}.
// Components are stored row-major (rows x cols).
class FourierSeries {
 public:
  FourierSeries() = default;
  FourierSeries(GridShape shape, int rows, int cols = 1);

  static FourierSeries from_grid(GridShape shape, int rows, int cols, std::vector<double> values);
  static FourierSeries from_coeffs(GridShape shape, int rows, int cols,
                                   std::vector<cplx> coeffs);
  static FourierSeries constant(GridShape shape, int rows, int cols,
                                std::span<const double> value);

  const GridShape& shape() const { return shape_; }
  int dim_domain() const { return shape_.dim(); }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int components() const { return rows_ * cols_; }
  std::size_t points() const { return shape_.total(); }
  bool empty() const { return rows_ == 0; }

  bool has_grid() const { return grid_ok_; }
  bool has_coeffs() const { return coeffs_ok_; }

  std::span<const double> grid(int comp) const;
  std::span<double> grid_mut(int comp);
  std::span<const cplx> coeffs(int comp) const;
  std::span<cplx> coeffs_mut(int comp);

  const std::vector<double>& grid_data() const;
  std::vector<double>& grid_data_mut();
  const std::vector<cplx>& coeff_data() const;
  std::vector<cplx>& coeff_data_mut();

  double at(int comp, std::size_t p) const { return grid_[comp * shape_.total() + p]; }
  double& at_mut(int comp, std::size_t p) { return grid_[comp * shape_.total() + p]; }

  // Fill grid from coefficients / coefficients from grid in place.
  void ensure_grid();
  void ensure_coeffs();

  void reshape(int rows, int cols);

 private:
  GridShape shape_;
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> grid_;
  std::vector<cplx> coeffs_;
  bool grid_ok_ = false;
  bool coeffs_ok_ = false;
};

FourierSeries to_grid(FourierSeries f);
FourierSeries to_coeffs(FourierSeries f);

// f(theta + shift); returned with coefficients and grid current.
FourierSeries rotate(FourierSeries f, std::span<const double> shift);
FourierSeries rotate(FourierSeries f, const RotationVector& omega);
FourierSeries rotate_back(FourierSeries f, const RotationVector& omega);
FourierSeries derivative(FourierSeries f, int axis);
std::vector<double> average(FourierSeries f);
FourierSeries subtract_average(FourierSeries f);
// Zero-pad or truncate the spectrum onto another grid.
FourierSeries resample(FourierSeries f, const GridShape& target);

// Evaluates the trigonometric polynomial at an arbitrary point.
std::vector<double> evaluate_at(const FourierSeries& f, std::span<const double> theta);

double sup_norm(const FourierSeries& f);
// Amplitude fraction sqrt(sum_{top octave}|c|^2 / sum |c|^2).
double tail_fraction(FourierSeries f);

struct CohomologyOptions {
  double divisor_floor = 1e-9;
  double zero_average_tol = 1e-10;
  bool check_average = true;
};

struct CohomologyResult {
  FourierSeries phi;
  double min_divisor = 0.0;
  double residual_bound = 0.0;  // sup |eta_k| / |divisor_k| over the spectrum
};

// phi - phi o T_omega = eta with zero-average phi.
CohomologyResult solve_cohomology_constant(FourierSeries eta, const RotationVector& omega,
                                           const CohomologyOptions& opts = {});

// a phi - b phi o T_omega = eta for scalar constants a, b; the zero mode must be
// nonresonant (|a - b| above the floor).
FourierSeries solve_twosided_constant(double a, double b, FourierSeries eta,
                                      const RotationVector& omega,
                                      double divisor_floor = 1e-12);

struct DiophantineReport {
  double worst_ratio = 0.0;  // max over 0<|k|<=k_max of |k.omega - n|^{-1} / |k|^tau
  std::vector<int> worst_k;
  bool ok = false;
};

DiophantineReport diophantine_witness(const RotationVector& omega, int k_max);

}  // namespace kamtori
