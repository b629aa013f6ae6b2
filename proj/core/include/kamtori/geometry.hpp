#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kamtori/fields.hpp"
#include "kamtori/fourier.hpp"
#include "kamtori/jet.hpp"

namespace kamtori {

// Constant symplectic form on R^{2d}; coordinates ordered (q, p).
struct SymplecticStructure {
  Mat J;
  Mat J_inv;
  bool almost_complex = false;  // J^2 = -Id

  static SymplecticStructure canonical(int d);
  int dim() const { return static_cast<int>(J.rows()); }
};

// Exact symplectic map of R^{2d-ell} x T^ell, evaluated on a lift (no reduction
// of angle coordinates).
class SymplecticMap {
 public:
  virtual ~SymplecticMap() = default;

  virtual std::string name() const = 0;
  virtual std::map<std::string, double> parameters() const = 0;

  int d() const { return d_; }
  int ell() const { return ell_; }
  int phase_dim() const { return 2 * d_; }
  // Indices of the coordinates living on the torus factor, one per angle.
  const std::vector<int>& angle_slots() const { return angle_slots_; }
  const SymplecticStructure& structure() const { return structure_; }

  virtual void eval(const double* z, double* out) const = 0;
  virtual Mat jacobian(const double* z) const = 0;
  virtual Mat jacobian_inverse(const double* z) const = 0;
  virtual void eval_jet(const Jet* z, Jet* out) const = 0;
  // Row-major 2d x 2d jets of the Jacobian along a jet of points.
  virtual void jacobian_jet(const Jet* z, Jet* out) const = 0;

  // Wraps angle coordinates into [0, 1).
  void wrap(double* z) const;

 protected:
  SymplecticMap(int d, std::vector<int> angle_slots);

 private:
  int d_;
  int ell_;
  std::vector<int> angle_slots_;
  SymplecticStructure structure_;
};

using MapPtr = std::shared_ptr<const SymplecticMap>;

// p' = p + (eps / 2 pi) sin 2 pi q, q' = q + p'.
MapPtr model_standard_map(double eps);

// Rotator (q1, p1) coupled to a pendulum (q2, p2) whose origin is a saddle:
// p' = p + g(q), q' = q + p', with g = -grad V and
// V = (a / 4 pi^2) cos 2 pi q2 + (eps / 4 pi^2) cos 2 pi (q1 + q2).
// With `linear_pendulum` the pendulum force is replaced by its linearization a q2.
MapPtr model_rotator_pendulum(double a, double eps, bool linear_pendulum = false);

// Two coupled standard maps on T^2 x R^2 (Lagrangian tori of dimension 2).
MapPtr model_coupled_standard(double eps, double coupling);

// Builds a model by name from a parameter table; throws ConfigError.
MapPtr make_model(const std::string& name, const std::map<std::string, double>& params);

// Winding of the angle coordinates: theta -> I theta.
struct WindingMatrix {
  Mat I;
  static WindingMatrix identity(int ell);
  int rank() const;
};

// Parameterization K(theta) = K~(theta) + (I theta in the angle slots).
struct TorusEmbedding {
  FourierSeries K;  // periodic part, 2d x 1
  WindingMatrix winding;
  RotationVector omega;
  std::vector<int> angle_slots;
  std::vector<double> lambda;       // counterterm, size ell
  std::optional<FourierSeries> K0;  // frozen reference for the counterterm direction

  int ell() const { return omega.dim(); }
  int phase_dim() const { return K.rows(); }
  const GridShape& grid() const { return K.shape(); }
};

// Integrable-type initial guess: K~ constant, equal to `base`.
TorusEmbedding constant_embedding(const SymplecticMap& F, const RotationVector& omega,
                                  const GridShape& grid, std::span<const double> base);

// Lifted values K(theta_j + shift) on the grid, component-major (2d x N).
std::vector<double> lifted_values(const TorusEmbedding& K, const FourierSeries& Kper,
                                  std::span<const double> shift);
std::vector<double> lifted_values(const TorusEmbedding& K);
// Lifted K at an arbitrary point by direct trigonometric summation.
std::vector<double> lifted_at(const TorusEmbedding& K, std::span<const double> theta);
// DK as a 2d x ell field, including the winding.
FourierSeries embedding_jacobian(const TorusEmbedding& K);

// Builds an embedding from grid samples of the full (non-periodic) K and winding I,
// then enforces the translation normalization.
TorusEmbedding lift_normalize(const GridShape& grid, std::span<const double> raw_samples,
                              const WindingMatrix& I, const RotationVector& omega,
                              std::vector<int> angle_slots);

// Fixes the phase freedom K -> K o T_sigma: average of the angle part vanishes.
TorusEmbedding normalize_translation(TorusEmbedding K);

// sup_theta || DK^T J^{-1} DK ||.
double coisotropy_defect(const TorusEmbedding& K, const SymplecticStructure& J);

}  // namespace kamtori
