#pragma once

#include <Eigen/Dense>

#include <functional>

#include "kamtori/fourier.hpp"

namespace kamtori {

// Small dense matrices with fixed capacity: no heap traffic per grid point.
constexpr int kMaxDim = 8;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;

// Gather/scatter the rows x cols matrix stored at grid point p (grid must be current).
Mat matrix_at(const FourierSeries& f, std::size_t p);
void set_matrix(FourierSeries& f, std::size_t p, const Mat& m);

// Pointwise field algebra. Inputs are brought to the grid; outputs carry grid only.
FourierSeries field_multiply(const FourierSeries& a, const FourierSeries& b);
FourierSeries field_add(const FourierSeries& a, const FourierSeries& b, double sb = 1.0);
FourierSeries field_scale(const FourierSeries& a, double s);
FourierSeries field_transpose(const FourierSeries& a);
FourierSeries field_inverse(const FourierSeries& a);
FourierSeries field_identity(const GridShape& g, int n);
// Columns [a | b] side by side; rows [a ; b] stacked.
FourierSeries field_hstack(const FourierSeries& a, const FourierSeries& b);
FourierSeries field_block(const FourierSeries& a, int r0, int c0, int rows, int cols);

// out(p) = fn(p) for every grid point, evaluated in parallel chunks.
FourierSeries field_map(const GridShape& g, int rows, int cols,
                        const std::function<Mat(std::size_t)>& fn);

// Max over grid points of the pointwise operator 2-norm.
double field_sup_opnorm(const FourierSeries& a);

// Moore-Penrose pseudoinverse with absolute singular value threshold.
Mat pseudo_inverse(const Mat& m, double threshold);

}  // namespace kamtori
