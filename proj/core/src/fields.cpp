#include "kamtori/fields.hpp"

#include "kamtori/errors.hpp"
#include "kamtori/parallel.hpp"

namespace kamtori {

namespace {

const FourierSeries& on_grid(const FourierSeries& f, FourierSeries& storage) {
  if (f.has_grid()) return f;
  storage = to_grid(f);
  return storage;
}

}  // namespace

Mat matrix_at(const FourierSeries& f, std::size_t p) {
  Mat m(f.rows(), f.cols());
  const std::size_t n = f.points();
  const double* g = f.grid_data().data();
  for (int i = 0; i < f.rows(); ++i) {
    for (int j = 0; j < f.cols(); ++j) m(i, j) = g[(i * f.cols() + j) * n + p];
  }
  return m;
}

void set_matrix(FourierSeries& f, std::size_t p, const Mat& m) {
  const std::size_t n = f.points();
  double* g = f.grid_data_mut().data();
  for (int i = 0; i < f.rows(); ++i) {
    for (int j = 0; j < f.cols(); ++j) g[(i * f.cols() + j) * n + p] = m(i, j);
  }
}

FourierSeries field_map(const GridShape& g, int rows, int cols,
                        const std::function<Mat(std::size_t)>& fn) {
  FourierSeries out = FourierSeries::from_grid(
      g, rows, cols, std::vector<double>(static_cast<std::size_t>(rows * cols) * g.total()));
  const std::size_t n = g.total();
  double* data = out.grid_data_mut().data();
  parallel_for(n, [&](std::size_t b, std::size_t e) {
    for (std::size_t p = b; p < e; ++p) {
      const Mat m = fn(p);
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) data[(i * cols + j) * n + p] = m(i, j);
      }
    }
  });
  return out;
}

FourierSeries field_multiply(const FourierSeries& a0, const FourierSeries& b0) {
  FourierSeries sa, sb;
  const FourierSeries& a = on_grid(a0, sa);
  const FourierSeries& b = on_grid(b0, sb);
  if (a.cols() != b.rows()) throw ParameterError("field product shape mismatch");
  return field_map(a.shape(), a.rows(), b.cols(),
                   [&](std::size_t p) -> Mat { return matrix_at(a, p) * matrix_at(b, p); });
}

FourierSeries field_add(const FourierSeries& a0, const FourierSeries& b0, double s) {
  FourierSeries sa, sb;
  const FourierSeries& a = on_grid(a0, sa);
  const FourierSeries& b = on_grid(b0, sb);
  if (a.components() != b.components()) throw ParameterError("field sum shape mismatch");
  std::vector<double> v(a.grid_data());
  const auto& w = b.grid_data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += s * w[i];
  return FourierSeries::from_grid(a.shape(), a.rows(), a.cols(), std::move(v));
}

FourierSeries field_scale(const FourierSeries& a0, double s) {
  FourierSeries sa;
  const FourierSeries& a = on_grid(a0, sa);
  std::vector<double> v(a.grid_data());
  for (double& x : v) x *= s;
  return FourierSeries::from_grid(a.shape(), a.rows(), a.cols(), std::move(v));
}

FourierSeries field_transpose(const FourierSeries& a0) {
  FourierSeries sa;
  const FourierSeries& a = on_grid(a0, sa);
  return field_map(a.shape(), a.cols(), a.rows(),
                   [&](std::size_t p) -> Mat { return matrix_at(a, p).transpose(); });
}

FourierSeries field_inverse(const FourierSeries& a0) {
  FourierSeries sa;
  const FourierSeries& a = on_grid(a0, sa);
  if (a.rows() != a.cols()) throw ParameterError("inverse of non-square field");
  return field_map(a.shape(), a.rows(), a.cols(), [&](std::size_t p) -> Mat {
    const Mat m = matrix_at(a, p);
    Eigen::PartialPivLU<Mat> lu(m);
    const Mat inv = lu.inverse();
    if (!inv.allFinite()) throw NumericCorruptionError("singular matrix in pointwise inverse");
    return inv;
  });
}

FourierSeries field_identity(const GridShape& g, int n) {
  std::vector<double> id(n * n, 0.0);
  for (int i = 0; i < n; ++i) id[i * n + i] = 1.0;
  return FourierSeries::constant(g, n, n, id);
}

FourierSeries field_hstack(const FourierSeries& a0, const FourierSeries& b0) {
  FourierSeries sa, sb;
  const FourierSeries& a = on_grid(a0, sa);
  const FourierSeries& b = on_grid(b0, sb);
  if (a.rows() != b.rows()) throw ParameterError("hstack row mismatch");
  return field_map(a.shape(), a.rows(), a.cols() + b.cols(), [&](std::size_t p) -> Mat {
    Mat m(a.rows(), a.cols() + b.cols());
    m << matrix_at(a, p), matrix_at(b, p);
    return m;
  });
}

FourierSeries field_block(const FourierSeries& a0, int r0, int c0, int rows, int cols) {
  FourierSeries sa;
  const FourierSeries& a = on_grid(a0, sa);
  return field_map(a.shape(), rows, cols, [&](std::size_t p) -> Mat {
    return matrix_at(a, p).block(r0, c0, rows, cols);
  });
}

double field_sup_opnorm(const FourierSeries& a0) {
  FourierSeries sa;
  const FourierSeries& a = on_grid(a0, sa);
  double best = 0.0;
  for (std::size_t p = 0; p < a.points(); ++p) {
    const Mat m = matrix_at(a, p);
    const double s = m.rows() == 1 || m.cols() == 1
                         ? m.norm()
                         : Eigen::JacobiSVD<Mat>(m).singularValues()(0);
    best = std::max(best, s);
  }
  return best;
}

Mat pseudo_inverse(const Mat& m, double threshold) {
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  Mat sinv = Mat::Zero(m.cols(), m.rows());
  for (int i = 0; i < s.size(); ++i) {
    if (s(i) > threshold) sinv(i, i) = 1.0 / s(i);
  }
  return svd.matrixV() * sinv * svd.matrixU().transpose();
}

}  // namespace kamtori
