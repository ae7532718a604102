#pragma once

#include <Eigen/Dense>

#include "tnsketch/tensor.hpp"

namespace tnsketch {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Matrix to_matrix(const Tensor& t) {
  require(t.order() == 2, "matrix view needs a 2-mode tensor");
  return Eigen::Map<const Matrix>(t.data().data(), t.dims()[0], t.dims()[1]);
}

inline Tensor from_matrix(const Matrix& m) {
  std::vector<double> data(m.data(), m.data() + m.size());
  return Tensor({m.rows(), m.cols()}, std::move(data));
}

// Moore-Penrose pseudo-inverse with singular values below
// rel_cutoff * sigma_max treated as zero.
inline Matrix pinv(const Matrix& m, double rel_cutoff = 1e-10) {
  if (m.size() == 0) return Matrix(m.cols(), m.rows());
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  double cut = sv.size() > 0 ? sv(0) * rel_cutoff : 0.0;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cut && sv(i) > 0.0) inv(i) = 1.0 / sv(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

// Orthonormal basis of the column span, truncating singular values below
// rel_cutoff * sigma_max. A numerically zero input yields a single unit
// column so downstream shapes stay valid.
inline Matrix orthonormal_cols(const Matrix& m, double rel_cutoff = 1e-10) {
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  double cut = sv.size() > 0 ? sv(0) * rel_cutoff : 0.0;
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cut && sv(i) > 0.0) ++rank;
  if (rank == 0) {
    Matrix e = Matrix::Zero(m.rows(), 1);
    e(0, 0) = 1.0;
    return e;
  }
  return svd.matrixU().leftCols(rank);
}

}  // namespace tnsketch
