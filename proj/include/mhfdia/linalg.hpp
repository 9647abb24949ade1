#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "mhfdia/error.hpp"

namespace mhfdia {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace linalg {

inline double spectral_radius(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> solver(a, /*computeEigenvectors=*/false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

inline double condition_number(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  const double smallest = s(s.size() - 1);
  if (smallest <= 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / smallest;
}

// Flips each column so that its largest-magnitude entry is positive. The same
// flip is applied to the matching column of `partner` when one is given, which
// keeps U * S * V^T unchanged.
inline void fix_column_signs(Matrix& columns, Matrix* partner = nullptr) {
  for (Index j = 0; j < columns.cols(); ++j) {
    Index arg = 0;
    columns.col(j).cwiseAbs().maxCoeff(&arg);
    if (columns(arg, j) < 0.0) {
      columns.col(j) *= -1.0;
      if (partner != nullptr && j < partner->cols()) partner->col(j) *= -1.0;
    }
  }
}

// Rank with a relative tolerance on the singular values.
inline Index numerical_rank(const Vector& singular_values, double rows, double cols) {
  if (singular_values.size() == 0) return 0;
  const double tol =
      std::max(rows, cols) * std::numeric_limits<double>::epsilon() * singular_values(0);
  Index r = 0;
  for (Index i = 0; i < singular_values.size(); ++i)
    if (singular_values(i) > tol) ++r;
  return r;
}

inline Matrix pseudo_inverse(const Matrix& a) {
  if (a.size() == 0) return Matrix::Zero(a.cols(), a.rows());
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const Index r = numerical_rank(s, a.rows(), a.cols());
  Matrix out = Matrix::Zero(a.cols(), a.rows());
  for (Index i = 0; i < r; ++i)
    out += svd.matrixV().col(i) * (svd.matrixU().col(i).transpose() / s(i));
  return out;
}

// Orthonormal basis of ker(a).
inline Matrix null_space(const Matrix& a) {
  if (a.rows() == 0) return Matrix::Identity(a.cols(), a.cols());
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullV);
  const Index r = numerical_rank(svd.singularValues(), a.rows(), a.cols());
  return svd.matrixV().rightCols(a.cols() - r);
}

// Orthonormal basis of the orthogonal complement of range(a) in R^{rows}.
inline Matrix range_complement(const Matrix& a) {
  const Index rows = a.rows();
  if (a.cols() == 0 || rows == 0) return Matrix::Identity(rows, rows);
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullU);
  const Index r = numerical_rank(svd.singularValues(), a.rows(), a.cols());
  return svd.matrixU().rightCols(rows - r);
}

// Symmetric square root of a symmetric PSD matrix; negative eigenvalues are
// clipped to zero.
inline Matrix symmetric_sqrt(const Matrix& p) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (p + p.transpose()));
  Vector d = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose();
}

inline Matrix select_rows(const Matrix& a, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = a.row(rows[i]);
  return out;
}

inline Vector select_rows(const Vector& a, std::span<const Index> rows) {
  Vector out(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Index>(i)) = a(rows[i]);
  return out;
}

inline bool all_finite(const Matrix& a) { return a.allFinite(); }

}  // namespace linalg
}  // namespace mhfdia
