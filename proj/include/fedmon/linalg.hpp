#pragma once

#include <Eigen/Dense>

namespace fedmon {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
// One row per unit.
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Cholesky factor of a symmetric positive definite matrix plus its log-determinant.
class SpdFactor {
 public:
  SpdFactor() = default;
  // Throws NumericalError when the matrix is not numerically positive definite.
  explicit SpdFactor(const Matrix& a);

  Vector solve(const Vector& rhs) const { return llt_.solve(rhs); }
  // rhsᵀ A⁻¹ rhs
  double inverse_quadratic(const Vector& rhs) const;
  double log_det() const { return log_det_; }
  Eigen::Index size() const { return llt_.rows(); }

 private:
  Eigen::LLT<Matrix> llt_;
  double log_det_ = 0.0;
};

// a ⊗ b for vectors.
Vector kron(const Vector& a, const Vector& b);
// A ⊗ B.
Matrix kron(const Matrix& a, const Matrix& b);

// Column-stacked vec(Q) and its inverse.
Vector vec(const Matrix& q);
Matrix unvec(const Vector& q, Eigen::Index rows, Eigen::Index cols);

double log_det_spd(const Matrix& a);
double min_eigenvalue(const Matrix& symmetric);

}  // namespace fedmon
