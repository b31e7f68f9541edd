#include "fedmon/linalg.hpp"

#include <cmath>

#include "fedmon/errors.hpp"

namespace fedmon {

SpdFactor::SpdFactor(const Matrix& a) : llt_(a) {
  if (llt_.info() != Eigen::Success) {
    throw NumericalError("matrix is not positive definite");
  }
  const auto& l = llt_.matrixLLT();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    const double diag = l(i, i);
    if (!(diag > 0.0) || !std::isfinite(diag)) {
      throw NumericalError("matrix is not positive definite");
    }
    sum += std::log(diag);
  }
  log_det_ = 2.0 * sum;
}

double SpdFactor::inverse_quadratic(const Vector& rhs) const {
  return llt_.matrixL().solve(rhs).squaredNorm();
}

Vector kron(const Vector& a, const Vector& b) {
  Vector out(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    out.segment(i * b.size(), b.size()) = a(i) * b;
  }
  return out;
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

Vector vec(const Matrix& q) { return Eigen::Map<const Vector>(q.data(), q.size()); }

Matrix unvec(const Vector& q, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Matrix>(q.data(), rows, cols);
}

double log_det_spd(const Matrix& a) { return SpdFactor(a).log_det(); }

double min_eigenvalue(const Matrix& symmetric) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetric, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

}  // namespace fedmon
