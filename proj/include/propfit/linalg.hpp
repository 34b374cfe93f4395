#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "propfit/errors.hpp"

namespace propfit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

namespace linalg {

inline constexpr double kSingularRcond = 1e-12;

inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

inline bool all_finite(const Matrix& a) { return a.allFinite(); }

// Jacobi equilibration D A D with D = diag(A)^{-1/2}. Parameters in this
// library span many orders of magnitude (alpha1 ~ 1e5 next to alpha2 ~ 1e2),
// so conditioning is judged on the equilibrated matrix.
inline Vector equilibration(const Matrix& a) {
  Vector d(a.rows());
  for (Index i = 0; i < a.rows(); ++i) {
    const double aii = a(i, i);
    if (!(aii > 0.0) || !std::isfinite(aii)) {
      throw SingularError("matrix has a non-positive diagonal entry at index " + std::to_string(i));
    }
    d(i) = 1.0 / std::sqrt(aii);
  }
  return d;
}

// Reciprocal 2-norm condition number of a symmetric positive semi-definite
// matrix after equilibration.
inline double spd_rcond(const Matrix& a) {
  const Vector d = equilibration(a);
  const Matrix s = d.asDiagonal() * symmetrize(a) * d.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  const Vector ev = es.eigenvalues();
  const double hi = ev.maxCoeff();
  if (!(hi > 0.0)) return 0.0;
  return std::max(0.0, ev.minCoeff()) / hi;
}

// Inverse of a symmetric positive definite matrix; throws SingularError when
// the equilibrated reciprocal condition drops below `rcond_floor`.
inline Matrix spd_inverse(const Matrix& a, double rcond_floor = kSingularRcond) {
  if (!all_finite(a)) throw NonFiniteError("matrix to invert has non-finite entries");
  const Vector d = equilibration(a);
  const Matrix s = symmetrize(d.asDiagonal() * a * d.asDiagonal());
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  const Vector ev = es.eigenvalues();
  const double hi = ev.maxCoeff();
  if (!(hi > 0.0) || ev.minCoeff() / hi < rcond_floor) {
    throw SingularError("matrix is numerically singular (reciprocal condition below threshold)");
  }
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success) throw SingularError("Cholesky factorisation failed");
  const Matrix s_inv = llt.solve(Matrix::Identity(a.rows(), a.cols()));
  return symmetrize(d.asDiagonal() * s_inv * d.asDiagonal());
}

// Inverse of a symmetric (possibly indefinite) non-singular matrix.
inline Matrix symmetric_inverse(const Matrix& a) {
  if (!all_finite(a)) throw NonFiniteError("matrix to invert has non-finite entries");
  Vector d(a.rows());
  for (Index i = 0; i < a.rows(); ++i) {
    const double aii = std::abs(a(i, i));
    d(i) = aii > 0.0 ? 1.0 / std::sqrt(aii) : 1.0;
  }
  const Matrix s = symmetrize(d.asDiagonal() * a * d.asDiagonal());
  Eigen::FullPivLU<Matrix> lu(s);
  if (!lu.isInvertible() || lu.rcond() < kSingularRcond) {
    throw SingularError("symmetric matrix is numerically singular");
  }
  return symmetrize(d.asDiagonal() * lu.inverse() * d.asDiagonal());
}

inline double min_eigenvalue(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// PSD up to the numerical floor -tol * trace (trace of |A| if A has mixed signs).
inline bool is_psd(const Matrix& a, double tol = 1e-10) {
  if (a.rows() == 0) return true;
  const double scale = std::max(std::abs(a.trace()), a.cwiseAbs().maxCoeff());
  return min_eigenvalue(a) >= -tol * scale;
}

inline double max_abs(const Matrix& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

// ||a - b||_F / max(||a||_F, ||b||_F), zero when both vanish.
inline double relative_difference(const Matrix& a, const Matrix& b) {
  const double denom = std::max(a.norm(), b.norm());
  if (denom == 0.0) return 0.0;
  return (a - b).norm() / denom;
}

}  // namespace linalg
}  // namespace propfit
