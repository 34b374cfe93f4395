#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "propfit/errors.hpp"
#include "propfit/linalg.hpp"
#include "propfit/model.hpp"

namespace propfit {

// Relative gradient rows J_i = grad f_i / f_i and the leverage/curvature
// summaries every bias and covariance formula is written in.
struct JacobianBundle {
  Matrix J;        // n x p
  Matrix JtJ;      // p x p
  Matrix JtJ_inv;  // p x p
  Vector Jbar;     // column means of J
  Vector w1;       // leverages, diagonal of J (J'J)^-1 J'
  Vector w2;       // tr(K_i (J'J)^-1), K_i = H_i / f_i
  Vector f;        // f(x_i, theta)
  double rcond = 0.0;
  std::vector<std::string> warnings;

  [[nodiscard]] Index n() const { return J.rows(); }
  [[nodiscard]] Index p() const { return J.cols(); }
  [[nodiscard]] Vector sum_J() const { return J.colwise().sum().transpose(); }
};

// Design for a bundle: one block of rows per curve, each curve owning a
// contiguous slice of the joint parameter vector.
struct CurveDesign {
  const ModelFunction* model = nullptr;
  std::span<const double> xs;
};

namespace detail {

inline constexpr double kFdHessianNoiseWarn = 1e-6;

inline JacobianBundle finish_bundle(Matrix J, std::vector<Matrix> K, Vector f, std::vector<std::string> warnings) {
  const Index n = J.rows();
  const Index p = J.cols();
  if (n <= p) throw DataError("need more observations than parameters (n=" + std::to_string(n) + ", p=" + std::to_string(p) + ")");

  JacobianBundle b;
  b.JtJ = linalg::symmetrize(J.transpose() * J);

  // Column-equilibrated QR: leverages come from the orthonormal factor so the
  // hat-trace identity holds to rounding, and (J'J)^-1 avoids squaring the
  // condition number.
  Vector colnorm = J.colwise().norm().transpose();
  for (Index j = 0; j < p; ++j) {
    if (!(colnorm(j) > 0.0)) throw SingularError("column " + std::to_string(j) + " of J is identically zero");
  }
  const Vector d = colnorm.cwiseInverse();
  const Matrix Js = J * d.asDiagonal();
  Eigen::HouseholderQR<Matrix> qr(Js);
  const Matrix R = qr.matrixQR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  Eigen::JacobiSVD<Matrix> svd(R);
  const Vector sv = svd.singularValues();
  const double smax = sv.maxCoeff();
  b.rcond = smax > 0.0 ? (sv.minCoeff() / smax) * (sv.minCoeff() / smax) : 0.0;
  if (!(b.rcond >= linalg::kSingularRcond)) {
    throw SingularError("J'J is numerically singular (reciprocal condition " + std::to_string(b.rcond) + ")");
  }
  const Matrix Rinv = R.triangularView<Eigen::Upper>().solve(Matrix::Identity(p, p));
  b.JtJ_inv = linalg::symmetrize(d.asDiagonal() * (Rinv * Rinv.transpose()) * d.asDiagonal());

  const Matrix Q = qr.householderQ() * Matrix::Identity(n, p);
  b.w1 = Q.rowwise().squaredNorm().transpose();
  b.w2.resize(n);
  for (Index i = 0; i < n; ++i) b.w2(i) = (K[static_cast<std::size_t>(i)] * b.JtJ_inv).trace();
  b.Jbar = J.colwise().mean().transpose();
  b.J = std::move(J);
  b.f = std::move(f);
  b.warnings = std::move(warnings);
  return b;
}

}  // namespace detail

// Joint bundle over several curves. Row i of curve k is J_i placed in the
// columns of curve k's parameter slice, zeros elsewhere.
[[nodiscard]] inline JacobianBundle build_jacobian_bundle(std::span<const CurveDesign> curves, const Vector& theta) {
  Index n = 0;
  Index p = 0;
  for (const auto& c : curves) {
    n += static_cast<Index>(c.xs.size());
    p += c.model->p();
  }
  if (theta.size() != p) throw DomainError("joint parameter vector has the wrong length");

  Matrix J = Matrix::Zero(n, p);
  Vector f(n);
  std::vector<Matrix> K;
  K.reserve(static_cast<std::size_t>(n));
  std::vector<std::string> warnings;
  Index row = 0;
  Index off = 0;
  for (const auto& c : curves) {
    const Index pk = c.model->p();
    const Vector th = theta.segment(off, pk);
    double worst_noise = 0.0;
    for (double x : c.xs) {
      const double fi = c.model->value(x, th);
      if (fi == 0.0) throw ZeroMeanError("f(x, theta) = 0 at x = " + std::to_string(x));
      J.block(row, off, 1, pk) = (c.model->gradient(x, th) / fi).transpose();
      Matrix Ki = Matrix::Zero(p, p);
      Ki.block(off, off, pk, pk) = c.model->hessian(x, th) / fi;
      if (!c.model->has_analytic_hessian()) worst_noise = std::max(worst_noise, c.model->hessian_fd_noise(x, th));
      K.push_back(std::move(Ki));
      f(row) = fi;
      ++row;
    }
    if (worst_noise > detail::kFdHessianNoiseWarn) {
      warnings.push_back("finite-difference Hessian of '" + c.model->name() + "' has relative noise " +
                         std::to_string(worst_noise) + "; curvature weights w2 may be inaccurate");
    }
    off += pk;
  }
  return detail::finish_bundle(std::move(J), std::move(K), std::move(f), std::move(warnings));
}

[[nodiscard]] inline JacobianBundle build_jacobian_bundle(const ModelFunction& model, std::span<const double> xs,
                                                          const Vector& theta) {
  model.check_theta(theta);
  const CurveDesign c{&model, xs};
  return build_jacobian_bundle(std::span<const CurveDesign>(&c, 1), theta);
}

[[nodiscard]] inline JacobianBundle build_jacobian_bundle(const ModelFunction& model, const Dataset& data,
                                                          const Vector& theta) {
  const std::vector<double> xs = data.xs();
  return build_jacobian_bundle(model, std::span<const double>(xs), theta);
}

}  // namespace propfit
