#pragma once

// Small-sigma bias and covariance formulae for the four estimators, the
// large-sample ML covariance (with sigma as a nuisance parameter), the QL
// sandwich and the WLS/DWLS n^{1/2} sigma -> delta limit distributions.

#include <cmath>
#include <span>
#include <string>

#include "propfit/errors.hpp"
#include "propfit/estimators.hpp"
#include "propfit/jacobian.hpp"
#include "propfit/linalg.hpp"
#include "propfit/model.hpp"

namespace propfit {

struct BiasReport {
  Method method = Method::ql;
  Vector bias;  // proportional to sigma_used^2
  double sigma_used = 0.0;
  JacobianBundle bundle;
};

enum class CovarianceOrder { order2, ml_exact, sandwich };

struct CovarianceReport {
  CovarianceOrder order = CovarianceOrder::order2;
  Matrix cov;
};

struct LimitDistribution {
  Method method = Method::wls;
  double delta = 0.0;  // sqrt(n) sigma
  Matrix Sigma;        // (J'J / n)^-1
  Vector Gamma1;       // sum J_i / n
  Vector Gamma2;       // sum w1_i J_i / n
  Vector Gamma3;       // sum w2_i J_i / n
  Vector mean_shift;   // mean of sqrt(n)(theta_hat - theta) / sigma
  bool simplified = false;
};

struct FactorizationCheck {
  bool factorized = false;
  Vector v;                        // (J'J)^-1 sum J_i
  double ml_wls_max_rel_diff = 0;  // over components 2..p, meaningful when factorized
};

// Order-sigma^2 bias (J'J)^-1 v sigma^2 with the method's v.
[[nodiscard]] inline Vector bias_vector(Method method, const JacobianBundle& b, double sigma) {
  const double n = static_cast<double>(b.n());
  const double p = static_cast<double>(b.p());
  const Vector sumJ = b.sum_J();
  const Vector sum_w1J = b.J.transpose() * b.w1;
  const Vector sum_w2J = b.J.transpose() * b.w2;
  Vector v;
  switch (method) {
    case Method::ml: v = -(sum_w1J - (p / n) * sumJ) - 0.5 * sum_w2J; break;
    case Method::ql: v = -0.5 * sum_w2J; break;
    case Method::wls: v = sumJ - sum_w1J - 0.5 * sum_w2J; break;
    case Method::dwls: v = -2.0 * sumJ + 2.0 * sum_w1J - 0.5 * sum_w2J; break;
  }
  return sigma * sigma * (b.JtJ_inv * v);
}

[[nodiscard]] inline BiasReport bias_order2(Method method, const JacobianBundle& b, double sigma) {
  return BiasReport{method, bias_vector(method, b, sigma), sigma, b};
}

[[nodiscard]] inline BiasReport bias_order2(Method method, const ModelFunction& model, const Dataset& data,
                                            const Vector& theta, double sigma) {
  return bias_order2(method, build_jacobian_bundle(model, data, theta), sigma);
}

// sigma^2 (J'J)^-1, common to all four estimators at this order.
[[nodiscard]] inline CovarianceReport cov_order2(const JacobianBundle& b, double sigma) {
  return {CovarianceOrder::order2, sigma * sigma * b.JtJ_inv};
}

[[nodiscard]] inline CovarianceReport cov_order2(const ModelFunction& model, const Dataset& data, const Vector& theta,
                                                 double sigma) {
  return cov_order2(build_jacobian_bundle(model, data, theta), sigma);
}

// sum (J_i - Jbar)(J_i - Jbar)'
[[nodiscard]] inline Matrix centered_scatter(const JacobianBundle& b) {
  const Matrix c = b.J.rowwise() - b.Jbar.transpose();
  return linalg::symmetrize(c.transpose() * c);
}

// Large-sample ML covariance of theta_hat with sigma profiled:
//   sigma^2 [J'J + 2 sigma^2 sum (J_i - Jbar)(J_i - Jbar)']^-1
[[nodiscard]] inline CovarianceReport cov_ml_exact(const JacobianBundle& b, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("ML covariance needs sigma > 0");
  const Matrix m = b.JtJ + 2.0 * sigma * sigma * centered_scatter(b);
  return {CovarianceOrder::ml_exact, sigma * sigma * linalg::spd_inverse(m)};
}

[[nodiscard]] inline CovarianceReport cov_ml_exact(const ModelFunction& model, const Dataset& data,
                                                   const Vector& theta, double sigma) {
  return cov_ml_exact(build_jacobian_bundle(model, data, theta), sigma);
}

// Same matrix before simplification:
//   [(2 + sigma^-2) sum J_i J_i' - 2 n^-1 (sum J_i)(sum J_i)']^-1
[[nodiscard]] inline Matrix cov_ml_unreduced(const JacobianBundle& b, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("ML covariance needs sigma > 0");
  const double n = static_cast<double>(b.n());
  const Vector s = b.sum_J();
  const Matrix m = (2.0 + 1.0 / (sigma * sigma)) * b.JtJ - (2.0 / n) * s * s.transpose();
  return linalg::spd_inverse(m);
}

// Expected negative Hessian of the normal log-likelihood in (theta, sigma),
// assembled from expected second derivatives: E[-d2l/dtheta2] = D'MD with
// D_ij = df_i/dtheta_j and M = diag(2/f_i^2 + 1/(sigma^2 f_i^2)).
[[nodiscard]] inline Matrix ml_expected_information(const JacobianBundle& b, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("information needs sigma > 0");
  const Index p = b.p();
  const double n = static_cast<double>(b.n());
  const Matrix D = b.f.asDiagonal() * b.J;
  Vector m(b.n());
  for (Index i = 0; i < b.n(); ++i) m(i) = (2.0 + 1.0 / (sigma * sigma)) / (b.f(i) * b.f(i));
  Matrix info(p + 1, p + 1);
  info.topLeftCorner(p, p) = D.transpose() * m.asDiagonal() * D;
  const Vector cross = (2.0 / sigma) * b.sum_J();
  info.topRightCorner(p, 1) = cross;
  info.bottomLeftCorner(1, p) = cross.transpose();
  info(p, p) = 2.0 * n / (sigma * sigma);
  return linalg::symmetrize(info);
}

// Variance of the score (dl/dtheta, dl/dsigma) from the moments of the
// relative error e = (Y - f)/f: E e = 0, E e^2 = sigma^2, E e^3 = m3,
// E e^4 = m4. Normal errors: m3 = 0, m4 = 3 sigma^4.
[[nodiscard]] inline Matrix ml_score_variance(const JacobianBundle& b, double sigma, double m3, double m4) {
  const Index p = b.p();
  const double n = static_cast<double>(b.n());
  const double s2 = sigma * sigma;
  const double var_e2 = m4 - s2 * s2;
  const Matrix S = b.JtJ;
  const Vector sumJ = b.sum_J();
  Matrix v(p + 1, p + 1);
  v.topLeftCorner(p, p) = (1.0 / s2) * S + (var_e2 / (s2 * s2)) * S + (2.0 * m3 / (s2 * s2)) * S;
  const Vector cross = (m3 / std::pow(sigma, 5)) * sumJ + (m4 / std::pow(sigma, 5)) * sumJ - (1.0 / sigma) * sumJ;
  v.topRightCorner(p, 1) = cross;
  v.bottomLeftCorner(1, p) = cross.transpose();
  v(p, p) = n * var_e2 / std::pow(sigma, 6);
  return linalg::symmetrize(v);
}

[[nodiscard]] inline Matrix ml_score_variance_normal(const JacobianBundle& b, double sigma) {
  return ml_score_variance(b, sigma, 0.0, 3.0 * std::pow(sigma, 4));
}

// (p+1) x (p+1) covariance of (theta_hat, sigma_hat): inverse information.
[[nodiscard]] inline Matrix cov_ml_full(const JacobianBundle& b, double sigma) {
  return linalg::spd_inverse(ml_expected_information(b, sigma));
}

[[nodiscard]] inline Matrix cov_ml_full(const ModelFunction& model, const Dataset& data, const Vector& theta,
                                        double sigma) {
  return cov_ml_full(build_jacobian_bundle(model, data, theta), sigma);
}

// (J'J)^-1 [sum Var(Y_i)/f_i^2 J_i J_i'] (J'J)^-1
[[nodiscard]] inline CovarianceReport cov_ql_sandwich(const JacobianBundle& b, std::span<const double> var_y) {
  if (static_cast<Index>(var_y.size()) != b.n()) throw DataError("var_y must have one entry per observation");
  Vector w(b.n());
  for (Index i = 0; i < b.n(); ++i) {
    const double v = var_y[static_cast<std::size_t>(i)];
    if (!(v >= 0.0)) throw DataError("variances must be non-negative");
    w(i) = v / (b.f(i) * b.f(i));
  }
  const Matrix meat = b.J.transpose() * w.asDiagonal() * b.J;
  return {CovarianceOrder::sandwich, linalg::symmetrize(b.JtJ_inv * meat * b.JtJ_inv)};
}

[[nodiscard]] inline CovarianceReport cov_ql_sandwich(const ModelFunction& model, const Dataset& data,
                                                      const Vector& theta, std::span<const double> var_y) {
  return cov_ql_sandwich(build_jacobian_bundle(model, data, theta), var_y);
}

[[nodiscard]] inline LimitDistribution limit_distribution(Method method, const JacobianBundle& b, double sigma,
                                                          bool simplified = false) {
  if (method != Method::wls && method != Method::dwls) {
    throw ModeError("limit distributions with a mean shift are defined for WLS and DWLS");
  }
  const double n = static_cast<double>(b.n());
  LimitDistribution d;
  d.method = method;
  d.simplified = simplified;
  d.delta = std::sqrt(n) * sigma;
  d.Sigma = n * b.JtJ_inv;
  d.Gamma1 = b.sum_J() / n;
  if (simplified) {
    d.Gamma2 = Vector::Zero(b.p());
    d.Gamma3 = Vector::Zero(b.p());
  } else {
    d.Gamma2 = b.J.transpose() * b.w1 / n;
    d.Gamma3 = b.J.transpose() * b.w2 / n;
  }
  const Vector comb = method == Method::wls ? Vector(d.Gamma1 - d.Gamma2 - 0.5 * d.Gamma3)
                                            : Vector(-2.0 * d.Gamma1 + 2.0 * d.Gamma2 - 0.5 * d.Gamma3);
  d.mean_shift = d.delta * d.Sigma * comb;
  return d;
}

[[nodiscard]] inline LimitDistribution limit_distribution(Method method, const ModelFunction& model,
                                                          const Dataset& data, const Vector& theta, double sigma,
                                                          bool simplified = false) {
  return limit_distribution(method, build_jacobian_bundle(model, data, theta), sigma, simplified);
}

// For f = theta1 f*(theta2..p), (J'J)^-1 sum J_i = [theta1, 0, ..., 0]' and
// the ML and WLS biases differ only in the first component.
[[nodiscard]] inline FactorizationCheck check_theta1_factorization(const JacobianBundle& b, const Vector& theta,
                                                                   double tol = 1e-8) {
  FactorizationCheck c;
  c.v = b.JtJ_inv * b.sum_J();
  const double t1 = std::abs(theta(0));
  bool ok = std::abs(c.v(0) - theta(0)) <= tol * t1;
  for (Index j = 1; j < c.v.size(); ++j) ok = ok && std::abs(c.v(j)) <= tol * t1;
  c.factorized = ok && t1 > 0.0;
  if (c.factorized) {
    const Vector ml = bias_vector(Method::ml, b, 1.0);
    const Vector wls = bias_vector(Method::wls, b, 1.0);
    for (Index j = 1; j < ml.size(); ++j) {
      const double denom = std::max({std::abs(ml(j)), std::abs(wls(j)), 1e-300});
      c.ml_wls_max_rel_diff = std::max(c.ml_wls_max_rel_diff, std::abs(ml(j) - wls(j)) / denom);
    }
  }
  return c;
}

[[nodiscard]] inline FactorizationCheck check_theta1_factorization(const ModelFunction& model, const Dataset& data,
                                                                   const Vector& theta, double tol = 1e-8) {
  return check_theta1_factorization(build_jacobian_bundle(model, data, theta), theta, tol);
}

}  // namespace propfit
