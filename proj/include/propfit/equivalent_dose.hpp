#pragma once

// Partial-bleach equivalent dose: two saturating exponentials, unbleached
// f1(x; alpha) and bleached f2(x; beta), intersect at a negative dose gamma.
// The equivalent dose is |gamma|.

#include <boost/math/tools/toms748_solve.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "propfit/asymptotics.hpp"
#include "propfit/errors.hpp"
#include "propfit/estimators.hpp"
#include "propfit/jacobian.hpp"
#include "propfit/model.hpp"

namespace propfit {

struct PartialBleachModel {
  ModelFunction unbleached = models::saturating_exponential();
  ModelFunction bleached = models::saturating_exponential();

  [[nodiscard]] Index p1() const { return unbleached.p(); }
  [[nodiscard]] Index p() const { return unbleached.p() + bleached.p(); }
  [[nodiscard]] Vector alpha(const Vector& theta) const { return theta.head(p1()); }
  [[nodiscard]] Vector beta(const Vector& theta) const { return theta.tail(bleached.p()); }

  void check_theta(const Vector& theta) const {
    if (theta.size() != p()) throw DomainError("partial-bleach parameter vector must have " + std::to_string(p()) + " entries");
  }

  // g(x) = f1(x; alpha) - f2(x; beta)
  [[nodiscard]] double g(double x, const Vector& theta) const {
    return unbleached.value(x, alpha(theta)) - bleached.value(x, beta(theta));
  }

  [[nodiscard]] double dgdx(double x, const Vector& theta) const {
    return unbleached.dfdx(x, alpha(theta)) - bleached.dfdx(x, beta(theta));
  }

  [[nodiscard]] std::vector<std::string> param_names() const {
    std::vector<std::string> out;
    for (const auto& n : unbleached.param_names()) out.push_back(n);
    // bleached curve parameters are conventionally beta1..beta3
    for (std::size_t j = 0; j < static_cast<std::size_t>(bleached.p()); ++j) out.push_back("beta" + std::to_string(j + 1));
    return out;
  }
};

// Reference parameters of a partial-bleach dating sample.
struct PartialBleachReference {
  double alpha1 = 142853.0;
  double alpha2 = 123.182;
  double alpha3 = 393.065;
  double beta2 = 192.547;
  double beta3 = 756.620;
  double gamma = -87.45;
};

// beta1 making the bleached curve pass through f1(gamma), so that the two
// curves intersect at gamma:
//   beta1 = alpha1 (1 - e^{-(gamma+alpha2)/alpha3}) / (1 - e^{-(gamma+beta2)/beta3})
[[nodiscard]] inline double beta1_from_gamma(const Vector& alpha, double beta2, double beta3, double gamma) {
  if (alpha.size() != 3) throw DomainError("alpha must have three entries");
  if (alpha(2) == 0.0 || beta3 == 0.0) throw DomainError("zero scale parameter");
  const double den = -std::expm1(-(gamma + beta2) / beta3);
  if (den == 0.0) throw DomainError("beta1 is undefined when gamma = -beta2");
  const double num = -alpha(0) * std::expm1(-(gamma + alpha(1)) / alpha(2));
  return num / den;
}

// Joint (alpha1..3, beta1..3) from the reference values.
[[nodiscard]] inline Vector reference_theta(const PartialBleachReference& r = {}) {
  Vector alpha(3);
  alpha << r.alpha1, r.alpha2, r.alpha3;
  Vector theta(6);
  theta << alpha, beta1_from_gamma(alpha, r.beta2, r.beta3, r.gamma), r.beta2, r.beta3;
  return theta;
}

struct RootOptions {
  int grid_points = 256;
  double rel_tol = 1e-8;  // absolute root tolerance = rel_tol * (hi - lo)
};

struct GammaRoot {
  double gamma = 0.0;
  double residual = 0.0;  // g(gamma)
  double lo = 0.0;
  double hi = 0.0;
  bool multiple_roots = false;
  bool degenerate = false;  // g vanishes on the whole scan grid
  std::vector<std::string> warnings;
};

// Default scan interval: the negative-dose side where both curves are
// positive, [-min(alpha2, beta2) + eps, 0].
[[nodiscard]] inline std::pair<double, double> default_gamma_bracket(const PartialBleachModel& model,
                                                                     const Vector& theta) {
  model.check_theta(theta);
  const double m = std::min(theta(1), theta(model.p1() + 1));
  const double lo = -m + 1e-9 * std::max(1.0, std::abs(m));
  if (!(lo < 0.0)) throw NoBracketError("default bracket is empty (offset parameters are not positive)");
  return {lo, 0.0};
}

// Root of g on [lo, hi]: a grid scan locates sign changes, then a bracketing
// TOMS 748 iteration refines the chosen cell. With several roots the one
// closest to zero is returned and flagged.
[[nodiscard]] inline GammaRoot solve_gamma(const PartialBleachModel& model, const Vector& theta,
                                           std::optional<std::pair<double, double>> bracket = std::nullopt,
                                           const RootOptions& opts = {}) {
  model.check_theta(theta);
  const auto [lo, hi] = bracket ? *bracket : default_gamma_bracket(model, theta);
  if (!(lo < hi)) throw NoBracketError("bracket must satisfy lo < hi");
  const int npts = std::max(opts.grid_points, 2);

  std::vector<double> xs(static_cast<std::size_t>(npts));
  std::vector<double> gs(static_cast<std::size_t>(npts));
  for (int k = 0; k < npts; ++k) {
    const double x = k + 1 == npts ? hi : lo + (hi - lo) * static_cast<double>(k) / (npts - 1);
    xs[static_cast<std::size_t>(k)] = x;
    gs[static_cast<std::size_t>(k)] = model.g(x, theta);
  }

  struct Candidate {
    double a;
    double b;  // a == b for an exact grid zero
  };
  std::vector<Candidate> cands;
  bool all_zero = true;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (gs[k] != 0.0) all_zero = false;
    if (gs[k] == 0.0) {
      cands.push_back({xs[k], xs[k]});
    } else if (k + 1 < xs.size() && gs[k + 1] != 0.0 && (gs[k] < 0.0) != (gs[k + 1] < 0.0)) {
      cands.push_back({xs[k], xs[k + 1]});
    }
  }
  if (cands.empty()) throw NoBracketError("g(x) = f1 - f2 does not change sign on the scan interval");

  GammaRoot out;
  if (cands.size() > 1) {
    out.multiple_roots = true;
    out.warnings.push_back("multiple intersections found (" + std::to_string(cands.size()) +
                           "); returning the one closest to zero");
  }
  if (all_zero) {
    out.degenerate = true;
    out.warnings.push_back("curves coincide on the scan interval; the intersection is not identified");
  }
  const Candidate* best = &cands.front();
  for (const auto& c : cands) {
    if (std::abs(0.5 * (c.a + c.b)) < std::abs(0.5 * (best->a + best->b))) best = &c;
  }

  if (best->a == best->b) {
    out.gamma = best->a;
    out.lo = out.hi = best->a;
  } else {
    const double tol = opts.rel_tol * (hi - lo);
    std::uintmax_t max_iter = 200;
    auto fn = [&](double x) { return model.g(x, theta); };
    auto stop = [tol](double a, double b) { return std::abs(b - a) <= tol; };
    const auto r = boost::math::tools::toms748_solve(fn, best->a, best->b, stop, max_iter);
    out.lo = r.first;
    out.hi = r.second;
    const double ga = fn(r.first);
    const double gb = fn(r.second);
    out.gamma = std::abs(ga) <= std::abs(gb) ? r.first : r.second;
  }
  out.residual = model.g(out.gamma, theta);
  return out;
}

// d gamma / d theta = -grad_theta g / (dg/dx) by the implicit function theorem.
[[nodiscard]] inline Vector gamma_gradient(const PartialBleachModel& model, const Vector& theta, double gamma) {
  model.check_theta(theta);
  const double d1 = model.unbleached.dfdx(gamma, model.alpha(theta));
  const double d2 = model.bleached.dfdx(gamma, model.beta(theta));
  const double dg = d1 - d2;
  const double scale = std::max(std::abs(d1), std::abs(d2));
  if (!(scale > 0.0) || std::abs(dg) < 1e-12 * scale) {
    throw TangencyError("curves meet tangentially at gamma; the intersection is not locally identified");
  }
  Vector grad(model.p());
  grad.head(model.p1()) = model.unbleached.gradient(gamma, model.alpha(theta));
  grad.tail(model.bleached.p()) = -model.bleached.gradient(gamma, model.beta(theta));
  return -grad / dg;
}

// Second derivatives of gamma(theta), differentiating g(gamma(theta), theta) = 0
// twice. Cross terms in x come from central differences of the analytic
// theta-gradient and of dg/dx.
[[nodiscard]] inline Matrix gamma_hessian(const PartialBleachModel& model, const Vector& theta, double gamma) {
  const Vector gg = gamma_gradient(model, theta, gamma);
  const Vector a = model.alpha(theta);
  const Vector b = model.beta(theta);
  const Index p1 = model.p1();
  const Index p2 = model.bleached.p();
  auto grad_theta_g = [&](double x) {
    Vector v(model.p());
    v.head(p1) = model.unbleached.gradient(x, a);
    v.tail(p2) = -model.bleached.gradient(x, b);
    return v;
  };
  const double h = fd::gradient_step(gamma);
  const Vector g_tx = (grad_theta_g(gamma + h) - grad_theta_g(gamma - h)) / (2.0 * h);
  const double g_xx = (model.dgdx(gamma + h, theta) - model.dgdx(gamma - h, theta)) / (2.0 * h);
  Matrix g_tt = Matrix::Zero(model.p(), model.p());
  g_tt.topLeftCorner(p1, p1) = model.unbleached.hessian(gamma, a);
  g_tt.bottomRightCorner(p2, p2) = -model.bleached.hessian(gamma, b);
  const double g_x = model.dgdx(gamma, theta);
  const Matrix m = g_tt + g_tx * gg.transpose() + gg * g_tx.transpose() + g_xx * gg * gg.transpose();
  return linalg::symmetrize(-m / g_x);
}

// Methods' default treatment of sigma in two-curve fits.
[[nodiscard]] inline FitMode default_fit_mode(Method m) {
  return m == Method::ml ? FitMode::common_sigma : FitMode::separate;
}

struct JointAsymptotics {
  Vector bias;
  Matrix cov;
};

// Order-sigma^2 bias and covariance of the joint 6-vector. Separate fits give
// block-diagonal results (independent data sets, per-curve sigma); the
// common-sigma ML fit uses the stacked J matrix of both curves.
[[nodiscard]] inline JointAsymptotics joint_bias_cov(const PartialBleachModel& model, std::span<const double> xs1,
                                                     std::span<const double> xs2, const Vector& theta,
                                                     std::array<double, 2> sigmas, Method method, FitMode mode) {
  model.check_theta(theta);
  JointAsymptotics out;
  const Index p1 = model.p1();
  const Index p2 = model.bleached.p();
  if (mode == FitMode::common_sigma) {
    if (method != Method::ml) throw ModeError("common-sigma asymptotics apply to ML only");
    const std::array<CurveDesign, 2> curves{CurveDesign{&model.unbleached, xs1}, CurveDesign{&model.bleached, xs2}};
    const JacobianBundle b = build_jacobian_bundle(std::span<const CurveDesign>(curves), theta);
    out.bias = bias_vector(Method::ml, b, sigmas[0]);
    out.cov = cov_ml_exact(b, sigmas[0]).cov;
    return out;
  }
  const JacobianBundle b1 = build_jacobian_bundle(model.unbleached, xs1, model.alpha(theta));
  const JacobianBundle b2 = build_jacobian_bundle(model.bleached, xs2, model.beta(theta));
  out.bias.resize(model.p());
  out.bias.head(p1) = bias_vector(method, b1, sigmas[0]);
  out.bias.tail(p2) = bias_vector(method, b2, sigmas[1]);
  out.cov = Matrix::Zero(model.p(), model.p());
  if (method == Method::ml) {
    out.cov.topLeftCorner(p1, p1) = cov_ml_exact(b1, sigmas[0]).cov;
    out.cov.bottomRightCorner(p2, p2) = cov_ml_exact(b2, sigmas[1]).cov;
  } else {
    out.cov.topLeftCorner(p1, p1) = cov_order2(b1, sigmas[0]).cov;
    out.cov.bottomRightCorner(p2, p2) = cov_order2(b2, sigmas[1]).cov;
  }
  return out;
}

struct DoseEstimate {
  double gamma_hat = 0.0;
  double bias = 0.0;            // of the signed gamma: bias_linear + bias_curvature
  double bias_linear = 0.0;     // grad' bias_theta
  double bias_curvature = 0.0;  // tr(Hess gamma * Cov(theta_hat)) / 2
  double se = 0.0;
  Method method = Method::ml;
  FitMode mode = FitMode::separate;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::string> warnings;

  [[nodiscard]] double equivalent_dose() const { return std::abs(gamma_hat); }
  [[nodiscard]] double equivalent_dose_bias() const { return gamma_hat < 0.0 ? -bias : bias; }
};

// Order-sigma^2 bias of gamma(theta_hat): both the propagated parameter bias
// and the curvature of gamma contribute at this order.
//   bias = grad' bias_theta + tr(H Cov) / 2,  se = sqrt(grad' Cov grad).
[[nodiscard]] inline DoseEstimate gamma_bias_se(const PartialBleachModel& model, std::span<const double> xs1,
                                                std::span<const double> xs2, const Vector& theta,
                                                std::array<double, 2> sigmas, Method method, FitMode mode,
                                                std::optional<std::pair<double, double>> bracket = std::nullopt) {
  const GammaRoot root = solve_gamma(model, theta, bracket);
  const Vector grad = gamma_gradient(model, theta, root.gamma);
  const Matrix hess = gamma_hessian(model, theta, root.gamma);
  const JointAsymptotics ja = joint_bias_cov(model, xs1, xs2, theta, sigmas, method, mode);
  DoseEstimate d;
  d.gamma_hat = root.gamma;
  d.bias_linear = grad.dot(ja.bias);
  d.bias_curvature = 0.5 * hess.cwiseProduct(ja.cov).sum();
  d.bias = d.bias_linear + d.bias_curvature;
  d.se = std::sqrt(std::max(0.0, grad.dot(ja.cov * grad)));
  d.method = method;
  d.mode = mode;
  d.lo = root.lo;
  d.hi = root.hi;
  d.warnings = root.warnings;
  return d;
}

[[nodiscard]] inline DoseEstimate gamma_bias_se(const PartialBleachModel& model, std::span<const double> xs1,
                                                std::span<const double> xs2, const Vector& theta, double sigma,
                                                Method method, FitMode mode,
                                                std::optional<std::pair<double, double>> bracket = std::nullopt) {
  return gamma_bias_se(model, xs1, xs2, theta, {sigma, sigma}, method, mode, bracket);
}

// Two-curve fit. `mode` follows FitMode; DWLS and QL/WLS reject the
// common-sigma mode (their estimates do not involve sigma), ML and DWLS
// reject fixed-sigma.
[[nodiscard]] inline FitResult fit_two_curves(const PartialBleachModel& model, const Dataset& unbleached,
                                              const Dataset& bleached, Method method, FitMode mode,
                                              const FitOptions& opts = {}) {
  const std::array<Curve, 2> curves{Curve{model.unbleached, unbleached}, Curve{model.bleached, bleached}};
  return fit_curves(std::span<const Curve>(curves), method, mode, opts);
}

}  // namespace propfit
