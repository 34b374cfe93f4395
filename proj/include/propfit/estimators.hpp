#pragma once

// Estimating equations for ML, QL, WLS and DWLS under y = f(x, theta)(1 + sigma eps)
// and a damped Newton solver for their roots.
//
//   QL   : sum (y - f) / f^2 grad f                                  = 0
//   WLS  : sum (y - f) / f^2 grad f + sum (y - f)^2 / f^3 grad f      = 0
//   DWLS : sum (y - f) / y^2 grad f                                  = 0
//   ML   : s2 sum grad f / f - sum (y - f) / f^2 grad f
//              - sum (y - f)^2 / f^3 grad f                          = 0
//          with s2 = n^-1 sum ((y - f) / f)^2 profiled in.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "propfit/errors.hpp"
#include "propfit/linalg.hpp"
#include "propfit/model.hpp"

namespace propfit {

enum class Method { ml, ql, wls, dwls };

inline constexpr std::array<Method, 4> kAllMethods{Method::ml, Method::ql, Method::wls, Method::dwls};

[[nodiscard]] inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::ml: return "ML";
    case Method::ql: return "QL";
    case Method::wls: return "WLS";
    case Method::dwls: return "DWLS";
  }
  return "?";
}

[[nodiscard]] inline Method parse_method(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "ml") return Method::ml;
  if (lower == "ql") return Method::ql;
  if (lower == "wls") return Method::wls;
  if (lower == "dwls") return Method::dwls;
  throw InputError("unknown method '" + std::string(s) + "' (expected ml, ql, wls or dwls)");
}

// How the curves of a multi-curve design are fitted.
//   separate     : each curve on its own (per-curve sigma for ML)
//   fixed_sigma  : one stacked system, block k weighted by 1/sigma_k^2 (QL, WLS)
//   common_sigma : one stacked system sharing a profiled sigma (ML)
enum class FitMode { separate, fixed_sigma, common_sigma };

[[nodiscard]] inline std::string_view mode_name(FitMode m) {
  switch (m) {
    case FitMode::separate: return "separate";
    case FitMode::fixed_sigma: return "fixed-sigma";
    case FitMode::common_sigma: return "common-sigma";
  }
  return "?";
}

// Whether the working sigma is recomputed from the current iterate. The
// QL/WLS/DWLS equations never read it; ML requires every_iteration.
enum class SigmaRefresh { every_iteration, never };

struct FitOptions {
  double tol_rel = 1e-8;
  double tol_abs = 1e-10;
  int max_iter = 100;
  double damping = 1e-3;
  std::optional<Vector> start;  // empty = automatic start
  SigmaRefresh sigma_refresh = SigmaRefresh::every_iteration;
  std::vector<double> fixed_sigmas;  // FitMode::fixed_sigma only
  int polish_steps = 3;

  void validate() const {
    if (!(tol_rel > 0.0) || !(tol_abs > 0.0)) throw InputError("fit tolerances must be positive");
    if (max_iter < 1) throw InputError("max_iter must be at least 1");
    if (!(damping >= 0.0)) throw InputError("damping must be non-negative");
  }
};

struct FitResult {
  Method method = Method::ql;
  Vector theta_hat;
  double sigma_hat = 0.0;
  std::vector<double> curve_sigmas;
  int iterations = 0;
  bool converged = false;
  double residual_norm = 0.0;  // inf-norm of the method's estimating equation at theta_hat
  double tolerance = 0.0;
  std::string message;
};

// (y_i - f_i) / f_i
[[nodiscard]] inline Vector relative_residuals(const ModelFunction& model, const Dataset& data, const Vector& theta) {
  Vector r(static_cast<Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double f = model.value(data[i].x, theta);
    if (f == 0.0) throw ZeroMeanError("f(x, theta) = 0 at x = " + std::to_string(data[i].x));
    r(static_cast<Index>(i)) = (data[i].y - f) / f;
  }
  return r;
}

[[nodiscard]] inline double estimate_sigma_ml(const ModelFunction& model, const Dataset& data, const Vector& theta_hat) {
  const Vector r = relative_residuals(model, data, theta_hat);
  return std::sqrt(r.squaredNorm() / static_cast<double>(r.size()));
}

[[nodiscard]] inline double estimate_sigma_unbiased(const ModelFunction& model, const Dataset& data,
                                                    const Vector& theta_hat, int p) {
  const auto n = static_cast<int>(data.size());
  if (n <= p) throw DataError("unbiased sigma needs n > p");
  const Vector r = relative_residuals(model, data, theta_hat);
  return std::sqrt(r.squaredNorm() / static_cast<double>(n - p));
}

namespace detail {

inline void check_fit_preconditions(Method method, const ModelFunction& model, const Dataset& data) {
  if (data.size() <= static_cast<std::size_t>(model.p())) {
    throw DataError("need more observations than parameters (n=" + std::to_string(data.size()) +
                    ", p=" + std::to_string(model.p()) + ")");
  }
  if (method == Method::dwls) {
    for (const auto& o : data) {
      if (o.y == 0.0) throw ZeroResponseError("DWLS weights 1/y^2 are undefined at y = 0");
      if (o.y < 0.0) throw ZeroResponseError("DWLS requires positive responses (found y = " + std::to_string(o.y) + ")");
    }
  }
}

// Left side of one curve's estimating equation. `s2` is the working sigma^2
// (read by ML only).
inline Vector curve_equation(Method method, const ModelFunction& model, const Dataset& data, const Vector& theta,
                             double s2) {
  Vector out = Vector::Zero(model.p());
  for (const auto& o : data) {
    const double f = model.value(o.x, theta);
    if (f == 0.0) throw ZeroMeanError("f(x, theta) = 0 at x = " + std::to_string(o.x));
    const Vector grad = model.gradient(o.x, theta);
    const double r = (o.y - f) / f;
    switch (method) {
      case Method::ql: out += (r / f) * grad; break;
      case Method::wls: out += ((r + r * r) / f) * grad; break;
      case Method::dwls: {
        if (o.y == 0.0) throw ZeroResponseError("DWLS weights 1/y^2 are undefined at y = 0");
        out += ((o.y - f) / (o.y * o.y)) * grad;
        break;
      }
      case Method::ml: out += ((s2 - r - r * r) / f) * grad; break;
    }
  }
  return out;
}

// Unweighted least-squares normal equation, used to refine automatic starts.
inline Vector ols_equation(const ModelFunction& model, const Dataset& data, const Vector& theta) {
  Vector out = Vector::Zero(model.p());
  for (const auto& o : data) out += (o.y - model.value(o.x, theta)) * model.gradient(o.x, theta);
  return out;
}

inline double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

struct SolveOutcome {
  Vector theta;
  int iterations = 0;
  bool converged = false;
  double residual_norm = 0.0;
  double tolerance = 0.0;
  std::string message;
};

using SigmaState = std::vector<double>;

// Levenberg-damped Newton iteration on residual(theta, state) = 0, where
// state = refresh(theta) is recomputed before every step and frozen while the
// equation Jacobian is differenced. Unknowns and equations are both scaled by
// d_j = |theta_j| at the start, so component j of the scaled equation is
// sum r_i J_ij theta_j and is dimensionless. Damped steps are solved by QR on
// the augmented system. A rejected step raises the damping x10; step-halving
// along the Newton direction is the last resort. Iteration stops when either
// residual is below tolerance or an accepted step moves every parameter by
// less than tol_rel relative; convergence is judged on the unscaled residual.
template <class ResidualFn, class RefreshFn>
SolveOutcome solve_root(ResidualFn&& residual, RefreshFn&& refresh, Vector theta, const FitOptions& opts) {
  constexpr double kLambdaMax = 1e10;
  constexpr double kLambdaMin = 1e-12;
  const Index p = theta.size();

  Vector d(p);
  for (Index j = 0; j < p; ++j) d(j) = theta(j) != 0.0 ? std::abs(theta(j)) : 1.0;

  auto scaled = [&](const Vector& th, const SigmaState& st) -> Vector { return d.cwiseProduct(residual(th, st)); };

  auto evaluate = [&](const Vector& th, SigmaState& st, Vector& r) -> bool {
    try {
      st = refresh(th);
      r = scaled(th, st);
      return r.allFinite();
    } catch (const Error&) {
      return false;
    }
  };

  // d(scaled residual)/du with theta = d .* u
  auto jacobian = [&](const Vector& th, const SigmaState& st, const Vector& r0) {
    Matrix A(r0.size(), p);
    Vector t = th;
    for (Index j = 0; j < p; ++j) {
      const double h = fd::gradient_step(th(j) / d(j)) * d(j);
      Vector rp;
      Vector rm;
      bool okp = true;
      bool okm = true;
      t(j) = th(j) + h;
      try { rp = scaled(t, st); } catch (const Error&) { okp = false; }
      t(j) = th(j) - h;
      try { rm = scaled(t, st); } catch (const Error&) { okm = false; }
      t(j) = th(j);
      if (okp && okm) {
        A.col(j) = (rp - rm) * (d(j) / (2.0 * h));
      } else if (okp) {
        A.col(j) = (rp - r0) * (d(j) / h);
      } else if (okm) {
        A.col(j) = (r0 - rm) * (d(j) / h);
      } else {
        throw DomainError("estimating equation cannot be differenced at the current iterate");
      }
    }
    return A;
  };

  SolveOutcome out;
  SigmaState state = refresh(theta);
  Vector r = scaled(theta, state);
  if (!r.allFinite()) throw NonFiniteError("estimating equation is non-finite at the start point");
  // Reported residual and tolerance are on the unscaled equation.
  auto raw_norm = [&]() { return inf_norm(r.cwiseQuotient(d)); };
  out.tolerance = std::max(opts.tol_rel * raw_norm(), opts.tol_abs);
  const double scaled_tol = std::max(opts.tol_rel * inf_norm(r), opts.tol_abs);
  double lambda = opts.damping;
  bool small_step = false;

  auto try_step = [&](const Vector& du, double rnorm) {
    SigmaState st;
    Vector rt;
    const Vector trial = theta + d.cwiseProduct(du);
    if (!evaluate(trial, st, rt) || !(rt.norm() < rnorm)) return false;
    small_step = true;
    for (Index j = 0; j < p; ++j) {
      small_step = small_step && std::abs(trial(j) - theta(j)) <= opts.tol_rel * (std::abs(trial(j)) + opts.tol_rel);
    }
    theta = trial;
    state = std::move(st);
    r = std::move(rt);
    return true;
  };

  auto polish = [&]() {
    for (int k = 0; k < opts.polish_steps; ++k) {
      const Matrix A = jacobian(theta, state, r);
      const Vector du = A.colPivHouseholderQr().solve(-r);
      if (!du.allFinite() || !try_step(du, r.norm())) return;
    }
  };

  for (int it = 0;; ++it) {
    if (raw_norm() <= out.tolerance || inf_norm(r) <= scaled_tol) {
      if (it > 0) polish();
      break;
    }
    if (it >= opts.max_iter) {
      out.message = "maximum iterations reached";
      break;
    }
    ++out.iterations;

    const Matrix A = jacobian(theta, state, r);
    Vector diag = A.colwise().norm().transpose();
    const double dmax = diag.maxCoeff();
    if (!(dmax > 0.0)) throw SingularError("estimating-equation Jacobian vanishes");
    for (Index j = 0; j < p; ++j) diag(j) = std::max(diag(j), 1e-7 * dmax);

    bool accepted = false;
    const double rnorm = r.norm();
    Matrix aug(A.rows() + p, p);
    Vector rhs = Vector::Zero(A.rows() + p);
    rhs.head(A.rows()) = -r;
    while (!accepted && lambda <= kLambdaMax) {
      aug.topRows(A.rows()) = A;
      aug.bottomRows(p) = (std::sqrt(lambda) * diag).asDiagonal();
      const Vector du = aug.householderQr().solve(rhs);
      if (du.allFinite() && try_step(du, rnorm)) {
        accepted = true;
        lambda = std::max(lambda / 10.0, kLambdaMin);
        break;
      }
      lambda *= 10.0;
    }

    if (!accepted) {
      Eigen::ColPivHouseholderQR<Matrix> qr(A);
      if (qr.rank() < A.cols()) {
        throw SingularError("Newton matrix is singular and damping escalation failed");
      }
      const Vector newton = qr.solve(-r);
      double scale = 0.5;
      for (int k = 0; k < 30 && !accepted; ++k, scale *= 0.5) accepted = try_step(scale * newton, rnorm);
      lambda = opts.damping;
    }
    if (!accepted) {
      out.message = "no step reduces the estimating-equation residual";
      break;
    }
    if (small_step) {
      polish();
      break;
    }
  }
  out.residual_norm = raw_norm();
  out.converged = out.residual_norm <= out.tolerance;
  if (!out.converged && out.message.empty()) out.message = "iteration stalled above the residual tolerance";
  out.theta = std::move(theta);
  return out;
}

inline SigmaState ml_profile_state(const ModelFunction& model, const Dataset& data, const Vector& theta) {
  const Vector r = relative_residuals(model, data, theta);
  return {r.squaredNorm() / static_cast<double>(r.size())};
}

inline Vector resolve_start(const ModelFunction& model, const Dataset& data, const FitOptions& opts);

}  // namespace detail

// Left side of the method's estimating equation at theta. For ML the working
// sigma is `sigma` when supplied, otherwise the profiled n^-1 sum r_i^2.
[[nodiscard]] inline Vector equation_residual(Method method, const ModelFunction& model, const Dataset& data,
                                              const Vector& theta, std::optional<double> sigma = std::nullopt) {
  model.check_theta(theta);
  if (method == Method::dwls) detail::check_fit_preconditions(method, model, data);
  double s2 = 0.0;
  if (method == Method::ml) s2 = sigma ? (*sigma) * (*sigma) : detail::ml_profile_state(model, data, theta)[0];
  return detail::curve_equation(method, model, data, theta, s2);
}

// Single-curve fit of any of the four estimators.
[[nodiscard]] inline FitResult fit(Method method, const ModelFunction& model, const Dataset& data,
                                   const FitOptions& opts = {}) {
  opts.validate();
  detail::check_fit_preconditions(method, model, data);
  const Vector start = detail::resolve_start(model, data, opts);

  auto residual = [&](const Vector& th, const detail::SigmaState& st) {
    return detail::curve_equation(method, model, data, th, st.empty() ? 0.0 : st[0]);
  };
  auto refresh = [&](const Vector& th) -> detail::SigmaState {
    if (method == Method::ml) return detail::ml_profile_state(model, data, th);
    if (opts.sigma_refresh == SigmaRefresh::never) return {};
    return {estimate_sigma_unbiased(model, data, th, model.p())};
  };
  if (method == Method::ml && opts.sigma_refresh == SigmaRefresh::never) {
    throw ModeError("ML profiles sigma and needs it refreshed every iteration");
  }

  detail::SolveOutcome s = detail::solve_root(residual, refresh, start, opts);
  FitResult res;
  res.method = method;
  res.iterations = s.iterations;
  res.converged = s.converged;
  res.residual_norm = s.residual_norm;
  res.tolerance = s.tolerance;
  res.message = s.converged ? "converged" : s.message;
  res.theta_hat = std::move(s.theta);
  if (method == Method::ml) {
    res.sigma_hat = estimate_sigma_ml(model, data, res.theta_hat);
    if (!std::isfinite(res.sigma_hat)) throw DegenerateError("ML sigma estimate is not finite");
    if (res.sigma_hat == 0.0) {
      for (const auto& o : data) {
        if (o.y != model.value(o.x, res.theta_hat)) {
          throw DegenerateError("ML sigma collapsed to zero on data that are not interpolated");
        }
      }
    }
  } else {
    res.sigma_hat = estimate_sigma_unbiased(model, data, res.theta_hat, model.p());
  }
  res.curve_sigmas = {res.sigma_hat};
  return res;
}

[[nodiscard]] inline FitResult fit_ml(const ModelFunction& m, const Dataset& d, const FitOptions& o = {}) {
  return fit(Method::ml, m, d, o);
}
[[nodiscard]] inline FitResult fit_ql(const ModelFunction& m, const Dataset& d, const FitOptions& o = {}) {
  return fit(Method::ql, m, d, o);
}
[[nodiscard]] inline FitResult fit_wls(const ModelFunction& m, const Dataset& d, const FitOptions& o = {}) {
  return fit(Method::wls, m, d, o);
}
[[nodiscard]] inline FitResult fit_dwls(const ModelFunction& m, const Dataset& d, const FitOptions& o = {}) {
  return fit(Method::dwls, m, d, o);
}

namespace detail {

// Hook start refined by unweighted least squares; the refinement's best
// iterate is used even when it does not fully converge.
inline Vector resolve_start(const ModelFunction& model, const Dataset& data, const FitOptions& opts) {
  if (opts.start) {
    model.check_theta(*opts.start);
    return *opts.start;
  }
  Vector s = model.initial_guess(data);
  FitOptions ols = opts;
  ols.start.reset();
  auto residual = [&](const Vector& th, const SigmaState&) { return ols_equation(model, data, th); };
  auto refresh = [](const Vector&) { return SigmaState{}; };
  try {
    return solve_root(residual, refresh, s, ols).theta;
  } catch (const Error&) {
    return s;
  }
}

}  // namespace detail

// Joint fit of several curves with disjoint parameter slices. The returned
// theta_hat is the concatenation of the curve parameter vectors.
[[nodiscard]] inline FitResult fit_curves(std::span<const Curve> curves, Method method, FitMode mode,
                                          const FitOptions& opts = {}) {
  opts.validate();
  if (curves.empty()) throw DataError("no curves to fit");
  std::vector<Index> offsets;
  Index ptot = 0;
  Index ntot = 0;
  for (const auto& c : curves) {
    detail::check_fit_preconditions(method, c.model, c.data);
    offsets.push_back(ptot);
    ptot += c.model.p();
    ntot += static_cast<Index>(c.data.size());
  }
  if (opts.start && opts.start->size() != ptot) throw DomainError("joint start vector has the wrong length");

  auto slice_opts = [&](std::size_t k) {
    FitOptions o = opts;
    if (opts.start) o.start = opts.start->segment(offsets[k], curves[k].model.p()).eval();
    return o;
  };

  FitResult res;
  res.method = method;
  res.theta_hat.resize(ptot);

  if (mode == FitMode::separate) {
    res.converged = true;
    for (std::size_t k = 0; k < curves.size(); ++k) {
      FitResult rk = fit(method, curves[k].model, curves[k].data, slice_opts(k));
      res.theta_hat.segment(offsets[k], curves[k].model.p()) = rk.theta_hat;
      res.iterations = std::max(res.iterations, rk.iterations);
      res.converged = res.converged && rk.converged;
      res.residual_norm = std::max(res.residual_norm, rk.residual_norm);
      res.tolerance = std::max(res.tolerance, rk.tolerance);
      res.curve_sigmas.push_back(rk.sigma_hat);
      if (!rk.converged) res.message = "curve " + std::to_string(k + 1) + ": " + rk.message;
    }
    if (res.converged) res.message = "converged";
  } else {
    if (mode == FitMode::fixed_sigma && (method == Method::ml || method == Method::dwls)) {
      throw ModeError(std::string(method_name(method)) +
                      " has no fixed-sigma simultaneous form (DWLS is sigma-free; ML profiles sigma)");
    }
    if (mode == FitMode::common_sigma && method != Method::ml) {
      throw ModeError("common-sigma simultaneous fitting applies to ML only; " + std::string(method_name(method)) +
                      " estimates do not depend on it");
    }
    std::vector<double> weights(curves.size(), 1.0);
    if (mode == FitMode::fixed_sigma) {
      if (opts.fixed_sigmas.size() != curves.size()) throw InputError("fixed-sigma mode needs one sigma per curve");
      for (std::size_t k = 0; k < curves.size(); ++k) {
        const double s = opts.fixed_sigmas[k];
        if (!(s > 0.0)) throw InputError("fixed sigmas must be positive");
        weights[k] = 1.0 / (s * s);
      }
    }

    Vector start(ptot);
    for (std::size_t k = 0; k < curves.size(); ++k) {
      start.segment(offsets[k], curves[k].model.p()) =
          detail::resolve_start(curves[k].model, curves[k].data, slice_opts(k));
    }

    auto residual = [&](const Vector& th, const detail::SigmaState& st) {
      Vector out(ptot);
      for (std::size_t k = 0; k < curves.size(); ++k) {
        const Index pk = curves[k].model.p();
        out.segment(offsets[k], pk) =
            weights[k] * detail::curve_equation(method, curves[k].model, curves[k].data, th.segment(offsets[k], pk),
                                                st.empty() ? 0.0 : st[0]);
      }
      return out;
    };
    auto refresh = [&](const Vector& th) -> detail::SigmaState {
      if (method != Method::ml) return {};
      double ss = 0.0;
      for (std::size_t k = 0; k < curves.size(); ++k) {
        ss += relative_residuals(curves[k].model, curves[k].data, th.segment(offsets[k], curves[k].model.p()))
                  .squaredNorm();
      }
      return {ss / static_cast<double>(ntot)};
    };
    detail::SolveOutcome s = detail::solve_root(residual, refresh, start, opts);
    res.theta_hat = s.theta;
    res.iterations = s.iterations;
    res.converged = s.converged;
    res.residual_norm = s.residual_norm;
    res.tolerance = s.tolerance;
    res.message = s.converged ? "converged" : s.message;
    for (std::size_t k = 0; k < curves.size(); ++k) {
      const Vector th = res.theta_hat.segment(offsets[k], curves[k].model.p());
      res.curve_sigmas.push_back(method == Method::ml
                                     ? estimate_sigma_ml(curves[k].model, curves[k].data, th)
                                     : estimate_sigma_unbiased(curves[k].model, curves[k].data, th, curves[k].model.p()));
    }
  }

  // pooled sigma over all curves by the method's rule
  double ss = 0.0;
  for (std::size_t k = 0; k < curves.size(); ++k) {
    ss += relative_residuals(curves[k].model, curves[k].data, res.theta_hat.segment(offsets[k], curves[k].model.p()))
              .squaredNorm();
  }
  const double dof = method == Method::ml ? static_cast<double>(ntot) : static_cast<double>(ntot - ptot);
  if (!(dof > 0.0)) throw DataError("need more observations than parameters");
  res.sigma_hat = std::sqrt(ss / dof);
  return res;
}

}  // namespace propfit
