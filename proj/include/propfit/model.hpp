#pragma once

// Mean functions f(x, theta) for proportional-error regression, the datasets
// they are fitted to, and the finite-difference fallbacks used when a model
// does not ship analytic derivatives.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "propfit/errors.hpp"
#include "propfit/linalg.hpp"

namespace propfit {

struct Observation {
  double x = 0.0;
  double y = 0.0;
};

class Dataset {
 public:
  Dataset() = default;

  explicit Dataset(std::vector<Observation> obs) : obs_(std::move(obs)) {
    if (obs_.empty()) throw DataError("dataset must contain at least one observation");
    for (const auto& o : obs_) {
      if (!std::isfinite(o.x) || !std::isfinite(o.y)) throw DataError("dataset contains a non-finite value");
    }
  }

  static Dataset from_xy(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw DataError("x and y have different lengths");
    std::vector<Observation> obs;
    obs.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) obs.push_back({xs[i], ys[i]});
    return Dataset(std::move(obs));
  }

  [[nodiscard]] std::size_t size() const { return obs_.size(); }
  [[nodiscard]] bool empty() const { return obs_.empty(); }
  [[nodiscard]] const Observation& operator[](std::size_t i) const { return obs_[i]; }
  [[nodiscard]] auto begin() const { return obs_.begin(); }
  [[nodiscard]] auto end() const { return obs_.end(); }
  [[nodiscard]] const std::vector<Observation>& observations() const { return obs_; }

  [[nodiscard]] std::vector<double> xs() const {
    std::vector<double> out;
    out.reserve(obs_.size());
    for (const auto& o : obs_) out.push_back(o.x);
    return out;
  }

  [[nodiscard]] std::vector<double> ys() const {
    std::vector<double> out;
    out.reserve(obs_.size());
    for (const auto& o : obs_) out.push_back(o.y);
    return out;
  }

 private:
  std::vector<Observation> obs_;
};

using ValueFn = std::function<double(double, const Vector&)>;
using GradientFn = std::function<Vector(double, const Vector&)>;
using HessianFn = std::function<Matrix(double, const Vector&)>;
using GuardFn = std::function<bool(double, const Vector&)>;
using StartFn = std::function<Vector(const Dataset&)>;

namespace fd {

inline double gradient_step(double theta_j) {
  static const double h = std::cbrt(std::numeric_limits<double>::epsilon());
  return h * std::max(1.0, std::abs(theta_j));
}

// Nested second differences of f alone need a larger step than first
// differences to keep round-off (eps / h^2) below truncation (h^2).
inline double hessian_step(double theta_j) {
  static const double h = std::pow(std::numeric_limits<double>::epsilon(), 0.25);
  return h * std::max(1.0, std::abs(theta_j));
}

inline Vector central_gradient(const ValueFn& f, double x, const Vector& theta) {
  Vector g(theta.size());
  Vector t = theta;
  for (Index j = 0; j < theta.size(); ++j) {
    const double h = gradient_step(theta(j));
    t(j) = theta(j) + h;
    const double fp = f(x, t);
    t(j) = theta(j) - h;
    const double fm = f(x, t);
    t(j) = theta(j);
    g(j) = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Central differences of an analytic gradient, symmetrised.
inline Matrix hessian_from_gradient(const GradientFn& grad, double x, const Vector& theta, double scale = 1.0) {
  const Index p = theta.size();
  Matrix h(p, p);
  Vector t = theta;
  for (Index j = 0; j < p; ++j) {
    const double step = scale * gradient_step(theta(j));
    t(j) = theta(j) + step;
    const Vector gp = grad(x, t);
    t(j) = theta(j) - step;
    const Vector gm = grad(x, t);
    t(j) = theta(j);
    h.col(j) = (gp - gm) / (2.0 * step);
  }
  return linalg::symmetrize(h);
}

// Nested central differences of f, symmetrised.
inline Matrix hessian_from_value(const ValueFn& f, double x, const Vector& theta, double scale = 1.0) {
  const Index p = theta.size();
  Matrix h(p, p);
  Vector t = theta;
  for (Index j = 0; j < p; ++j) {
    const double hj = scale * hessian_step(theta(j));
    for (Index k = 0; k <= j; ++k) {
      const double hk = scale * hessian_step(theta(k));
      auto at = [&](double sj, double sk) {
        t = theta;
        t(j) += sj;
        t(k) += sk;
        return f(x, t);
      };
      const double v = (at(hj, hk) - at(hj, -hk) - at(-hj, hk) + at(-hj, -hk)) / (4.0 * hj * hk);
      h(j, k) = v;
      h(k, j) = v;
    }
  }
  return h;
}

inline double central_derivative_x(const ValueFn& f, double x, const Vector& theta) {
  const double h = gradient_step(x);
  return (f(x + h, theta) - f(x - h, theta)) / (2.0 * h);
}

}  // namespace fd

// A mean function with declared parameter count. Gradient, Hessian and the
// x-derivative are optional; missing ones fall back to central differences.
class ModelFunction {
 public:
  struct Spec {
    std::string name;
    int p = 0;
    ValueFn value;
    GradientFn gradient;  // optional
    HessianFn hessian;    // optional
    ValueFn dfdx;         // optional
    GuardFn guard;        // optional; default accepts finite theta
    StartFn start;        // optional "auto" start hook
    std::vector<std::string> param_names;
  };

  ModelFunction() = default;

  explicit ModelFunction(Spec spec) : spec_(std::move(spec)) {
    if (spec_.p < 1) throw DomainError("model '" + spec_.name + "' must declare at least one parameter");
    if (!spec_.value) throw DomainError("model '" + spec_.name + "' has no value function");
    if (spec_.param_names.empty()) {
      for (int j = 0; j < spec_.p; ++j) spec_.param_names.push_back("theta" + std::to_string(j + 1));
    }
    if (static_cast<int>(spec_.param_names.size()) != spec_.p) {
      throw DomainError("model '" + spec_.name + "' has a parameter-name list of the wrong length");
    }
  }

  [[nodiscard]] const std::string& name() const { return spec_.name; }
  [[nodiscard]] int p() const { return spec_.p; }
  [[nodiscard]] const std::vector<std::string>& param_names() const { return spec_.param_names; }
  [[nodiscard]] bool has_analytic_gradient() const { return static_cast<bool>(spec_.gradient); }
  [[nodiscard]] bool has_analytic_hessian() const { return static_cast<bool>(spec_.hessian); }
  [[nodiscard]] bool has_start_hook() const { return static_cast<bool>(spec_.start); }

  void check_theta(const Vector& theta) const {
    if (theta.size() != spec_.p) {
      throw DomainError("model '" + spec_.name + "' expects " + std::to_string(spec_.p) + " parameters, got " +
                        std::to_string(theta.size()));
    }
    if (!theta.allFinite()) throw DomainError("parameter vector has non-finite entries");
  }

  [[nodiscard]] bool in_domain(double x, const Vector& theta) const {
    if (theta.size() != spec_.p || !theta.allFinite() || !std::isfinite(x)) return false;
    return spec_.guard ? spec_.guard(x, theta) : true;
  }

  [[nodiscard]] double value(double x, const Vector& theta) const {
    guard(x, theta);
    const double f = spec_.value(x, theta);
    if (!std::isfinite(f)) throw NonFiniteError("model '" + spec_.name + "' returned a non-finite value");
    return f;
  }

  [[nodiscard]] Vector gradient(double x, const Vector& theta) const {
    guard(x, theta);
    Vector g = spec_.gradient ? spec_.gradient(x, theta) : fd::central_gradient(spec_.value, x, theta);
    if (g.size() != spec_.p) throw DomainError("gradient of '" + spec_.name + "' has the wrong length");
    if (!g.allFinite()) throw NonFiniteError("gradient of '" + spec_.name + "' is non-finite");
    return g;
  }

  [[nodiscard]] Matrix hessian(double x, const Vector& theta) const {
    guard(x, theta);
    Matrix h;
    if (spec_.hessian) {
      h = spec_.hessian(x, theta);
    } else if (spec_.gradient) {
      h = fd::hessian_from_gradient(spec_.gradient, x, theta);
    } else {
      h = fd::hessian_from_value(spec_.value, x, theta);
    }
    if (h.rows() != spec_.p || h.cols() != spec_.p) throw DomainError("Hessian of '" + spec_.name + "' has wrong shape");
    if (!h.allFinite()) throw NonFiniteError("Hessian of '" + spec_.name + "' is non-finite");
    return h;
  }

  [[nodiscard]] double dfdx(double x, const Vector& theta) const {
    guard(x, theta);
    const double d = spec_.dfdx ? spec_.dfdx(x, theta) : fd::central_derivative_x(spec_.value, x, theta);
    if (!std::isfinite(d)) throw NonFiniteError("x-derivative of '" + spec_.name + "' is non-finite");
    return d;
  }

  // Relative discrepancy between the Hessian at the default FD step and at
  // twice that step; zero when the Hessian is analytic.
  [[nodiscard]] double hessian_fd_noise(double x, const Vector& theta) const {
    if (spec_.hessian) return 0.0;
    const Matrix h1 = hessian(x, theta);
    const Matrix h2 = spec_.gradient ? fd::hessian_from_gradient(spec_.gradient, x, theta, 2.0)
                                     : fd::hessian_from_value(spec_.value, x, theta, 2.0);
    return linalg::relative_difference(h1, h2);
  }

  [[nodiscard]] Vector initial_guess(const Dataset& data) const {
    if (!spec_.start) throw DomainError("model '" + spec_.name + "' has no automatic start; supply one");
    Vector s = spec_.start(data);
    check_theta(s);
    return s;
  }

  [[nodiscard]] const Spec& spec() const { return spec_; }

  // Copy with a replaced analytic gradient; used for negative controls.
  [[nodiscard]] ModelFunction with_gradient(GradientFn g) const {
    Spec s = spec_;
    s.gradient = std::move(g);
    return ModelFunction(std::move(s));
  }

 private:
  void guard(double x, const Vector& theta) const {
    check_theta(theta);
    if (!std::isfinite(x)) throw DomainError("non-finite covariate");
    if (spec_.guard && !spec_.guard(x, theta)) {
      throw DomainError("model '" + spec_.name + "' evaluated outside its domain");
    }
  }

  Spec spec_;
};

// One curve of a (possibly multi-curve) design: a mean function and its data.
struct Curve {
  ModelFunction model;
  Dataset data;
};

[[nodiscard]] inline double eval_f(const ModelFunction& model, double x, const Vector& theta) {
  return model.value(x, theta);
}

[[nodiscard]] inline Vector eval_grad(const ModelFunction& model, double x, const Vector& theta) {
  return model.gradient(x, theta);
}

[[nodiscard]] inline Matrix eval_hess(const ModelFunction& model, double x, const Vector& theta) {
  return model.hessian(x, theta);
}

struct FdCheckReport {
  double max_gradient_error = 0.0;  // max over xs of ||g_a - g_fd||_inf / ||g_a||_inf
  double max_hessian_error = 0.0;
  double threshold = 1e-5;
  bool passed = true;
};

// Compares analytic derivatives with central differences of f. Report-only.
// Errors are normwise relative, with |f| / max(1, |theta|)^k (k = 1 for the
// gradient, 2 for the Hessian) as a floor on the denominator so exactly
// vanishing derivatives do not turn rounding noise into a relative error of 1.
[[nodiscard]] inline FdCheckReport fd_check(const ModelFunction& model, const Vector& theta,
                                            std::span<const double> xs, double threshold = 1e-5) {
  FdCheckReport r;
  r.threshold = threshold;
  const auto& spec = model.spec();
  const double tscale = std::max(1.0, linalg::max_abs(theta));
  auto rel = [](const Matrix& a, const Matrix& b, double floor) {
    const double denom = std::max({linalg::max_abs(a), linalg::max_abs(b), floor});
    return denom == 0.0 ? 0.0 : linalg::max_abs(a - b) / denom;
  };
  for (double x : xs) {
    const double fx = std::abs(spec.value(x, theta));
    if (spec.gradient) {
      const Vector ga = model.gradient(x, theta);
      const Vector gf = fd::central_gradient(spec.value, x, theta);
      r.max_gradient_error = std::max(r.max_gradient_error, rel(ga, gf, fx / tscale));
    }
    if (spec.hessian) {
      const Matrix ha = model.hessian(x, theta);
      const Matrix hf = linalg::symmetrize(fd::hessian_from_value(spec.value, x, theta));
      r.max_hessian_error = std::max(r.max_hessian_error, rel(ha, hf, fx / (tscale * tscale)));
    }
  }
  r.passed = r.max_gradient_error <= threshold && r.max_hessian_error <= threshold;
  return r;
}

namespace models {

// f = theta1
inline ModelFunction constant() {
  ModelFunction::Spec s;
  s.name = "constant";
  s.p = 1;
  s.value = [](double, const Vector& t) { return t(0); };
  s.gradient = [](double, const Vector&) { return Vector::Ones(1).eval(); };
  s.hessian = [](double, const Vector&) { return Matrix::Zero(1, 1).eval(); };
  s.dfdx = [](double, const Vector&) { return 0.0; };
  s.start = [](const Dataset& d) {
    double sum = 0.0;
    for (const auto& o : d) sum += o.y;
    return Vector::Constant(1, sum / static_cast<double>(d.size())).eval();
  };
  s.param_names = {"theta1"};
  return ModelFunction(std::move(s));
}

// f = theta1 * g(x) for a fixed shape g.
inline ModelFunction scaled_shape(std::function<double(double)> g, std::string name = "scaled_shape",
                                  std::function<double(double)> dg = {}) {
  ModelFunction::Spec s;
  s.name = std::move(name);
  s.p = 1;
  s.value = [g](double x, const Vector& t) { return t(0) * g(x); };
  s.gradient = [g](double x, const Vector&) { return Vector::Constant(1, g(x)).eval(); };
  s.hessian = [](double, const Vector&) { return Matrix::Zero(1, 1).eval(); };
  if (dg) s.dfdx = [dg](double x, const Vector& t) { return t(0) * dg(x); };
  s.start = [g](const Dataset& d) {
    double num = 0.0;
    double den = 0.0;
    for (const auto& o : d) {
      const double gx = g(o.x);
      num += o.y * gx;
      den += gx * gx;
    }
    if (den == 0.0) throw DomainError("fixed shape vanishes on every design point");
    return Vector::Constant(1, num / den).eval();
  };
  s.param_names = {"theta1"};
  return ModelFunction(std::move(s));
}

// g(x) = 1 - exp(-(x + offset) / scale); the saturating shape with fixed offset/scale.
inline ModelFunction scaled_saturating_shape(double offset, double scale) {
  if (scale == 0.0) throw DomainError("shape scale must be non-zero");
  return scaled_shape([offset, scale](double x) { return -std::expm1(-(x + offset) / scale); }, "scaled_shape",
                      [offset, scale](double x) { return std::exp(-(x + offset) / scale) / scale; });
}

// f = theta1 * exp(-x / theta2)
inline ModelFunction exponential_decay() {
  ModelFunction::Spec s;
  s.name = "exponential";
  s.p = 2;
  s.value = [](double x, const Vector& t) { return t(0) * std::exp(-x / t(1)); };
  s.gradient = [](double x, const Vector& t) {
    const double e = std::exp(-x / t(1));
    Vector g(2);
    g << e, t(0) * e * x / (t(1) * t(1));
    return g;
  };
  s.hessian = [](double x, const Vector& t) {
    const double e = std::exp(-x / t(1));
    const double t2 = t(1);
    Matrix h(2, 2);
    h(0, 0) = 0.0;
    h(0, 1) = h(1, 0) = e * x / (t2 * t2);
    h(1, 1) = t(0) * e * x * (x - 2.0 * t2) / (t2 * t2 * t2 * t2);
    return h;
  };
  s.dfdx = [](double x, const Vector& t) { return -t(0) * std::exp(-x / t(1)) / t(1); };
  s.guard = [](double, const Vector& t) { return t(1) != 0.0; };
  s.start = [](const Dataset& d) {
    // log-linear regression of log y on x
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    double m = 0;
    for (const auto& o : d) {
      if (o.y <= 0.0) continue;
      const double ly = std::log(o.y);
      sx += o.x;
      sy += ly;
      sxx += o.x * o.x;
      sxy += o.x * ly;
      m += 1.0;
    }
    const double den = m * sxx - sx * sx;
    if (m < 2.0 || den == 0.0) throw DomainError("cannot form an automatic start for the exponential model");
    const double slope = (m * sxy - sx * sy) / den;
    const double icpt = (sy - slope * sx) / m;
    Vector v(2);
    v << std::exp(icpt), slope != 0.0 ? -1.0 / slope : 1e6;
    return v;
  };
  s.param_names = {"theta1", "theta2"};
  return ModelFunction(std::move(s));
}

// f = theta1 + theta2 * x; not of the theta1 * f* form.
inline ModelFunction linear() {
  ModelFunction::Spec s;
  s.name = "linear";
  s.p = 2;
  s.value = [](double x, const Vector& t) { return t(0) + t(1) * x; };
  s.gradient = [](double x, const Vector&) {
    Vector g(2);
    g << 1.0, x;
    return g;
  };
  s.hessian = [](double, const Vector&) { return Matrix::Zero(2, 2).eval(); };
  s.dfdx = [](double, const Vector& t) { return t(1); };
  s.start = [](const Dataset& d) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = static_cast<double>(d.size());
    for (const auto& o : d) {
      sx += o.x;
      sy += o.y;
      sxx += o.x * o.x;
      sxy += o.x * o.y;
    }
    const double den = m * sxx - sx * sx;
    if (den == 0.0) throw DomainError("cannot form an automatic start for the linear model");
    Vector v(2);
    v(1) = (m * sxy - sx * sy) / den;
    v(0) = (sy - v(1) * sx) / m;
    return v;
  };
  s.param_names = {"theta1", "theta2"};
  return ModelFunction(std::move(s));
}

namespace detail {

// For fixed a3 the model is c0 + c1 exp(-x / a3) with c0 = a1 and
// c1 = -a1 exp(-a2 / a3); the linear part is solved by 1/y^2-weighted least
// squares and a3 by a log-scale scan refined with Brent's method.
struct SaturatingProfile {
  double sse = std::numeric_limits<double>::infinity();
  double c0 = 0.0;
  double c1 = 0.0;
};

inline SaturatingProfile saturating_profile(const std::vector<Observation>& obs, double a3) {
  double s00 = 0.0, s01 = 0.0, s11 = 0.0, t0 = 0.0, t1 = 0.0;
  for (const auto& o : obs) {
    const double w = 1.0 / (o.y * o.y);
    const double e = std::exp(-o.x / a3);
    s00 += w;
    s01 += w * e;
    s11 += w * e * e;
    t0 += w * o.y;
    t1 += w * o.y * e;
  }
  SaturatingProfile p;
  const double det = s00 * s11 - s01 * s01;
  if (!(std::abs(det) > 1e-14 * s00 * s11)) return p;
  p.c0 = (s11 * t0 - s01 * t1) / det;
  p.c1 = (s00 * t1 - s01 * t0) / det;
  if (!(p.c0 > 0.0 && p.c1 < 0.0)) return p;
  p.sse = 0.0;
  for (const auto& o : obs) {
    const double r = (o.y - p.c0 - p.c1 * std::exp(-o.x / a3)) / o.y;
    p.sse += r * r;
  }
  return p;
}

inline Vector saturating_start(const Dataset& d) {
  std::vector<Observation> obs;
  for (const auto& o : d) {
    if (o.y > 0.0) obs.push_back(o);
  }
  double xmin = std::numeric_limits<double>::infinity();
  double xmax = -xmin;
  double ymax = 0.0;
  for (const auto& o : obs) {
    xmin = std::min(xmin, o.x);
    xmax = std::max(xmax, o.x);
    ymax = std::max(ymax, o.y);
  }
  const double range = xmax > xmin ? xmax - xmin : 1.0;
  Vector v(3);
  v << 1.05 * std::max(ymax, 1e-300), 0.5 * range, range;
  if (obs.size() < 3 || !(xmax > xmin)) return v;

  auto cost = [&](double log_a3) { return saturating_profile(obs, std::exp(log_a3)).sse; };
  constexpr int kScan = 121;
  const double lo = std::log(range / 50.0);
  const double hi = std::log(range * 50.0);
  const double step = (hi - lo) / (kScan - 1);
  int best = -1;
  double best_cost = std::numeric_limits<double>::infinity();
  for (int k = 0; k < kScan; ++k) {
    const double c = cost(lo + step * k);
    if (c < best_cost) {
      best_cost = c;
      best = k;
    }
  }
  if (best < 0) return v;
  const double centre = lo + step * best;
  const auto [la3, c] = boost::math::tools::brent_find_minima(cost, centre - step, centre + step, 40);
  const double a3 = std::exp(c <= best_cost ? la3 : centre);
  const SaturatingProfile p = saturating_profile(obs, a3);
  if (!std::isfinite(p.sse)) return v;
  v << p.c0, -a3 * std::log(-p.c1 / p.c0), a3;
  return v;
}

}  // namespace detail

// Saturating exponential dose response
//   f = a1 * (1 - exp(-(x + a2) / a3)).
inline ModelFunction saturating_exponential() {
  ModelFunction::Spec s;
  s.name = "saturating_exponential";
  s.p = 3;
  s.value = [](double x, const Vector& a) { return -a(0) * std::expm1(-(x + a(1)) / a(2)); };
  s.gradient = [](double x, const Vector& a) {
    const double u = (x + a(1)) / a(2);
    const double e = std::exp(-u);
    Vector g(3);
    g << -std::expm1(-u), a(0) * e / a(2), -a(0) * e * u / a(2);
    return g;
  };
  s.hessian = [](double x, const Vector& a) {
    const double u = (x + a(1)) / a(2);
    const double e = std::exp(-u);
    const double a3 = a(2);
    const double a3sq = a3 * a3;
    Matrix h(3, 3);
    h(0, 0) = 0.0;
    h(0, 1) = h(1, 0) = e / a3;
    h(0, 2) = h(2, 0) = -e * u / a3;
    h(1, 1) = -a(0) * e / a3sq;
    h(1, 2) = h(2, 1) = a(0) * e * (u - 1.0) / a3sq;
    h(2, 2) = -a(0) * e * u * (u - 2.0) / a3sq;
    return h;
  };
  s.dfdx = [](double x, const Vector& a) { return a(0) * std::exp(-(x + a(1)) / a(2)) / a(2); };
  s.guard = [](double, const Vector& a) { return a(2) != 0.0; };
  s.start = [](const Dataset& d) { return detail::saturating_start(d); };
  s.param_names = {"alpha1", "alpha2", "alpha3"};
  return ModelFunction(std::move(s));
}

}  // namespace models

// Options passed to a registry factory (e.g. fixed shape offset/scale).
using ModelOptions = std::map<std::string, double>;

class ModelRegistry {
 public:
  using Factory = std::function<ModelFunction(const ModelOptions&)>;

  void add(std::string name, int p, Factory factory) {
    entries_[std::move(name)] = Entry{p, std::move(factory)};
  }

  [[nodiscard]] bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  [[nodiscard]] int parameter_count(const std::string& name) const { return lookup(name).p; }

  // p < 0 skips the parameter-count check.
  [[nodiscard]] ModelFunction make(const std::string& name, int p = -1, const ModelOptions& opts = {}) const {
    const Entry& e = lookup(name);
    if (p >= 0 && p != e.p) {
      throw DomainError("model '" + name + "' has " + std::to_string(e.p) + " parameters, not " + std::to_string(p));
    }
    ModelFunction m = e.factory(opts);
    if (m.p() != e.p) throw DomainError("factory for '" + name + "' produced a model with a different parameter count");
    return m;
  }

  [[nodiscard]] std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
  }

  static ModelRegistry builtin() {
    ModelRegistry r;
    r.add("constant", 1, [](const ModelOptions&) { return models::constant(); });
    r.add("scaled_shape", 1, [](const ModelOptions& o) {
      auto get = [&](const char* k, double d) {
        auto it = o.find(k);
        return it == o.end() ? d : it->second;
      };
      return models::scaled_saturating_shape(get("shape_offset", 0.0), get("shape_scale", 1.0));
    });
    r.add("exponential", 2, [](const ModelOptions&) { return models::exponential_decay(); });
    r.add("linear", 2, [](const ModelOptions&) { return models::linear(); });
    r.add("saturating_exponential", 3, [](const ModelOptions&) { return models::saturating_exponential(); });
    return r;
  }

 private:
  struct Entry {
    int p = 0;
    Factory factory;
  };

  const Entry& lookup(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw DomainError("unknown model '" + name + "'");
    return it->second;
  }

  std::map<std::string, Entry> entries_;
};

}  // namespace propfit
