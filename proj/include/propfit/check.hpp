#pragma once

// Self-check suite over bundled fixtures: hat-trace, derivative checks,
// covariance identities, factorized-model structure and the implicit-function
// derivatives of gamma.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "propfit/asymptotics.hpp"
#include "propfit/equivalent_dose.hpp"
#include "propfit/estimators.hpp"
#include "propfit/jacobian.hpp"
#include "propfit/linalg.hpp"
#include "propfit/model.hpp"
#include "propfit/simulation.hpp"

namespace propfit {

struct CheckItem {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct CheckOptions {
  bool inject_wrong_gradient = false;  // negative control for the derivative checks
  int random_fixtures = 50;
  std::uint64_t seed = 20240611;
};

struct Fixture {
  std::string name;
  ModelFunction model;
  std::vector<double> xs;
  Vector theta;
  double sigma = 0.03;
};

[[nodiscard]] inline std::vector<Fixture> bundled_fixtures(bool inject_wrong_gradient = false) {
  const Vector ref = reference_theta();
  std::vector<Fixture> f;
  f.push_back({"constant", models::constant(), {1, 2, 3, 4, 5, 6, 7, 8}, (Vector(1) << 100.0).finished(), 0.02});
  f.push_back({"exponential", models::exponential_decay(), {1, 2, 4, 5, 7, 9}, (Vector(2) << 2.0, 3.0).finished(), 0.05});
  f.push_back({"linear", models::linear(), {0, 1, 2, 3, 4, 5, 6}, (Vector(2) << 1.0, 0.5).finished(), 0.05});
  f.push_back({"scaled_shape", models::scaled_saturating_shape(50.0, 300.0), default_unbleached_grid(),
               (Vector(1) << 1000.0).finished(), 0.03});
  f.push_back({"unbleached", models::saturating_exponential(), default_unbleached_grid(), ref.head(3), 0.03});
  f.push_back({"bleached", models::saturating_exponential(), default_bleached_grid(), ref.tail(3), 0.03});
  if (inject_wrong_gradient) {
    Fixture& u = f[4];
    const ModelFunction good = u.model;
    u.name = "unbleached[wrong-gradient]";
    u.model = good.with_gradient([good](double x, const Vector& th) {
      Vector g = good.gradient(x, th);
      g(1) *= 1.001;
      return g;
    });
  }
  return f;
}

namespace detail {

inline CheckItem item(std::string name, double measured, double threshold, std::string detail = {}) {
  return {std::move(name), measured <= threshold, measured, threshold, std::move(detail)};
}

inline Matrix correlation_scaled(const Matrix& a, const Vector& d) {
  const Vector s = d.cwiseSqrt().cwiseInverse();
  return s.asDiagonal() * a * s.asDiagonal();
}

}  // namespace detail

[[nodiscard]] inline std::vector<CheckItem> run_checks(const CheckOptions& opts = {}) {
  std::vector<CheckItem> out;
  const auto fixtures = bundled_fixtures(opts.inject_wrong_gradient);

  for (const auto& fx : fixtures) {
    try {
      const JacobianBundle b = build_jacobian_bundle(fx.model, fx.xs, fx.theta);
      const double tr = b.w1.sum() - static_cast<double>(b.p());
      out.push_back(detail::item("hat_trace/" + fx.name, std::abs(tr), 1e-10, "sum w1 - p = " + std::to_string(tr)));
    } catch (const Error& e) {
      out.push_back({"hat_trace/" + fx.name, false, NAN, 1e-10, e.what()});
    }
    if (fx.model.has_analytic_gradient() || fx.model.has_analytic_hessian()) {
      const FdCheckReport r = fd_check(fx.model, fx.theta, fx.xs);
      out.push_back(detail::item("fd_gradient/" + fx.name, r.max_gradient_error, 1e-5));
      if (fx.model.has_analytic_hessian()) out.push_back(detail::item("fd_hessian/" + fx.name, r.max_hessian_error, 1e-5));
    }
  }

  const Vector ref = reference_theta();
  const PartialBleachModel pb;
  const auto g1 = default_unbleached_grid();
  const auto g2 = default_bleached_grid();
  {
    const std::array<CurveDesign, 2> cd{CurveDesign{&pb.unbleached, g1}, CurveDesign{&pb.bleached, g2}};
    const JacobianBundle b = build_jacobian_bundle(std::span<const CurveDesign>(cd), ref);
    const double tr = b.w1.sum() - static_cast<double>(b.p());
    out.push_back(detail::item("hat_trace/two_curve_joint", std::abs(tr), 1e-10, "sum w1 - p = " + std::to_string(tr)));
  }

  // Random saturating-exponential fixtures for the covariance identities.
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_unreduced = 0.0;
  double worst_block = 0.0;
  double worst_psd = 0.0;
  double worst_bartlett = 0.0;
  const ModelFunction se = models::saturating_exponential();
  for (int k = 0; k < opts.random_fixtures; ++k) {
    Vector th(3);
    th << 1e3 + 1e5 * u(rng), 20.0 + 200.0 * u(rng), 100.0 + 900.0 * u(rng);
    std::vector<double> xs;
    const int n = 6 + static_cast<int>(20 * u(rng));
    for (int i = 0; i < n; ++i) xs.push_back(1000.0 * u(rng));
    const double sigma = 0.005 + 0.15 * u(rng);
    try {
      const JacobianBundle b = build_jacobian_bundle(se, xs, th);
      const Matrix exact = cov_ml_exact(b, sigma).cov;
      worst_unreduced = std::max(worst_unreduced, linalg::relative_difference(exact, cov_ml_unreduced(b, sigma)));
      worst_block = std::max(worst_block, linalg::relative_difference(exact, cov_ml_full(b, sigma).topLeftCorner(3, 3)));
      const Matrix o2 = cov_order2(b, sigma).cov;
      const Matrix diff = detail::correlation_scaled(o2 - exact, o2.diagonal());
      worst_psd = std::max(worst_psd, -linalg::min_eigenvalue(diff));
      worst_bartlett = std::max(worst_bartlett, linalg::relative_difference(ml_score_variance_normal(b, sigma),
                                                                            ml_expected_information(b, sigma)));
    } catch (const Error& e) {
      out.push_back({"identity/random_fixture_" + std::to_string(k), false, NAN, 0.0, e.what()});
    }
  }
  out.push_back(detail::item("identity/ml_exact_vs_unreduced", worst_unreduced, 1e-10));
  out.push_back(detail::item("identity/ml_full_upper_block", worst_block, 1e-10));
  out.push_back(detail::item("identity/score_variance_vs_information", worst_bartlett, 1e-10));
  out.push_back(detail::item("covariance/order2_minus_ml_exact_psd", std::max(0.0, worst_psd), 1e-10,
                             "most negative scaled eigenvalue " + std::to_string(-worst_psd)));

  for (const auto& fx : fixtures) {
    if (fx.model.name() != "saturating_exponential" && fx.model.name() != "exponential") continue;
    const JacobianBundle b = build_jacobian_bundle(fx.model, fx.xs, fx.theta);
    const FactorizationCheck fc = check_theta1_factorization(b, fx.theta);
    double off = 0.0;
    for (Index j = 1; j < fc.v.size(); ++j) off = std::max(off, std::abs(fc.v(j)) / std::abs(fx.theta(0)));
    out.push_back(detail::item("factorization/scale_direction/" + fx.name, std::max(off, std::abs(fc.v(0) / fx.theta(0) - 1.0)),
                               1e-8));
    out.push_back(detail::item("factorization/ml_equals_wls_shape/" + fx.name, fc.ml_wls_max_rel_diff, 1e-10));
    for (Method m : {Method::wls, Method::dwls}) {
      const LimitDistribution ld = limit_distribution(m, b, fx.sigma);
      const Vector via_limit = ld.mean_shift * fx.sigma / std::sqrt(static_cast<double>(b.n()));
      out.push_back(detail::item("limit/mean_shift_vs_bias/" + std::string(method_name(m)) + "/" + fx.name,
                                 linalg::relative_difference(via_limit, bias_vector(m, b, fx.sigma)), 1e-10));
    }
  }

  {
    const double gamma = solve_gamma(pb, ref).gamma;
    const Vector grad = gamma_gradient(pb, ref, gamma);
    const Matrix hess = gamma_hessian(pb, ref, gamma);
    const std::pair<double, double> bracket{-120.0, 0.0};
    const RootOptions tight{256, 1e-15};
    double worst_g = 0.0;
    double worst_h = 0.0;
    Matrix hfd(ref.size(), ref.size());
    for (Index j = 0; j < ref.size(); ++j) {
      const double h = 1e-5 * std::abs(ref(j));
      Vector tp = ref;
      Vector tm = ref;
      tp(j) += h;
      tm(j) -= h;
      const double gp = solve_gamma(pb, tp, bracket, tight).gamma;
      const double gm = solve_gamma(pb, tm, bracket, tight).gamma;
      const double fd = (gp - gm) / (2.0 * h);
      worst_g = std::max(worst_g, std::abs(fd - grad(j)) / std::max(std::abs(grad(j)), 1e-300));
      hfd.col(j) = (gamma_gradient(pb, tp, gp) - gamma_gradient(pb, tm, gm)) / (2.0 * h);
    }
    worst_h = linalg::relative_difference(linalg::symmetrize(hfd), hess);
    out.push_back(detail::item("gamma/gradient_vs_resolve", worst_g, 1e-4));
    out.push_back(detail::item("gamma/hessian_vs_gradient_differences", worst_h, 1e-4));
  }

  {
    const Dataset d = Dataset::from_xy(std::vector<double>{0, 0, 0}, std::vector<double>{1, 2, 3});
    const ModelFunction c = models::constant();
    FitOptions fo;
    fo.start = (Vector(1) << 1.5).finished();
    const double targets[] = {2.0, 2.0, 14.0 / 6.0, 66.0 / 49.0};
    const Method ms[] = {Method::ml, Method::ql, Method::wls, Method::dwls};
    double worst = 0.0;
    for (int i = 0; i < 4; ++i) worst = std::max(worst, std::abs(fit(ms[i], c, d, fo).theta_hat(0) - targets[i]) / targets[i]);
    out.push_back(detail::item("estimators/constant_closed_forms", worst, 1e-8));
  }
  return out;
}

[[nodiscard]] inline bool all_passed(const std::vector<CheckItem>& items) {
  for (const auto& i : items) {
    if (!i.passed) return false;
  }
  return true;
}

}  // namespace propfit
