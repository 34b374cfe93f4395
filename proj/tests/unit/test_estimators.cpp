#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "propfit/equivalent_dose.hpp"
#include "propfit/estimators.hpp"
#include "propfit/simulation.hpp"

using namespace propfit;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Dataset constant_data() {
  const std::vector<double> xs{0, 0, 0};
  const std::vector<double> ys{1, 2, 3};
  return Dataset::from_xy(xs, ys);
}

FitOptions start_at(double v) {
  FitOptions o;
  o.start = (Vector(1) << v).finished();
  return o;
}

}  // namespace

TEST_CASE("constant model closed forms", "[estimators]") {
  const ModelFunction c = models::constant();
  const Dataset d = constant_data();
  // QL: mean y. WLS: sum y^2 / sum y. DWLS: sum(1/y) / sum(1/y^2). ML: root of the profiled equation.
  CHECK_THAT(fit_ql(c, d, start_at(1.0)).theta_hat(0), WithinRel(2.0, 1e-10));
  CHECK_THAT(fit_wls(c, d, start_at(1.0)).theta_hat(0), WithinRel(14.0 / 6.0, 1e-10));
  CHECK_THAT(fit_dwls(c, d, start_at(1.0)).theta_hat(0), WithinRel(66.0 / 49.0, 1e-10));
  const FitResult ml = fit_ml(c, d, start_at(1.5));
  CHECK(ml.converged);
  CHECK_THAT(ml.theta_hat(0), WithinRel(2.0, 1e-10));
  CHECK_THAT(ml.sigma_hat, WithinRel(std::sqrt(1.0 / 6.0), 1e-10));
  const FitResult ql = fit_ql(c, d, start_at(1.0));
  CHECK_THAT(ql.sigma_hat, WithinRel(0.5, 1e-10));
}

TEST_CASE("fits report convergence on the unscaled equation", "[estimators]") {
  const ModelFunction m = models::saturating_exponential();
  const Vector a = (Vector(3) << 142853.0, 123.182, 393.065).finished();
  const auto xs = default_unbleached_grid();
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01;
  std::vector<double> ys;
  for (double x : xs) ys.push_back(m.value(x, a) * (1.0 + 0.03 * n01(rng)));
  const Dataset d = Dataset::from_xy(xs, ys);
  for (Method meth : kAllMethods) {
    const FitResult r = fit(meth, m, d);
    INFO(method_name(meth) << ": " << r.message);
    CHECK(r.converged);
    CHECK(r.residual_norm <= r.tolerance);
    CHECK(r.iterations < 50);
    CHECK(equation_residual(meth, m, d, r.theta_hat).cwiseAbs().maxCoeff() <= r.tolerance);
    CHECK(std::abs(r.theta_hat(1) - a(1)) < 0.5 * a(1));
  }
}

TEST_CASE("noise-free data are recovered exactly by every method", "[estimators]") {
  const ModelFunction m = models::exponential_decay();
  const Vector t = (Vector(2) << 2.0, 3.0).finished();
  const std::vector<double> xs{0.5, 1, 2, 3, 5, 8};
  std::vector<double> ys;
  for (double x : xs) ys.push_back(m.value(x, t));
  const Dataset d = Dataset::from_xy(xs, ys);
  for (Method meth : kAllMethods) {
    const FitResult r = fit(meth, m, d);
    CHECK(r.converged);
    CHECK(linalg::relative_difference(r.theta_hat, t) < 1e-8);
  }
}

TEST_CASE("DWLS rejects non-positive responses", "[estimators]") {
  const std::vector<double> xs{0, 0, 0};
  const std::vector<double> ys{1, 0, 3};
  CHECK_THROWS_AS(fit_dwls(models::constant(), Dataset::from_xy(xs, ys)), ZeroResponseError);
}

TEST_CASE("method names round-trip", "[estimators]") {
  for (Method m : kAllMethods) CHECK(parse_method(method_name(m)) == m);
  CHECK(parse_method("ML") == Method::ml);
  CHECK_THROWS(parse_method("ols"));
}

TEST_CASE("two-curve modes", "[estimators]") {
  const PartialBleachModel pb;
  const Vector theta = reference_theta();
  const auto g1 = default_unbleached_grid();
  const auto g2 = default_bleached_grid();
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01;
  std::vector<double> y1;
  std::vector<double> y2;
  for (double x : g1) y1.push_back(pb.unbleached.value(x, pb.alpha(theta)) * (1.0 + 0.01 * n01(rng)));
  for (double x : g2) y2.push_back(pb.bleached.value(x, pb.beta(theta)) * (1.0 + 0.08 * n01(rng)));
  const Dataset d1 = Dataset::from_xy(g1, y1);
  const Dataset d2 = Dataset::from_xy(g2, y2);
  FitOptions o;
  o.start = theta;

  SECTION("QL and WLS do not depend on fixed sigmas") {
    for (Method m : {Method::ql, Method::wls}) {
      const FitResult sep = fit_two_curves(pb, d1, d2, m, FitMode::separate, o);
      FitOptions of = o;
      of.fixed_sigmas = {0.01, 0.08};
      const FitResult fix = fit_two_curves(pb, d1, d2, m, FitMode::fixed_sigma, of);
      CHECK(linalg::relative_difference(sep.theta_hat, fix.theta_hat) < 1e-8);
    }
  }
  SECTION("ML common sigma differs from separate sigmas under unequal noise") {
    const FitResult sep = fit_two_curves(pb, d1, d2, Method::ml, FitMode::separate, o);
    const FitResult com = fit_two_curves(pb, d1, d2, Method::ml, FitMode::common_sigma, o);
    REQUIRE(sep.converged);
    REQUIRE(com.converged);
    CHECK(linalg::relative_difference(sep.theta_hat, com.theta_hat) > 1e-6);
    REQUIRE(sep.curve_sigmas.size() == 2);
    CHECK(sep.curve_sigmas[1] > sep.curve_sigmas[0]);
  }
  SECTION("invalid mode combinations") {
    CHECK_THROWS_AS(fit_two_curves(pb, d1, d2, Method::dwls, FitMode::common_sigma, o), ModeError);
    CHECK_THROWS_AS(fit_two_curves(pb, d1, d2, Method::ml, FitMode::fixed_sigma, o), ModeError);
    CHECK_THROWS_AS(fit_two_curves(pb, d1, d2, Method::ql, FitMode::fixed_sigma, o), InputError);
  }
}
