#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "propfit/asymptotics.hpp"
#include "propfit/estimators.hpp"

using namespace propfit;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("constant-model biases", "[asymptotics]") {
  // WLS: theta sigma^2 (1 - 1/n), DWLS: twice that with opposite sign, ML and QL: zero.
  const std::vector<double> xs(20, 0.0);
  const Vector th = (Vector(1) << 100.0).finished();
  const JacobianBundle b = build_jacobian_bundle(models::constant(), xs, th);
  const double s = 0.02;
  const double wls = 100.0 * s * s * (1.0 - 1.0 / 20.0);
  CHECK_THAT(bias_vector(Method::wls, b, s)(0), WithinRel(wls, 1e-12));
  CHECK_THAT(bias_vector(Method::dwls, b, s)(0), WithinRel(-2.0 * wls, 1e-12));
  CHECK_THAT(bias_vector(Method::ml, b, s)(0), WithinAbs(0.0, 1e-12));
  CHECK_THAT(bias_vector(Method::ql, b, s)(0), WithinAbs(0.0, 1e-12));
  CHECK_THAT(cov_order2(b, s).cov(0, 0), WithinRel(100.0 * 100.0 * s * s / 20.0, 1e-12));
}

TEST_CASE("ML covariance identities", "[asymptotics]") {
  const ModelFunction m = models::saturating_exponential();
  const Vector a = (Vector(3) << 5e4, 80.0, 300.0).finished();
  const std::vector<double> xs{0, 25, 50, 100, 150, 250, 400, 700, 900};
  const JacobianBundle b = build_jacobian_bundle(m, xs, a);
  const double s = 0.07;
  const Matrix exact = cov_ml_exact(b, s).cov;
  CHECK(linalg::relative_difference(exact, cov_ml_unreduced(b, s)) < 1e-10);
  CHECK(linalg::relative_difference(exact, cov_ml_full(b, s).topLeftCorner(3, 3)) < 1e-10);
  CHECK(linalg::is_psd(cov_order2(b, s).cov - exact, 1e-12));
  CHECK(linalg::relative_difference(ml_score_variance_normal(b, s), ml_expected_information(b, s)) < 1e-10);
}

TEST_CASE("factorized models put (J'J)^-1 sum J on the scale axis", "[asymptotics]") {
  const ModelFunction m = models::saturating_exponential();
  const Vector a = (Vector(3) << 142853.0, 123.182, 393.065).finished();
  const std::vector<double> xs{0, 50, 100, 200, 400, 600, 800, 1000};
  const FactorizationCheck fc = check_theta1_factorization(build_jacobian_bundle(m, xs, a), a);
  CHECK(fc.factorized);
  CHECK_THAT(fc.v(0), WithinRel(a(0), 1e-10));
  CHECK(std::abs(fc.v(1)) < 1e-8 * a(0));
  CHECK(std::abs(fc.v(2)) < 1e-8 * a(0));
  CHECK(fc.ml_wls_max_rel_diff < 1e-10);

  const FactorizationCheck lin =
      check_theta1_factorization(build_jacobian_bundle(models::linear(), xs, (Vector(2) << 1.0, 0.5).finished()),
                                 (Vector(2) << 1.0, 0.5).finished());
  CHECK_FALSE(lin.factorized);
}

TEST_CASE("limit distribution mean shift reproduces the bias", "[asymptotics]") {
  const std::vector<double> xs{1, 2, 4, 5, 7, 9};
  const Vector t = (Vector(2) << 2.0, 3.0).finished();
  const JacobianBundle b = build_jacobian_bundle(models::exponential_decay(), xs, t);
  for (Method m : {Method::wls, Method::dwls}) {
    const LimitDistribution ld = limit_distribution(m, b, 0.05);
    const Vector via = ld.mean_shift * 0.05 / std::sqrt(6.0);
    CHECK(linalg::relative_difference(via, bias_vector(m, b, 0.05)) < 1e-10);
  }
}

TEST_CASE("sandwich covariance matches Monte Carlo under misspecified variance", "[asymptotics]") {
  // Constant-variance noise instead of proportional noise; QL is still consistent.
  const ModelFunction m = models::linear();
  const Vector t = (Vector(2) << 10.0, 2.0).finished();
  std::vector<double> xs;
  for (int i = 0; i < 25; ++i) xs.push_back(0.4 * i);
  std::vector<double> var(xs.size(), 0.15 * 0.15);
  const Matrix sandwich = cov_ql_sandwich(build_jacobian_bundle(m, xs, t), var).cov;

  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n01;
  const int R = 20000;
  Matrix acc = Matrix::Zero(2, 2);
  Vector mean = Vector::Zero(2);
  std::vector<Vector> est;
  est.reserve(R);
  FitOptions o;
  o.start = t;
  for (int r = 0; r < R; ++r) {
    std::vector<double> ys;
    for (double x : xs) ys.push_back(m.value(x, t) + 0.15 * n01(rng));
    est.push_back(fit_ql(m, Dataset::from_xy(xs, ys), o).theta_hat);
    mean += est.back();
  }
  mean /= R;
  for (const auto& e : est) acc += (e - mean) * (e - mean).transpose();
  acc /= (R - 1);
  CHECK_THAT(acc(0, 0), WithinRel(sandwich(0, 0), 0.10));
  CHECK_THAT(acc(1, 1), WithinRel(sandwich(1, 1), 0.10));
  CHECK_THAT(acc(0, 1), WithinRel(sandwich(0, 1), 0.10));
}
