#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "propfit/jacobian.hpp"
#include "propfit/linalg.hpp"
#include "propfit/model.hpp"

using namespace propfit;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("exponential J rows are the scaled gradient", "[model]") {
  const ModelFunction m = models::exponential_decay();
  const Vector theta = (Vector(2) << 2.0, 3.0).finished();
  const std::vector<double> xs{1.0, 2.0, 4.0};
  const JacobianBundle b = build_jacobian_bundle(m, xs, theta);
  REQUIRE(b.n() == 3);
  REQUIRE(b.p() == 2);
  // grad f / f = (1/theta1, x/theta2^2)
  for (Index i = 0; i < 3; ++i) {
    CHECK_THAT(b.J(i, 0), WithinRel(0.5, 1e-14));
    CHECK_THAT(b.J(i, 1), WithinRel(xs[static_cast<std::size_t>(i)] / 9.0, 1e-14));
  }
  CHECK_THAT(b.w1.sum(), WithinAbs(2.0, 1e-12));
  CHECK_THAT(b.Jbar(1), WithinRel(7.0 / 27.0, 1e-14));
}

TEST_CASE("saturating exponential value and gradient", "[model]") {
  const ModelFunction m = models::saturating_exponential();
  const Vector a = (Vector(3) << 1.0, 0.5, 2.0).finished();
  const double e = std::exp(-0.75);
  CHECK_THAT(m.value(1.0, a), WithinRel(1.0 - e, 1e-15));
  const Vector g = m.gradient(1.0, a);
  CHECK_THAT(g(0), WithinRel(1.0 - e, 1e-14));
  CHECK_THAT(g(1), WithinRel(e / 2.0, 1e-14));
  CHECK_THAT(g(2), WithinRel(-1.5 * e / 4.0, 1e-14));
  CHECK_THAT(m.dfdx(1.0, a), WithinRel(e / 2.0, 1e-14));
}

TEST_CASE("analytic derivatives agree with finite differences", "[model]") {
  const std::vector<double> xs{0.0, 50.0, 200.0, 600.0, 1000.0};
  const Vector a = (Vector(3) << 142853.0, 123.182, 393.065).finished();
  const FdCheckReport r = fd_check(models::saturating_exponential(), a, xs);
  CHECK(r.max_gradient_error < 1e-7);
  CHECK(r.max_hessian_error < 1e-5);

  const Vector lin = (Vector(2) << 1.0, 0.5).finished();
  const FdCheckReport rl = fd_check(models::linear(), lin, xs);
  CHECK(rl.max_gradient_error < 1e-8);
  CHECK(rl.max_hessian_error < 1e-5);
}

TEST_CASE("finite-difference fallback when no gradient is supplied", "[model]") {
  ModelFunction::Spec s;
  s.name = "power";
  s.p = 2;
  s.value = [](double x, const Vector& t) { return t(0) * std::pow(x, t(1)); };
  const ModelFunction m(s);
  REQUIRE_FALSE(m.has_analytic_gradient());
  const Vector t = (Vector(2) << 3.0, 0.7).finished();
  const Vector g = m.gradient(2.0, t);
  CHECK_THAT(g(0), WithinRel(std::pow(2.0, 0.7), 1e-8));
  CHECK_THAT(g(1), WithinRel(3.0 * std::pow(2.0, 0.7) * std::log(2.0), 1e-8));
  const Matrix h = m.hessian(2.0, t);
  CHECK_THAT(h(1, 1), WithinRel(3.0 * std::pow(2.0, 0.7) * std::pow(std::log(2.0), 2), 1e-5));
}

TEST_CASE("hat-trace equals p for a two-curve stacked design", "[model]") {
  const ModelFunction m = models::saturating_exponential();
  const std::vector<double> g1{0, 50, 100, 200, 400, 800};
  const std::vector<double> g2{0, 100, 200, 400, 600, 1000};
  const std::array<CurveDesign, 2> cd{CurveDesign{&m, g1}, CurveDesign{&m, g2}};
  const Vector theta = (Vector(6) << 1e5, 120.0, 400.0, 8e4, 190.0, 750.0).finished();
  const JacobianBundle b = build_jacobian_bundle(std::span<const CurveDesign>(cd), theta);
  CHECK(b.p() == 6);
  CHECK_THAT(b.w1.sum(), WithinAbs(6.0, 1e-10));
  // rows of curve 1 have zero entries in the beta block
  CHECK(b.J.block(0, 3, 6, 3).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("singular designs and domain errors are reported", "[model]") {
  const ModelFunction m = models::exponential_decay();
  const std::vector<double> same{1.0, 1.0, 1.0};
  CHECK_THROWS_AS(build_jacobian_bundle(m, same, (Vector(2) << 2.0, 3.0).finished()), SingularError);
  CHECK_THROWS_AS(m.value(1.0, (Vector(2) << 2.0, 0.0).finished()), DomainError);
  CHECK_THROWS_AS(m.value(1.0, (Vector(1) << 2.0).finished()), DomainError);
  const std::vector<double> zero{0.0, 1.0};
  CHECK_THROWS_AS(build_jacobian_bundle(models::linear(), zero, (Vector(2) << 0.0, 1.0).finished()), ZeroMeanError);
}

TEST_CASE("registry builds the bundled models", "[model]") {
  const ModelRegistry r = ModelRegistry::builtin();
  for (const auto& n : r.names()) {
    const ModelFunction m = r.make(n);
    CHECK(m.p() == r.parameter_count(n));
  }
  CHECK_THROWS_AS(r.make("saturating_exponential", 2), DomainError);
  CHECK_THROWS_AS(r.make("nope"), DomainError);
  const ModelFunction s = r.make("scaled_shape", -1, {{"shape_offset", 50.0}, {"shape_scale", 300.0}});
  CHECK_THAT(s.value(250.0, (Vector(1) << 2.0).finished()), WithinRel(2.0 * (1.0 - std::exp(-1.0)), 1e-14));
}

TEST_CASE("dataset rejects malformed input", "[model]") {
  CHECK_THROWS_AS(Dataset(std::vector<Observation>{}), DataError);
  CHECK_THROWS_AS(Dataset(std::vector<Observation>{{1.0, NAN}}), DataError);
  const std::vector<double> xs{1.0, 2.0};
  const std::vector<double> ys{1.0};
  CHECK_THROWS_AS(Dataset::from_xy(xs, ys), DataError);
}

TEST_CASE("spd inverse and psd helpers", "[model]") {
  Matrix a(2, 2);
  a << 4.0, 1.0, 1.0, 3.0;
  const Matrix inv = linalg::spd_inverse(a);
  CHECK(linalg::relative_difference(inv * a, Matrix::Identity(2, 2)) < 1e-14);
  CHECK(linalg::is_psd(a));
  Matrix b(2, 2);
  b << 1.0, 2.0, 2.0, 1.0;
  CHECK_FALSE(linalg::is_psd(b));
}
