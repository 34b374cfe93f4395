#include <catch_amalgamated.hpp>

#include <string>

#include "propfit/check.hpp"
#include "propfit/io/config.hpp"
#include "propfit/io/csv.hpp"
#include "propfit/io/report.hpp"

using namespace propfit;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("CSV parsing", "[io]") {
  SECTION("two curves, any column order, CRLF and BOM") {
    const io::InputTable t = io::parse_csv("\xEF\xBB\xBFy,curve,x\r\n10.5,N,0\r\n\r\n12,B,50\r\n11,N,100\r\n");
    REQUIRE(t.rows.size() == 3);
    CHECK(t.has_curve_column);
    CHECK(t.labels() == std::vector<std::string>{"N", "B"});
    const auto curves = t.curves();
    CHECK(curves[0].size() == 2);
    CHECK(curves[0][1].x == 100.0);
    CHECK(curves[1][0].y == 12.0);
  }
  SECTION("single curve without label column") {
    const io::InputTable t = io::parse_csv("x,y\n1,2\n3,4");
    CHECK_FALSE(t.has_curve_column);
    CHECK(t.labels() == std::vector<std::string>{"1"});
  }
  SECTION("malformed input") {
    CHECK_THROWS_AS(io::parse_csv(""), InputError);
    CHECK_THROWS_AS(io::parse_csv("x,y\n"), InputError);
    CHECK_THROWS_AS(io::parse_csv("x,z\n1,2\n"), InputError);
    CHECK_THROWS_AS(io::parse_csv("x,x,y\n1,2,3\n"), InputError);
    CHECK_THROWS_AS(io::parse_csv("x,y\n1\n"), InputError);
    CHECK_THROWS_AS(io::parse_csv("x,y\n1,nan\n"), InputError);
    CHECK_THROWS_WITH(io::parse_csv("x,y\n1,2\n3,abc\n"), ContainsSubstring("line 3"));
  }
}

TEST_CASE("CSV round trip is exact", "[io]") {
  const std::vector<double> xs{0.1, 1.0 / 3.0, 1e-300};
  const std::vector<double> ys{142853.123456789, 2.0 / 7.0, 6.02214076e23};
  const io::InputTable t = io::make_table({{"N", Dataset::from_xy(xs, ys)}, {"B", Dataset::from_xy(ys, xs)}});
  CHECK(io::parse_csv(io::write_csv(t)) == t);
}

TEST_CASE("config parsing is strict", "[io]") {
  const io::RunConfig c = io::parse_config_text(R"({
    "model": {"name": "exponential"},
    "methods": ["ql", "dwls"],
    "fit": {"tol_rel": 1e-9, "max_iter": 50, "start": [2, 3]},
    "fit_mode": "separate",
    "output": {"format": "json"}
  })");
  CHECK(c.model == "exponential");
  CHECK(c.methods == std::vector<Method>{Method::ql, Method::dwls});
  CHECK(c.fit.tol_rel == 1e-9);
  CHECK(c.fit.max_iter == 50);
  REQUIRE(c.fit.start);
  CHECK((*c.fit.start)(1) == 3.0);
  CHECK(c.fit_mode == io::SigmaMode::separate);
  CHECK(c.format == io::OutputFormat::json);

  CHECK_THROWS_WITH(io::parse_config_text(R"({"modle": {}})"), ContainsSubstring("unknown key 'modle'"));
  CHECK_THROWS_AS(io::parse_config_text(R"({"fit": {"tol": 1}})"), InputError);
  CHECK_THROWS_AS(io::parse_config_text(R"({"methods": ["ols"]})"), Error);
  CHECK_THROWS_AS(io::parse_config_text(R"({"simulation": {"replicates": 0}})"), InputError);
  CHECK_THROWS_AS(io::parse_config_text(R"({"simulation": {"seed": -1}})"), InputError);
  CHECK_THROWS_AS(io::parse_config_text("{"), InputError);
}

TEST_CASE("simulation designs from config", "[io]") {
  const io::RunConfig pb = io::parse_config_text(R"({"simulation": {"sigmas": [0.02], "replicates": 10}})");
  const SimDesign d = io::design_from_config(pb);
  CHECK(d.curves.size() == 2);
  CHECK(d.track_gamma);
  CHECK(d.antithetic);
  CHECK(d.replicates == 10);

  const io::RunConfig sc = io::parse_config_text(R"({
    "model": {"name": "linear"},
    "simulation": {"design": "single_curve", "theta0": [1, 0.5], "grid1": [0, 1, 2, 3]}
  })");
  const SimDesign d1 = io::design_from_config(sc);
  CHECK(d1.curves.size() == 1);
  CHECK_FALSE(d1.antithetic);

  const io::RunConfig bad = io::parse_config_text(R"({"model": {"name": "linear"}, "simulation": {"design": "single_curve"}})");
  CHECK_THROWS_AS(io::design_from_config(bad), InputError);
}

TEST_CASE("fit report for the constant model", "[io]") {
  const std::vector<double> xs{0, 0, 0};
  const std::vector<double> ys{1, 2, 3};
  io::FitRequest req(models::constant());
  req.labels = {"1"};
  req.curves = {Dataset::from_xy(xs, ys)};
  req.methods = {Method::ql, Method::ml};
  req.sigma_mode = io::SigmaMode::separate;
  const io::FitReport rep = io::build_fit_report(req);
  REQUIRE(rep.methods.size() == 2);
  CHECK(rep.any_converged());
  CHECK_THAT(rep.methods[0].rows[0].estimate, WithinRel(2.0, 1e-10));
  CHECK_THAT(rep.methods[0].sigma, WithinRel(0.5, 1e-10));
  const io::json j = io::to_json(rep);
  CHECK(j["kind"] == "fit");
  CHECK(j["methods"][0]["method"] == "QL");
  CHECK(j["methods"][0]["parameters"][0]["name"] == "theta1");
  CHECK_THAT(io::render_text(rep), ContainsSubstring("Estimate"));
}

TEST_CASE("JSON numbers carry twelve significant digits", "[io]") {
  CHECK(io::sig12(1.0 / 3.0) == 0.333333333333);
  CHECK(io::number(NAN).is_null());
}

TEST_CASE("self-check suite", "[io]") {
  const auto items = run_checks();
  for (const auto& i : items) {
    INFO(i.name << " measured " << i.measured);
    CHECK(i.passed);
  }
  CheckOptions neg;
  neg.inject_wrong_gradient = true;
  neg.random_fixtures = 2;
  const auto bad = run_checks(neg);
  CHECK_FALSE(all_passed(bad));
}
