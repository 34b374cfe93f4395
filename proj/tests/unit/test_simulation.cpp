#include <catch_amalgamated.hpp>

#include <cmath>

#include "propfit/simulation.hpp"

using namespace propfit;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

SimDesign small_exponential() {
  SimDesign d = single_curve_design(models::exponential_decay(), {0.5, 1, 2, 3, 5, 8}, (Vector(2) << 2.0, 3.0).finished());
  d.sigmas = {0.02, 0.05};
  d.replicates = 300;
  d.seed = 99;
  return d;
}

bool same(const SimSummary& a, const SimSummary& b) {
  if (a.cells.size() != b.cells.size()) return false;
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    const SimCell& p = a.cells[i];
    const SimCell& q = b.cells[i];
    if (p.B_s != q.B_s || p.mc_se != q.mc_se || p.sd != q.sd || p.R_effective != q.R_effective ||
        p.failure_count != q.failure_count || p.rejected_count != q.rejected_count) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("replicate streams depend only on seed, sigma index and replicate index", "[simulation]") {
  auto a = replicate_engine(5, 1, 17);
  auto b = replicate_engine(5, 1, 17);
  auto c = replicate_engine(5, 2, 17);
  auto d = replicate_engine(5, 1, 18);
  const auto va = a();
  CHECK(va == b());
  CHECK(va != c());
  CHECK(va != d());
}

TEST_CASE("study results do not depend on the thread count", "[simulation]") {
  const SimDesign d = small_exponential();
  const SimSummary one = run_study(d, 1);
  const SimSummary four = run_study(d, 4);
  CHECK(same(one, four));
}

TEST_CASE("replicate accounting", "[simulation]") {
  SimDesign d = small_exponential();
  d.sigmas = {0.45};  // large enough to reject some replicates
  const SimSummary s = run_study(d, 1);
  for (const auto& c : s.cells) CHECK(c.R_effective + c.failure_count + c.rejected_count == d.replicates);
  CHECK(s.cells.front().rejected_count > 0);
}

TEST_CASE("formula bias agrees with the constant-model closed form", "[simulation]") {
  SimDesign d = single_curve_design(models::constant(), std::vector<double>(20, 0.0), (Vector(1) << 100.0).finished());
  const auto wls = formula_bias(d, Method::wls, 0.02);
  CHECK_THAT(wls[0], WithinRel(0.038, 1e-12));
  CHECK_THAT(formula_bias(d, Method::dwls, 0.02)[0], WithinRel(-0.076, 1e-12));
}

TEST_CASE("antithetic pairs make odd-order noise cancel", "[simulation]") {
  // For the constant model QL is the sample mean, so paired replicates give B_s = 0 exactly.
  SimDesign d = single_curve_design(models::constant(), std::vector<double>(10, 0.0), (Vector(1) << 50.0).finished());
  d.sigmas = {0.05};
  d.replicates = 200;
  d.methods = {Method::ql};
  d.antithetic = true;
  const SimSummary s = run_study(d, 1);
  CHECK_THAT(s.cells[0].B_s, WithinAbs(0.0, 1e-10));
  CHECK(s.antithetic);
}

TEST_CASE("partial-bleach design tracks gamma", "[simulation]") {
  SimDesign d = partial_bleach_design();
  d.sigmas = {0.02};
  d.replicates = 40;
  d.antithetic = true;
  const SimSummary s = run_study(d, 1);
  REQUIRE(s.quantities.back() == "gamma");
  const std::size_t g = s.quantity_index("gamma");
  CHECK_THAT(s.truth[g], WithinAbs(-87.45, 1e-6));
  for (std::size_t mi = 0; mi < s.methods.size(); ++mi) {
    const SimCell& c = s.at(mi, 0, g);
    CHECK(c.R_effective == 40);
    CHECK(c.B_T < 0.0);
    CHECK(c.sd > 0.0);
  }
  const BiasTable t = compare_bias_table(s);
  CHECK(t.quantity == "gamma");
  CHECK(t.rows.size() == 1);
  CHECK(render_text(t).find("DWLS") != std::string::npos);
}

TEST_CASE("design validation", "[simulation]") {
  SimDesign d = small_exponential();
  d.replicates = 0;
  CHECK_THROWS_AS(d.validate(), InputError);
  d = small_exponential();
  d.grids[0].resize(2);
  CHECK_THROWS_AS(d.validate(), InputError);
  d = small_exponential();
  d.track_gamma = true;
  CHECK_THROWS_AS(d.validate(), InputError);
}
