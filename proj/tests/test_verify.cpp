#include <doctest.h>

#include "mvldp/models.hpp"
#include "mvldp/skeleton.hpp"
#include "mvldp/verify.hpp"

#include <cmath>

using namespace mvldp;
using namespace mvldp::verify;

namespace {

Vector scalar(double v) { return Vector::Constant(1, v); }

CheckConfig small(std::size_t n, std::uint64_t seed = 11) {
  CheckConfig c;
  c.particles = n;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("MdpSpeed validation") {
  const MdpSpeed ok{0.25, 1.0};
  CHECK(ok.speed(1e-2) == doctest::Approx(0.1));
  CHECK_NOTHROW(ok.validate({1e-2, 4e-3, 1e-3}));
  CHECK_THROWS_AS((MdpSpeed{0.6, 1.0}.validate({1e-2, 1e-3})), Error);
  CHECK_THROWS_AS((MdpSpeed{0.0, 1.0}.validate({1e-2, 1e-3})), Error);
}

TEST_CASE("eps lists must be decreasing and long enough") {
  const auto spec = models::make_builtin("example11");
  const auto grid = TimeGrid::uniform(1.0, 20);
  const rate::EventSpec ev = rate::HalfspaceTerminal{scalar(1.0), 3.0};
  CHECK_THROWS_AS(check_ldp(spec, ev, {0.1, 0.2, 0.05}, grid, small(10)), Error);
  CHECK_THROWS_AS(check_ldp(spec, ev, {0.2, 0.1}, grid, small(10)), Error);
}

TEST_CASE("typical event has rate zero") {
  const auto spec = models::make_builtin("example11");
  const auto grid = TimeGrid::uniform(1.0, 100);
  const auto x0 = skeleton::solve_limit_ode(spec, grid);
  const auto r = check_ldp(spec, rate::PinTerminal{x0.terminal(), 0.5}, {0.2, 0.1, 0.05}, grid,
                           small(2000));
  CHECK(r.reference == 0.0);
  CHECK(r.method.find("(s/2)") == std::string::npos);
  CHECK(std::abs(r.fitted) <= r.tolerance);
  CHECK(r.pass);
  for (const auto& p : r.points) CHECK(p.statistic_se >= 0.0);
}

TEST_CASE("censored points are flagged and all-censored is inconclusive") {
  const auto spec = models::make_builtin("example11");
  const auto grid = TimeGrid::uniform(1.0, 50);
  auto cfg = small(200);
  cfg.reference = 1.0;
  const auto r = check_ldp(spec, rate::HalfspaceTerminal{scalar(1.0), 10.0}, {0.2, 0.1, 0.05},
                           grid, cfg);
  CHECK(r.inconclusive);
  CHECK_FALSE(r.pass);
  for (const auto& p : r.points) CHECK(p.censored);
  CHECK(to_json(r)["inconclusive"].get<bool>());
}

TEST_CASE("median MDP event has statistic near zero") {
  const auto spec = models::make_builtin("example11");
  const auto grid = TimeGrid::uniform(1.0, 100);
  const auto r = check_mdp(spec, rate::HalfspaceTerminal{scalar(1.0), 0.0}, {1e-2, 4e-3, 1e-3},
                           {0.25, 1.0}, grid, small(4000));
  CHECK(r.reference == 0.0);
  CHECK(std::abs(r.fitted) <= 0.02);
}

TEST_CASE("deterministic model has a degenerate fluctuation") {
  const auto spec = models::model_from_json(nlohmann::json::parse(R"({
    "model": "polynomial", "dim": 1, "initial": [1.0],
    "coefficients": {"drift": [[{"c": -1.0, "x": [1]}]]}
  })"));
  const auto grid = TimeGrid::uniform(1.0, 50);
  const auto r = check_mdp(spec, rate::PinTerminal{scalar(0.0), 1e-6}, {1e-2, 4e-3, 1e-3},
                           {0.25, 1.0}, grid, small(100));
  for (const auto& p : r.points) {
    CHECK(p.hits == p.samples);
    CHECK(p.statistic == 0.0);
  }
  CHECK(r.pass);
}

TEST_CASE("limit convergence slope with a drift perturbation") {
  nlohmann::json p;
  p["perturbation"] = {{"drift", {{"coef", 1.0}, {"power", 0.5}}}};
  const auto spec = models::make_builtin("example11", p);
  const auto grid = TimeGrid::uniform(1.0, 200);
  const auto r = check_limit_convergence(spec, {0.2, 0.1, 0.05, 0.025}, grid, small(2000));
  CHECK(r.pass);
  CHECK(std::abs(r.fitted - 1.0) <= 0.2);
}

TEST_CASE("limit convergence estimate stabilizes with N") {
  const auto spec = models::make_builtin("example11");
  const auto grid = TimeGrid::uniform(1.0, 100);
  const auto a = check_limit_convergence(spec, {0.1, 0.05}, grid, small(500, 1));
  const auto b = check_limit_convergence(spec, {0.1, 0.05}, grid, small(8000, 1));
  CHECK(b.points[0].value_se < 0.5 * a.points[0].value_se);
  CHECK(std::abs(a.points[0].value - b.points[0].value) <
        4.0 * std::hypot(a.points[0].value_se, b.points[0].value_se));
}

TEST_CASE("controlled convergence") {
  SUBCASE("example11 with phi = 1") {
    const auto spec = models::make_builtin("example11");
    const auto grid = TimeGrid::uniform(1.0, 200);
    const Control u(StepFunction(grid, 1, 1.0), StepFunction(grid, 0, 1.0), 1e-3, 1e3);
    const auto r = check_controlled_convergence(spec, u, {0.2, 0.1, 0.05, 0.025}, 1000, grid,
                                                small(500));
    CHECK(r.pass);
    CHECK(r.notes.find("slope") != std::string::npos);
  }
  SUBCASE("pure jump with psi = 2 at eps = 0.01") {
    const auto spec = models::make_builtin("pure_jump");
    const auto grid = TimeGrid::uniform(1.0, 200);
    const Control u(StepFunction(grid, 1, 0.0), StepFunction(grid, 1, 2.0), 1e-3, 1e3);
    const auto r = check_controlled_convergence(spec, u, {0.1, 0.03, 0.01}, 1000, grid,
                                                small(200));
    CHECK(r.points.back().value < 0.05);
    CHECK(r.pass);
  }
}

TEST_CASE("frozen versus self-consistent demonstration") {
  const auto spec = models::make_builtin("example11");
  const auto grid = TimeGrid::uniform(1.0, 1000);
  SUBCASE("eps = 0.01") {
    const auto rec = demo_frozen_vs_selfconsistent(spec, 0.01, 4000, grid, 3, 1.0, 1, 0.005);
    CHECK(rec.skeleton_T == doctest::Approx(std::exp(1.0) + 1.0).epsilon(1e-9));
    CHECK(rec.wrong_ode_T == doctest::Approx(2.0 * std::exp(1.0) - 1.0).epsilon(1e-9));
    CHECK(rec.frozen_matches);
    CHECK(rec.selfconsistent_matches);
    CHECK(rec.selfconsistent_mean_T - rec.frozen_mean_T >= 0.5);
  }
  SUBCASE("null control: both equal e") {
    const auto rec = demo_frozen_vs_selfconsistent(spec, 0.01, 2000, grid, 3, 0.0, 1, 0.005);
    CHECK(rec.frozen_mean_T == doctest::Approx(std::exp(1.0)).epsilon(0.005));
    CHECK(rec.selfconsistent_mean_T == doctest::Approx(std::exp(1.0)).epsilon(0.005));
  }
}

TEST_CASE("halfspace sandwich at the smallest uncensored eps") {
  // Rate of the closure and the interior coincide for a halfspace; the
  // statistic at small eps must sit near the rate, allowing the finite-eps
  // correction as the tolerance.
  const auto spec = models::make_builtin("example11");
  const auto grid = TimeGrid::uniform(1.0, 200);
  auto cfg = small(20000);
  cfg.reference = 0.125;
  const auto r = check_ldp(spec, rate::HalfspaceTerminal{scalar(1.0), std::exp(1.0) + 0.5},
                           {0.2, 0.1, 0.05}, grid, cfg);
  const auto& last = r.points.back();
  REQUIRE_FALSE(last.censored);
  const double tol = 0.1;
  CHECK(last.statistic + 2.0 * last.statistic_se >= r.reference - tol);
  CHECK(last.statistic - 2.0 * last.statistic_se <= r.reference + tol);
}
