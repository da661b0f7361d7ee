#include <doctest.h>

#include "mvldp/models.hpp"
#include "mvldp/rng.hpp"
#include "mvldp/skeleton.hpp"

#include <cmath>
#include <random>

using namespace mvldp;
using namespace mvldp::skeleton;

namespace {

Control constant(const TimeGrid& g, int d, std::size_t marks, double phi, double psi) {
  return Control(StepFunction(g, d, phi), StepFunction(g, static_cast<int>(marks), psi), 1e-3,
                 1e3);
}

}  // namespace

TEST_CASE("limit ODE of example11") {
  const auto spec = models::make_builtin("example11");
  const auto grid = TimeGrid::uniform(1.0, 400);
  CHECK(solve_limit_ode(spec, grid).terminal()[0] == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
  const double euler = std::pow(1.0 + 1.0 / 400, 400);
  CHECK(solve_limit_ode(spec, grid, LimitScheme::euler).terminal()[0] ==
        doctest::Approx(euler).epsilon(1e-13));
}

TEST_CASE("example11 skeleton with phi = 1 ends at e + 1") {
  const auto spec = models::make_builtin("example11");
  const auto grid = TimeGrid::uniform(1.0, 800);
  const auto x0 = solve_limit_ode(spec, grid);
  const auto r = solve_ldp_skeleton(spec, x0, constant(grid, 1, 0, 1.0, 1.0), grid);
  CHECK(std::abs(r.path.terminal()[0] - (std::exp(1.0) + 1.0)) < 1e-6);
  CHECK(r.residual < 1e-10);
}

TEST_CASE("null control reproduces the limit path") {
  for (const char* name : {"example11", "logistic_mf", "pure_jump"}) {
    CAPTURE(name);
    const auto spec = models::make_builtin(name);
    const auto grid = TimeGrid::uniform(1.0, 400);
    const auto x0 = solve_limit_ode(spec, grid);
    const auto r = solve_ldp_skeleton(spec, x0, Control::null(grid, 1, spec.n_marks()), grid);
    CHECK(path_sup_distance(r.path, x0) <= 1e-10);
  }
}

TEST_CASE("self-consistent skeleton gives the incorrect ODE value") {
  const auto spec = models::make_builtin("example11");
  const auto grid = TimeGrid::uniform(1.0, 400);
  const auto y = solve_selfconsistent_skeleton(spec, constant(grid, 1, 0, 1.0, 1.0), grid);
  CHECK(y.terminal()[0] == doctest::Approx(2.0 * std::exp(1.0) - 1.0).epsilon(1e-10));
}

TEST_CASE("pure-jump skeleton with psi = 2 moves at unit speed") {
  const auto spec = models::make_builtin("pure_jump");
  const auto grid = TimeGrid::uniform(1.0, 100);
  const auto x0 = solve_limit_ode(spec, grid);
  const auto r = solve_ldp_skeleton(spec, x0, constant(grid, 1, 1, 0.0, 2.0), grid);
  CHECK(r.path.terminal()[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("Picard failure surfaces as no-convergence") {
  const auto spec = models::make_builtin("logistic_mf");
  const auto grid = TimeGrid::uniform(1.0, 100);
  const auto x0 = solve_limit_ode(spec, grid);
  try {
    (void)solve_ldp_skeleton(spec, x0, constant(grid, 1, 1, 1.0, 1.5), grid, {1, 1e-12, 1.0});
    FAIL("expected no-convergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::no_convergence);
  }
}

TEST_CASE("Jacobian: exact override agrees with central differences") {
  auto spec = models::make_builtin("logistic_mf");
  const Vector x = Vector::Constant(1, 0.8);
  const auto mu = LawSummary::dirac(x);
  const Matrix exact = jacobian_b_x(spec, 0.0, x, mu);
  spec.drift_jacobian.reset();
  const Matrix fd = jacobian_b_x(spec, 0.0, x, mu);
  CHECK(fd(0, 0) == doctest::Approx(exact(0, 0)).epsilon(1e-8));
  // Example 1.1: b = mean(mu) does not depend on x.
  const auto ex = models::make_builtin("example11");
  CHECK(jacobian_b_x(ex, 0.0, x, mu)(0, 0) == 0.0);
}

TEST_CASE("MDP skeleton of linear_gaussian with a = 1") {
  nlohmann::json p;
  p["a"] = 1.0;
  const auto spec = models::make_builtin("linear_gaussian", p);
  const auto grid = TimeGrid::uniform(1.0, 400);
  const auto x0 = solve_limit_ode(spec, grid);
  MdpControl u{StepFunction(grid, 1, 1.0), StepFunction(grid, 0, 0.0)};
  CHECK(solve_mdp_skeleton(spec, x0, u, grid).terminal()[0] ==
        doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-10));
}

TEST_CASE("MDP skeleton is linear in the control") {
  const auto spec = models::make_builtin("logistic_mf");
  const auto grid = TimeGrid::uniform(1.0, 200);
  const auto cgrid = TimeGrid::uniform(1.0, 20);
  const auto x0 = solve_limit_ode(spec, grid);
  const MdpLinearization lin(spec, x0, grid);
  Xoshiro256 rng(31);
  std::normal_distribution<double> normal;
  auto random_control = [&] {
    MdpControl u = MdpControl::zero(cgrid, 1, spec.n_marks());
    for (double& v : u.phi.values()) v = normal(rng);
    for (double& v : u.vphi.values()) v = normal(rng);
    return u;
  };
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto u = random_control(), v = random_control();
    const double alpha = normal(rng), beta = normal(rng);
    MdpControl w = MdpControl::zero(cgrid, 1, spec.n_marks());
    for (std::size_t i = 0; i < w.phi.values().size(); ++i)
      w.phi.values()[i] = alpha * u.phi.values()[i] + beta * v.phi.values()[i];
    for (std::size_t i = 0; i < w.vphi.values().size(); ++i)
      w.vphi.values()[i] = alpha * u.vphi.values()[i] + beta * v.vphi.values()[i];
    const auto ku = lin.solve(u), kv = lin.solve(v), kw = lin.solve(w);
    for (std::size_t k = 0; k < grid.n_nodes(); ++k)
      worst = std::max(worst,
                       (kw.values[k] - alpha * ku.values[k] - beta * kv.values[k]).norm());
  }
  CHECK(worst <= 1e-9);
}
