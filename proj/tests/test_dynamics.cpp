#include <doctest.h>

#include "mvldp/dynamics.hpp"
#include "mvldp/models.hpp"
#include "mvldp/skeleton.hpp"

#include <cmath>
#include <sstream>

using namespace mvldp;
using namespace mvldp::dynamics;

namespace {

bool same_states(const ParticleEnsemble& a, const ParticleEnsemble& b) {
  if (a.grid().n_nodes() != b.grid().n_nodes() || a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.grid().n_nodes(); ++k) {
    const auto ca = a.cloud(k), cb = b.cloud(k);
    if (!std::equal(ca.begin(), ca.end(), cb.begin())) return false;
  }
  return true;
}

std::pair<double, double> terminal_moments(const ParticleEnsemble& e) {
  const auto c = e.terminal_cloud();
  double m = 0.0, v = 0.0;
  for (double x : c) m += x;
  m /= c.size();
  for (double x : c) v += (x - m) * (x - m);
  return {m, v / (c.size() - 1)};
}

ModelSpec gaussian_a1() {
  nlohmann::json p;
  p["a"] = 1.0;
  return models::make_builtin("linear_gaussian", p);
}

}  // namespace

TEST_CASE("example11 ensemble mean follows x0 e^t") {
  const auto spec = models::make_builtin("example11");
  const auto grid = TimeGrid::uniform(1.0, 400);
  const double eps = 0.01;
  const std::size_t n = 2000;
  const auto ens = simulate_mvsde(spec, eps, n, grid, 42);
  const auto [m, v] = terminal_moments(ens);
  CHECK(std::abs(m - std::exp(1.0)) < 3.0 * std::sqrt(eps / n) * std::exp(1.0));
  // Var X(1) = eps (e^0 ... ) = eps for b = mean: X - E X = sqrt(eps) W.
  CHECK(v == doctest::Approx(eps).epsilon(0.1));
}

TEST_CASE("pure-jump terminal value equals compensated jump count") {
  const auto spec = models::make_builtin("pure_jump");
  const auto grid = TimeGrid::uniform(1.0, 50);
  const double eps = 0.1;
  const auto ens = simulate_mvsde(spec, eps, 8, grid, 7);
  const std::vector<std::size_t> ids{0, 3, 7};
  const auto noise = draw_noise(spec, eps, grid, 7, ids);
  REQUIRE(noise.jumps.size() == 3);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const double expected = eps * noise.jumps[r].size() - 1.0;
    CHECK(ens.value(grid.n_steps(), ids[r])[0] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("brownian increments reproduce an example11 particle") {
  const auto spec = models::make_builtin("example11");
  const auto grid = TimeGrid::uniform(1.0, 20);
  const double eps = 0.04;
  const auto ens = simulate_mvsde(spec, eps, 5, grid, 9);
  const std::vector<std::size_t> ids{2};
  const auto noise = draw_noise(spec, eps, grid, 9, ids);
  // X_i(T) - mean drift path: x_i(k+1) = x_i(k) + mean_k dt + sqrt(eps) dW.
  double x = 1.0;
  for (int k = 0; k < grid.n_steps(); ++k) {
    const auto c = ens.cloud(k);
    double m = 0.0;
    for (double v : c) m += v / c.size();
    x += m * grid.dt(k) + std::sqrt(eps) * noise.brownian[0][k];
  }
  CHECK(ens.value(grid.n_steps(), 2)[0] == doctest::Approx(x).epsilon(1e-12));
}

TEST_CASE("seed determinism across runs and job counts") {
  const auto spec = models::make_builtin("logistic_mf");
  const auto grid = TimeGrid::uniform(1.0, 40);
  const auto a = simulate_mvsde(spec, 0.05, 64, grid, 123, {1, true, {}});
  const auto b = simulate_mvsde(spec, 0.05, 64, grid, 123, {1, true, {}});
  const auto c = simulate_mvsde(spec, 0.05, 64, grid, 123, {4, true, {}});
  CHECK(a == b);
  CHECK(same_states(a, c));
  const auto d = simulate_mvsde(spec, 0.05, 64, grid, 124, {1, true, {}});
  CHECK_FALSE(same_states(a, d));
}

TEST_CASE("null control is bit-identical to the uncontrolled run") {
  for (const char* name : {"logistic_mf", "pure_jump", "example11"}) {
    CAPTURE(name);
    const auto spec = models::make_builtin(name);
    const auto grid = TimeGrid::uniform(1.0, 60);
    const auto base = simulate_mvsde(spec, 0.05, 50, grid, 77);
    const auto null = Control::null(grid, spec.dim, spec.n_marks());
    CHECK(same_states(base, simulate_controlled_frozen(spec, 0.05, null, base, 50, grid, 77)));
    CHECK(same_states(base, simulate_controlled_selfconsistent(spec, 0.05, null, 50, grid, 77)));
  }
}

TEST_CASE("controlled frozen law on example11 tracks e^t + phi t") {
  const auto spec = models::make_builtin("example11");
  const auto grid = TimeGrid::uniform(1.0, 400);
  const auto frozen = simulate_mvsde(spec, 1e-4, 2000, grid, 5);
  const Control u(StepFunction(grid, 1, 1.0), StepFunction(grid, 0, 1.0), 1e-3, 1e3);
  const auto ctrl = simulate_controlled_frozen(spec, 1e-4, u, frozen, 2000, grid, 6);
  const auto self = simulate_controlled_selfconsistent(spec, 1e-4, u, 2000, grid, 6);
  CHECK(terminal_moments(ctrl).first == doctest::Approx(std::exp(1.0) + 1.0).epsilon(2e-3));
  CHECK(terminal_moments(self).first == doctest::Approx(2.0 * std::exp(1.0) - 1.0).epsilon(2e-3));
}

TEST_CASE("frozen law compatibility is enforced") {
  const auto spec = models::make_builtin("example11");
  const auto grid = TimeGrid::uniform(1.0, 20);
  const auto frozen = simulate_mvsde(spec, 0.1, 10, grid, 1);
  const auto u = Control::null(grid, 1, 0);
  auto kind = [&](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::invalid_argument;
  };
  CHECK(kind([&] { (void)simulate_controlled_frozen(spec, 0.2, u, frozen, 10, grid, 1); }) ==
        ErrorKind::incompatible_frozen_law);
  CHECK(kind([&] {
          (void)simulate_controlled_frozen(spec, 0.1, u, frozen, 10, TimeGrid::uniform(1.0, 10), 1);
        }) != ErrorKind::invalid_argument);
  const auto terminal_only = simulate_mvsde(spec, 0.1, 10, grid, 1, {1, false, {}});
  CHECK(kind([&] { (void)simulate_controlled_frozen(spec, 0.1, u, terminal_only, 10, grid, 1); }) ==
        ErrorKind::incompatible_frozen_law);
  CHECK(kind([&] { (void)simulate_mvsde(spec, 0.1, 1, grid, 1); }) == ErrorKind::invalid_argument);
  CHECK(kind([&] { (void)simulate_mvsde(spec, -0.1, 10, grid, 1); }) ==
        ErrorKind::invalid_argument);
}

TEST_CASE("exploding drift reports divergence") {
  const auto doc = nlohmann::json::parse(R"({
    "model": "polynomial", "dim": 1, "initial": [10.0],
    "coefficients": {"drift": [[{"c": 1.0, "x": [3]}]], "diffusion": [[{"c": 0.1}]]}
  })");
  const auto spec = models::model_from_json(doc);
  try {
    (void)simulate_mvsde(spec, 0.01, 4, TimeGrid::uniform(1.0, 100), 1);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::diverged);
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("MDP tilt control clamps and validates") {
  const auto grid = TimeGrid::uniform(1.0, 4);
  MdpControl u{StepFunction(grid, 1, 0.0), StepFunction(grid, 1, -50.0)};
  std::size_t clamps = 0;
  const auto c = mdp_tilt_control(u, 0.1, {}, &clamps);
  CHECK(clamps == 4);
  CHECK(c.psi.at(0, 0) == doctest::Approx(1e-3));
  try {
    (void)mdp_tilt_control(u, 0.1, {0.0, 1.0});
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::invalid_mdp_tilt);
  }
}

TEST_CASE("controlled fluctuation process against the linear oracle") {
  const auto grid = TimeGrid::uniform(1.0, 400);
  const double eps = 1e-3, a = std::pow(eps, 0.25), s = eps / (a * a);
  const double c = 0.7;
  const std::size_t n = 4000;
  SUBCASE("example11: b'_2 = 0, mean c, variance s") {
    const auto spec = models::make_builtin("example11");
    const auto x0 = skeleton::solve_limit_ode(spec, grid, skeleton::LimitScheme::euler);
    const auto frozen = simulate_mvsde(spec, eps, n, grid, 3);
    MdpControl u{StepFunction(grid, 1, c), StepFunction(grid, 0, 0.0)};
    const auto m = simulate_mdp_controlled(spec, eps, a, u, frozen, x0, n, grid, 4);
    const auto [mean, var] = terminal_moments(m);
    CHECK(std::abs(mean - c) < 4.0 * std::sqrt(s / n) + 1e-3);
    CHECK(var == doctest::Approx(s).epsilon(0.08));
  }
  SUBCASE("linear_gaussian a = 1: mean c(e-1), variance s(e^2-1)/2") {
    const auto spec = gaussian_a1();
    const auto x0 = skeleton::solve_limit_ode(spec, grid, skeleton::LimitScheme::euler);
    const auto frozen = simulate_mvsde(spec, eps, n, grid, 3);
    MdpControl u{StepFunction(grid, 1, c), StepFunction(grid, 0, 0.0)};
    const auto m = simulate_mdp_controlled(spec, eps, a, u, frozen, x0, n, grid, 4);
    const auto [mean, var] = terminal_moments(m);
    const double v_ref = s * (std::exp(2.0) - 1.0) / 2.0;
    CHECK(std::abs(mean - c * (std::exp(1.0) - 1.0)) < 4.0 * std::sqrt(v_ref / n) + 5e-3);
    CHECK(var == doctest::Approx(v_ref).epsilon(0.08));
  }
}

TEST_CASE("summary and csv output") {
  const auto spec = models::make_builtin("example11");
  const auto grid = TimeGrid::uniform(1.0, 10);
  const auto ens = simulate_mvsde(spec, 0.01, 20, grid, 2);
  const auto x0 = skeleton::solve_limit_ode(spec, grid);
  const auto rows = summarize(ens, &x0);
  REQUIRE(rows.size() == 11);
  CHECK(rows.front().w2_to_limit == 0.0);
  CHECK(rows.back().w2_to_limit > 0.0);
  std::ostringstream a, b;
  write_summary_csv(a, rows);
  write_ensemble_csv(b, ens);
  CHECK(a.str().rfind("t,mean0,var0,w2_to_limit", 0) == 0);
  const std::string text = b.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 11 * 20 + 1);
  const auto law = ens.law(10);
  CHECK(law.size() == 20);
}
