#include <doctest.h>

#include "mvldp/core.hpp"
#include "mvldp/models.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace mvldp;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an mvldp::Error");
  return ErrorKind::invalid_argument;
}

std::string write_temp(const std::string& name, const std::string& text) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p) << text;
  return p.string();
}

}  // namespace

TEST_CASE("uniform grid nodes and lookups") {
  const auto g = TimeGrid::uniform(1.0, 4);
  CHECK(g.n_nodes() == 5);
  CHECK(g.node(2) == doctest::Approx(0.5));
  CHECK(g.step_containing(0.3) == 1);
  CHECK(g.step_containing(1.0) == 3);
  CHECK(g.node_at_or_before(0.5) == 2);
  CHECK(kind_of([&] { (void)g.node_at_or_before(1.5); }) == ErrorKind::out_of_range);
  CHECK(kind_of([] { (void)TimeGrid::uniform(1.0, 0); }) == ErrorKind::invalid_argument);
}

TEST_CASE("path evaluation and sup distance") {
  const auto g = TimeGrid::uniform(1.0, 2);
  Path lin(g, {Vector::Constant(1, 0.0), Vector::Constant(1, 1.0), Vector::Constant(1, 3.0)},
           Interpolation::linear);
  CHECK(eval_path(lin, 0.25)[0] == doctest::Approx(0.5));
  CHECK(eval_path(lin, 0.75)[0] == doctest::Approx(2.0));
  Path step = lin;
  step.interpolation = Interpolation::cadlag_step;
  CHECK(eval_path(step, 0.75)[0] == 1.0);
  Path other(TimeGrid::uniform(1.0, 4), std::vector<Vector>(5, Vector::Zero(1)));
  CHECK(kind_of([&] { (void)path_sup_distance(lin, other); }) ==
        ErrorKind::incompatible_grids);
  Path shifted = lin;
  for (auto& v : shifted.values) v[0] += 0.25;
  CHECK(path_sup_distance(lin, shifted) == doctest::Approx(0.25));
}

TEST_CASE("control validation") {
  const auto g = TimeGrid::uniform(1.0, 4);
  CHECK_NOTHROW(Control::null(g, 2, 3));
  CHECK(kind_of([&] {
          Control(StepFunction(g, 1, 0.0), StepFunction(g, 1, 2000.0), 1e-3, 1e3);
        }) == ErrorKind::invalid_control);
  CHECK(kind_of([&] {
          Control(StepFunction(g, 1, 0.0), StepFunction(g, 1, 1.0), 0.0, 1e3);
        }) == ErrorKind::invalid_control);
  CHECK(kind_of([&] {
          Control(StepFunction(g, 1, NAN), StepFunction(g, 1, 1.0), 1e-3, 1e3);
        }) == ErrorKind::invalid_control);
  const Control u(StepFunction(g, 1, 0.0), StepFunction(g, 2, 4.0), 1e-3, 1e3);
  CHECK(u.max_psi() == 4.0);
}

TEST_CASE("law summaries") {
  const std::vector<double> cloud{0.0, 1.0, 2.0, 3.0};
  const auto mu = LawSummary::empirical(cloud, 2);
  CHECK(mu.size() == 2);
  CHECK(mu.mean()[0] == doctest::Approx(1.0));
  CHECK(mu.mean()[1] == doctest::Approx(2.0));
  CHECK(mu.second_moment() == doctest::Approx((1.0 + 4.0 + 9.0) / 2.0));
  const auto d = LawSummary::dirac(Vector::Constant(1, 3.0));
  CHECK(d.kind() == LawSummary::Kind::dirac);
  CHECK(d.mean()[0] == 3.0);
}

TEST_CASE("intensity measure validation and picking") {
  CHECK_THROWS_AS(IntensityMeasure({{Vector::Ones(1), -1.0}}), Error);
  CHECK_THROWS_AS(IntensityMeasure({{Vector::Ones(1), 1.0}, {Vector::Ones(2), 1.0}}), Error);
  const IntensityMeasure m({{Vector::Constant(1, 0.5), 1.0}, {Vector::Constant(1, 2.0), 3.0}});
  CHECK(m.total_mass() == 4.0);
  CHECK(m.pick(0.2) == 0);
  CHECK(m.pick(0.3) == 1);
}

TEST_CASE("monotonicity probe on the built-in models") {
  nlohmann::json p;
  p["a"] = -1.0;
  const auto lg = models::make_builtin("linear_gaussian", p);
  const auto rep = probe_monotonicity(lg, 200, 3);
  CHECK(rep.samples == 200);
  CHECK(rep.violations == 0);
  const auto logistic = models::make_builtin("logistic_mf");
  // Not globally one-sided Lipschitz with L = r on the whole line; the probe
  // reports violations rather than failing.
  CHECK(probe_monotonicity(logistic, 100, 5).samples == 100);
}

TEST_CASE("jump integral sums over cells") {
  auto spec = models::make_builtin("pure_jump");
  Vector out(1);
  const double w = 2.0;
  jump_integral(spec, spec.limit.jump, 0.0, Vector::Zero(1),
                LawSummary::dirac(Vector::Zero(1)), std::span<const double>(&w, 1), out);
  CHECK(out[0] == doctest::Approx(2.0));
}

TEST_CASE("built-in registry") {
  for (const auto& name : models::builtin_names()) {
    const auto spec = models::make_builtin(name);
    CHECK(spec.name == name);
    CHECK(spec.initial.size() == spec.dim);
  }
  CHECK(kind_of([] { (void)models::make_builtin("nope"); }) == ErrorKind::parse_error);
  const auto ex = models::make_builtin("example11");
  CHECK_FALSE(ex.has_jumps());
  const auto pj = models::make_builtin("pure_jump");
  CHECK(pj.n_marks() == 1);
}

TEST_CASE("perturbation family shifts the drift") {
  nlohmann::json p;
  p["perturbation"] = {{"drift", {{"coef", 1.0}, {"power", 0.5}}}};
  const auto spec = models::make_builtin("example11", p);
  Vector out(1);
  const auto mu = LawSummary::dirac(Vector::Constant(1, 2.0));
  spec.at(0.04).drift(0.0, Vector::Constant(1, 2.0), mu, out);
  CHECK(out[0] == doctest::Approx(2.2));
  spec.limit.drift(0.0, Vector::Constant(1, 2.0), mu, out);
  CHECK(out[0] == doctest::Approx(2.0));
  CHECK(spec.constants.rho_b(0.04) == doctest::Approx(0.2));
}

TEST_CASE("polynomial coefficients") {
  models::Monomial m{2.0, 1, {2}, {1}, {}};
  const double v = models::evaluate({m}, 0.5, Vector::Constant(1, 3.0), Vector::Constant(1, 4.0),
                                    Vector());
  CHECK(v == doctest::Approx(2.0 * 0.5 * 9.0 * 4.0));
  const auto doc = nlohmann::json::parse(R"({
    "model": "polynomial", "dim": 1, "initial": [1.0],
    "coefficients": {"drift": [[{"c": -1.0, "x": [1]}, {"c": 0.5, "m": [1]}]],
                     "diffusion": [[{"c": 0.3}]]}
  })");
  const auto spec = models::model_from_json(doc);
  Vector out(1);
  spec.limit.drift(0.0, Vector::Constant(1, 2.0), LawSummary::dirac(Vector::Constant(1, 4.0)), out);
  CHECK(out[0] == doctest::Approx(0.0));
  Matrix s(1, 1);
  spec.limit.diffusion(0.0, Vector::Zero(1), LawSummary::dirac(Vector::Zero(1)), s);
  CHECK(s(0, 0) == doctest::Approx(0.3));
}

TEST_CASE("model file loading and diagnostics") {
  const auto ok = write_temp("mvldp_ok.json",
                             R"({"model": "linear_gaussian", "params": {"a": 0.5},
                                 "initial": [2.0], "n_steps": 50})");
  const auto loaded = models::load_model(ok);
  CHECK(loaded.spec.n_steps == 50);
  CHECK(loaded.spec.initial[0] == 2.0);
  CHECK(loaded.hash == models::fnv1a(loaded.source));

  CHECK(kind_of([] { (void)models::load_model("/nonexistent/model.json"); }) ==
        ErrorKind::file_not_found);

  const auto broken = write_temp("mvldp_broken.json", "{\n  \"model\": \"example11\",\n  oops\n}");
  try {
    (void)models::load_model(broken);
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::parse_error);
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }

  const auto bad_field = write_temp("mvldp_field.json",
                                    R"({"model": "example11", "initial": [1.0, 2.0]})");
  try {
    (void)models::load_model(bad_field);
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("initial") != std::string::npos);
  }
  const auto builtin = models::load_model("builtin:pure_jump");
  CHECK(builtin.spec.name == "pure_jump");
}

TEST_CASE("fnv1a reference values") {
  CHECK(models::fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(models::fnv1a("a") == 0xaf63dc4c8601ec8cULL);
}
