#include "mvldp/cli.hpp"

#include "mvldp/dynamics.hpp"
#include "mvldp/models.hpp"
#include "mvldp/rate.hpp"
#include "mvldp/skeleton.hpp"
#include "mvldp/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

namespace mvldp::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kVersion = "0.1.0";

struct RunConfig {
  std::string model = "builtin:example11";
  std::optional<double> eps;
  std::vector<double> eps_list;
  std::optional<std::size_t> particles;
  std::optional<std::size_t> replicas;
  std::optional<int> steps;
  std::uint64_t seed = 20240101;
  double a_exp = 0.25;
  std::string event;
  std::string out = ".";
  std::string format = "csv";
  int jobs = 1;
  // subcommand extras
  std::string control_file;
  double phi = 0.0;
  double psi = 1.0;
  bool mdp = false;
  int n_control = 0;
  std::optional<double> tolerance;
  std::optional<double> reference;
};

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::numeric_error:
    case ErrorKind::diverged:
    case ErrorKind::no_convergence:
    case ErrorKind::invariant_failure:
      return kNumeric;
    default:
      return kUsage;
  }
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

class Session {
 public:
  Session(const RunConfig& cfg, std::string command, std::ostream& out)
      : cfg_(cfg), command_(std::move(command)), out_(out) {
    loaded_ = models::load_model(cfg.model);
    if (cfg.steps) loaded_.spec.n_steps = *cfg.steps;
    fs::create_directories(cfg.out);
    manifest_["tool"] = "mvldp";
    manifest_["version"] = kVersion;
    manifest_["command"] = command_;
    manifest_["model"] = {{"ref", cfg.model},
                          {"name", loaded_.spec.name},
                          {"fnv1a", hex64(loaded_.hash)}};
    manifest_["seed"] = cfg.seed;
    manifest_["jobs"] = cfg.jobs;
    manifest_["steps"] = loaded_.spec.n_steps;
    manifest_["horizon"] = loaded_.spec.horizon;
  }

  const ModelSpec& spec() const { return loaded_.spec; }
  TimeGrid grid() const { return spec().default_grid(); }
  json& params() { return manifest_["parameters"]; }

  fs::path file(const std::string& stem, const std::string& ext) {
    fs::path p = fs::path(cfg_.out) / (command_ + "_" + stem + "." + ext);
    manifest_["outputs"].push_back(p.string());
    return p;
  }

  void write_json(const std::string& stem, const json& j) {
    std::ofstream f(file(stem, "json"));
    f << std::setw(2) << j << '\n';
  }

  void finish() {
    std::ofstream f(fs::path(cfg_.out) / (command_ + "_manifest.json"));
    f << std::setw(2) << manifest_ << '\n';
    out_ << "manifest: " << (fs::path(cfg_.out) / (command_ + "_manifest.json")).string()
         << '\n';
  }

 private:
  const RunConfig& cfg_;
  std::string command_;
  std::ostream& out_;
  models::LoadedModel loaded_;
  json manifest_;
};

std::vector<double> eps_list_or(const RunConfig& cfg, std::vector<double> fallback) {
  auto list = cfg.eps_list.empty() ? std::move(fallback) : cfg.eps_list;
  for (std::size_t i = 0; i < list.size(); ++i) {
    require(list[i] > 0.0, ErrorKind::invalid_argument, "--eps-list values must be positive");
    if (i) require(list[i] < list[i - 1], ErrorKind::invalid_argument,
                   "--eps-list must be strictly decreasing");
  }
  return list;
}

Control constant_control(const ModelSpec& spec, const TimeGrid& grid, double phi,
                         double psi) {
  return Control(StepFunction(grid, spec.dim, phi),
                 StepFunction(grid, static_cast<int>(spec.n_marks()), psi), 1e-3, 1e3);
}

Control control_from(const RunConfig& cfg, const ModelSpec& spec, const TimeGrid& grid) {
  if (cfg.control_file.empty()) return constant_control(spec, grid, cfg.phi, cfg.psi);
  std::ifstream in(cfg.control_file);
  require(bool(in), ErrorKind::file_not_found,
          "cannot open control file '" + cfg.control_file + "'");
  return rate::read_control_csv(in, spec.dim, spec.n_marks());
}

// ---------------------------------------------------------------------------

int cmd_simulate(const RunConfig& cfg, std::ostream& out) {
  Session s(cfg, "simulate", out);
  const double eps = cfg.eps.value_or(0.01);
  const std::size_t n = cfg.particles.value_or(2000);
  require(n >= 2, ErrorKind::invalid_argument, "--particles must be at least 2");
  const TimeGrid grid = s.grid();
  const Path x0 = skeleton::solve_limit_ode(s.spec(), grid);
  const int d = s.spec().dim;

  // Streaming summary so large ensembles need not keep every node.
  std::vector<dynamics::SummaryRow> rows;
  dynamics::SimOptions opts;
  opts.jobs = cfg.jobs;
  opts.store_paths = false;
  opts.observer = [&](std::size_t k, double t, std::span<const double> c) {
    dynamics::SummaryRow row;
    row.t = t;
    row.mean = Vector::Zero(d);
    row.variance = Vector::Zero(d);
    for (std::size_t i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) row.mean[j] += c[i * d + j];
    row.mean /= static_cast<double>(n);
    double w2 = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) {
        const double dv = c[i * d + j] - row.mean[j];
        row.variance[j] += dv * dv;
        const double dl = c[i * d + j] - x0.values[k][j];
        w2 += dl * dl;
      }
    row.variance /= static_cast<double>(n);
    row.w2_to_limit = std::sqrt(w2 / static_cast<double>(n));
    rows.push_back(std::move(row));
  };
  const auto start = std::chrono::steady_clock::now();
  dynamics::simulate_mvsde(s.spec(), eps, n, grid, cfg.seed, opts);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  s.params() = {{"eps", eps}, {"particles", n}};
  if (cfg.format == "json") {
    json j = json::array();
    for (const auto& r : rows)
      j.push_back({{"t", r.t},
                   {"mean", std::vector<double>(r.mean.data(), r.mean.data() + d)},
                   {"variance", std::vector<double>(r.variance.data(), r.variance.data() + d)},
                   {"w2_to_limit", r.w2_to_limit}});
    s.write_json("summary", j);
  } else {
    std::ofstream f(s.file("summary", "csv"));
    dynamics::write_summary_csv(f, rows);
  }
  const auto& last = rows.back();
  out << std::setprecision(10) << "t=" << last.t << " mean=" << last.mean.transpose()
      << " limit=" << x0.terminal().transpose() << " seconds=" << seconds << '\n';
  s.finish();
  return kOk;
}

int cmd_skeleton(const RunConfig& cfg, std::ostream& out) {
  Session s(cfg, "skeleton", out);
  const TimeGrid grid = s.grid();
  const Path x0 = skeleton::solve_limit_ode(s.spec(), grid);
  Path y;
  if (cfg.mdp) {
    MdpControl u{StepFunction(grid, s.spec().dim, cfg.phi),
                 StepFunction(grid, static_cast<int>(s.spec().n_marks()), cfg.psi - 1.0)};
    y = skeleton::solve_mdp_skeleton(s.spec(), x0, u, grid);
    s.params() = {{"kind", "mdp"}, {"phi", cfg.phi}, {"vphi", cfg.psi - 1.0}};
  } else {
    const Control u = control_from(cfg, s.spec(), grid);
    const auto res = skeleton::solve_ldp_skeleton(s.spec(), x0, u, grid);
    y = res.path;
    s.params() = {{"kind", "ldp"},
                  {"phi", cfg.phi},
                  {"psi", cfg.psi},
                  {"control_file", cfg.control_file},
                  {"picard_iterations", res.iterations},
                  {"picard_residual", res.residual}};
  }
  const int d = s.spec().dim;
  if (cfg.format == "json") {
    json j = json::array();
    for (std::size_t k = 0; k < grid.n_nodes(); ++k)
      j.push_back({{"t", grid.node(k)},
                   {"x0", std::vector<double>(x0.values[k].data(), x0.values[k].data() + d)},
                   {"y", std::vector<double>(y.values[k].data(), y.values[k].data() + d)}});
    s.write_json("path", j);
  } else {
    std::ofstream f(s.file("path", "csv"));
    f << "t";
    for (int j = 0; j < d; ++j) f << ",x0_" << j;
    for (int j = 0; j < d; ++j) f << ",y_" << j;
    f << '\n' << std::setprecision(17);
    for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
      f << grid.node(k);
      for (int j = 0; j < d; ++j) f << ',' << x0.values[k][j];
      for (int j = 0; j < d; ++j) f << ',' << y.values[k][j];
      f << '\n';
    }
  }
  out << std::setprecision(10) << "y(T)=" << y.terminal().transpose()
      << " x0(T)=" << x0.terminal().transpose() << '\n';
  s.finish();
  return kOk;
}

int cmd_rate(const RunConfig& cfg, std::ostream& out) {
  Session s(cfg, "rate", out);
  require(!cfg.event.empty(), ErrorKind::invalid_argument, "rate needs --event");
  const TimeGrid grid = s.grid();
  const Path x0 = skeleton::solve_limit_ode(s.spec(), grid);
  const auto event = rate::parse_event(cfg.event, s.spec().dim);
  rate::RateResult r;
  if (cfg.mdp) {
    r = rate::mdp_rate(s.spec(), x0, event, grid, cfg.n_control);
  } else {
    rate::OptConfig opt;
    if (cfg.n_control > 0) opt.n_control = cfg.n_control;
    opt.seed = cfg.seed;
    opt.jobs = cfg.jobs;
    r = rate::ldp_rate(s.spec(), x0, event, grid, opt);
    std::ofstream f(s.file("control", "csv"));
    rate::write_control_csv(f, r.control);
  }
  s.params() = {{"event", cfg.event}, {"kind", cfg.mdp ? "mdp" : "ldp"},
                {"n_control", cfg.n_control}};
  json j = rate::to_json(r, s.spec());
  j["event"] = rate::describe(event);
  s.write_json("result", j);
  out << std::setprecision(10) << "rate=" << r.value << " feasible=" << r.feasible
      << " residual=" << r.residual << '\n';
  s.finish();
  return r.feasible ? kOk : kNumeric;
}

int report_slope(Session& s, const verify::SlopeReport& r, const RunConfig& cfg,
                 std::ostream& out) {
  if (cfg.format == "json") {
    s.write_json("report", verify::to_json(r));
  } else {
    std::ofstream f(s.file("report", "csv"));
    verify::write_csv(f, r);
    s.write_json("report", verify::to_json(r));
  }
  out << std::setprecision(6);
  for (const auto& p : r.points)
    out << "eps=" << p.eps << " hits=" << p.hits << "/" << p.samples
        << " statistic=" << p.statistic << " +- " << p.statistic_se
        << (p.censored ? " (censored)" : "") << '\n';
  out << "fitted=" << r.fitted << " +- " << r.fitted_se << " reference=" << r.reference
      << " tolerance=" << r.tolerance << " pass=" << (r.pass ? "true" : "false") << '\n';
  s.finish();
  return r.pass ? kOk : kVerificationFailed;
}

verify::CheckConfig check_config(const RunConfig& cfg) {
  verify::CheckConfig c;
  c.particles = cfg.particles.value_or(100000);
  c.seed = cfg.seed;
  c.jobs = cfg.jobs;
  c.tolerance = cfg.tolerance;
  c.reference = cfg.reference;
  c.opt.seed = cfg.seed;
  c.opt.jobs = cfg.jobs;
  if (cfg.n_control > 0) c.opt.n_control = cfg.n_control;
  return c;
}

int cmd_verify_ldp(const RunConfig& cfg, std::ostream& out) {
  Session s(cfg, "verify-ldp", out);
  const std::string ev = cfg.event.empty() ? "halfspace:e+0.5" : cfg.event;
  const auto event = rate::parse_event(ev, s.spec().dim);
  const auto eps = eps_list_or(cfg, {0.2, 0.1, 0.05});
  const auto c = check_config(cfg);
  s.params() = {{"event", ev}, {"eps_list", eps}, {"particles", c.particles}};
  return report_slope(s, verify::check_ldp(s.spec(), event, eps, s.grid(), c), cfg, out);
}

int cmd_verify_mdp(const RunConfig& cfg, std::ostream& out) {
  Session s(cfg, "verify-mdp", out);
  require(cfg.a_exp > 0.0 && cfg.a_exp < 0.5, ErrorKind::invalid_argument,
          "--a-exp must lie in (0, 1/2)");
  const std::string ev = cfg.event.empty() ? "halfspace:1" : cfg.event;
  const auto event = rate::parse_event(ev, s.spec().dim);
  const auto eps = eps_list_or(cfg, {1e-2, 4e-3, 1e-3});
  const auto c = check_config(cfg);
  s.params() = {{"event", ev}, {"eps_list", eps}, {"particles", c.particles},
                {"a_exp", cfg.a_exp}};
  return report_slope(
      s, verify::check_mdp(s.spec(), event, eps, {cfg.a_exp, 1.0}, s.grid(), c), cfg, out);
}

int cmd_demo(const RunConfig& cfg, std::ostream& out) {
  RunConfig local = cfg;
  if (!local.steps) local.steps = 1000;
  Session s(local, "demo-example11", out);
  const double eps = cfg.eps.value_or(1e-4);
  const std::size_t n = cfg.particles.value_or(10000);
  const double phi = cfg.phi == 0.0 && !cfg.mdp ? 1.0 : cfg.phi;
  const auto rec = verify::demo_frozen_vs_selfconsistent(s.spec(), eps, n, s.grid(), cfg.seed,
                                                         phi, cfg.jobs);
  s.params() = {{"eps", eps}, {"particles", n}, {"phi", phi}};
  s.write_json("record", verify::to_json(rec));
  out << std::fixed << std::setprecision(5);
  out << "quantity                 value      reference\n";
  out << "frozen_mean_T          " << std::setw(9) << rec.frozen_mean_T << "  "
      << std::setw(9) << rec.skeleton_T << "  (skeleton_T)\n";
  out << "selfconsistent_mean_T  " << std::setw(9) << rec.selfconsistent_mean_T << "  "
      << std::setw(9) << rec.wrong_ode_T << "  (wrong_ode_T)\n";
  out << "gap                    " << std::setw(9)
      << rec.selfconsistent_mean_T - rec.frozen_mean_T << '\n';
  out.unsetf(std::ios::floatfield);
  s.finish();
  return rec.frozen_matches && rec.selfconsistent_matches ? kOk : kVerificationFailed;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Small-noise McKean-Vlasov SDE toolkit", "mvldp"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto common = [&cfg](CLI::App* sub) {
    sub->add_option("--model", cfg.model, "model file or builtin:<name>");
    sub->add_option("--seed", cfg.seed, "master seed");
    sub->add_option("--steps", cfg.steps, "time steps")->check(CLI::PositiveNumber);
    sub->add_option("--out", cfg.out, "output directory");
    sub->add_option("--format", cfg.format, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--jobs", cfg.jobs, "worker threads")->check(CLI::PositiveNumber);
  };
  auto* sim = app.add_subcommand("simulate", "particle simulation summary");
  common(sim);
  sim->add_option("--eps", cfg.eps)->check(CLI::PositiveNumber);
  sim->add_option("--particles", cfg.particles);

  auto* skel = app.add_subcommand("skeleton", "controlled skeleton path");
  common(skel);
  skel->add_option("--control", cfg.control_file, "control CSV");
  skel->add_option("--phi", cfg.phi, "constant drift control");
  skel->add_option("--psi", cfg.psi, "constant jump tilt (1 + vphi with --mdp)");
  skel->add_flag("--mdp", cfg.mdp, "linearized fluctuation skeleton");

  auto* rt = app.add_subcommand("rate", "LDP or MDP rate of an event");
  common(rt);
  rt->add_option("--event", cfg.event, "pin:a[@tol] | halfspace:[w>=]c | path:file[@tol]");
  rt->add_flag("--mdp", cfg.mdp, "moderate-deviation rate");
  rt->add_option("--controls", cfg.n_control, "control intervals");

  auto* vl = app.add_subcommand("verify-ldp", "Monte Carlo check of the LDP rate");
  common(vl);
  vl->add_option("--event", cfg.event);
  vl->add_option("--eps-list", cfg.eps_list)->delimiter(',');
  vl->add_option("--particles", cfg.particles);
  vl->add_option("--tolerance", cfg.tolerance);
  vl->add_option("--reference", cfg.reference, "skip the optimizer and use this rate");

  auto* vm = app.add_subcommand("verify-mdp", "Monte Carlo check of the MDP rate");
  common(vm);
  vm->add_option("--event", cfg.event);
  vm->add_option("--eps-list", cfg.eps_list)->delimiter(',');
  vm->add_option("--particles", cfg.particles);
  vm->add_option("--a-exp", cfg.a_exp, "a(eps) = eps^p, p in (0, 1/2)");
  vm->add_option("--tolerance", cfg.tolerance);
  vm->add_option("--reference", cfg.reference);

  auto* demo = app.add_subcommand("demo-example11", "frozen-law versus self-consistent");
  common(demo);
  demo->add_option("--eps", cfg.eps)->check(CLI::PositiveNumber);
  demo->add_option("--particles", cfg.particles);
  demo->add_option("--phi", cfg.phi, "constant drift control (default 1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*sim) return cmd_simulate(cfg, out);
    if (*skel) return cmd_skeleton(cfg, out);
    if (*rt) return cmd_rate(cfg, out);
    if (*vl) return cmd_verify_ldp(cfg, out);
    if (*vm) return cmd_verify_mdp(cfg, out);
    if (*demo) return cmd_demo(cfg, out);
  } catch (const Error& e) {
    err << json{{"error", std::string(to_string(e.kind()))}, {"message", e.what()}}.dump()
        << '\n';
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << json{{"error", "io-error"}, {"message", e.what()}}.dump() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << json{{"error", "internal"}, {"message", e.what()}}.dump() << '\n';
    return kNumeric;
  }
  return kUsage;
}

}  // namespace mvldp::cli
