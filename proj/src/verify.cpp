#include "mvldp/verify.hpp"

#include "mvldp/dynamics.hpp"
#include "mvldp/rng.hpp"
#include "mvldp/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace mvldp::verify {

using nlohmann::json;

double MdpSpeed::a(double eps) const { return coef * std::pow(eps, exponent); }

void MdpSpeed::validate(const std::vector<double>& eps_list) const {
  require(coef > 0.0 && exponent > 0.0 && exponent < 0.5, ErrorKind::invalid_argument,
          "a(eps) = c eps^p needs c > 0 and p in (0, 1/2)");
  for (std::size_t i = 1; i < eps_list.size(); ++i)
    require(a(eps_list[i]) < a(eps_list[i - 1]) &&
                speed(eps_list[i]) < speed(eps_list[i - 1]),
            ErrorKind::invalid_argument, "a(eps) and eps/a^2 must decrease along eps_list");
}

namespace {

void check_eps_list(const std::vector<double>& eps_list, std::size_t min_len) {
  require(eps_list.size() >= min_len, ErrorKind::invalid_argument,
          "eps_list needs at least " + std::to_string(min_len) + " values");
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    require(eps_list[i] > 0.0 && std::isfinite(eps_list[i]), ErrorKind::invalid_argument,
            "eps values must be positive");
    if (i) require(eps_list[i] < eps_list[i - 1], ErrorKind::invalid_argument,
                   "eps_list must be strictly decreasing");
  }
}

// Counts particles whose (centered, scaled) path lies in the event.
class EventCounter {
 public:
  EventCounter(const rate::EventSpec& event, const TimeGrid& grid, std::size_t n, int d,
               const Path* center, double scale)
      : event_(event), grid_(grid), n_(n), d_(d), center_(center), scale_(scale),
        path_(std::get_if<rate::PinPath>(&event)) {
    if (path_) sup_.assign(n, 0.0);
  }

  void observe(std::size_t k, std::span<const double> cloud) {
    Vector m(d_);
    const bool last = k + 1 == grid_.n_nodes();
    if (!path_ && !last) return;
    Vector target;
    if (path_) target = eval_path(path_->target, grid_.node(k));
    for (std::size_t i = 0; i < n_; ++i) {
      for (int j = 0; j < d_; ++j) m[j] = cloud[i * d_ + j];
      if (center_) m = (m - center_->values[k]) / scale_;
      if (path_) {
        sup_[i] = std::max(sup_[i], (m - target).norm());
        if (last && sup_[i] <= path_->tol + 1e-9) ++hits_;
      } else if (rate::terminal_in_event(event_, m)) {
        ++hits_;
      }
    }
  }

  std::size_t hits() const { return hits_; }

 private:
  const rate::EventSpec& event_;
  const TimeGrid& grid_;
  std::size_t n_;
  int d_;
  const Path* center_;
  double scale_;
  const rate::PinPath* path_;
  std::vector<double> sup_;
  std::size_t hits_ = 0;
};

Estimate make_estimate(double eps, double speed, std::size_t hits, std::size_t n) {
  Estimate e;
  e.eps = eps;
  e.speed = speed;
  e.hits = hits;
  e.samples = n;
  e.value = static_cast<double>(hits) / static_cast<double>(n);
  e.value_se = std::sqrt(e.value * (1.0 - e.value) / static_cast<double>(n));
  e.censored = hits == 0;
  if (!e.censored) {
    e.statistic = -speed * std::log(e.value);
    e.statistic_se = speed * e.value_se / e.value;
  } else {
    e.statistic = std::numeric_limits<double>::infinity();
  }
  return e;
}

struct LineFit {
  double intercept = 0.0, slope = 0.0, intercept_se = 0.0, slope_se = 0.0;
};

// Ordinary least squares y = intercept + slope * x; standard errors from
// the per-point errors.
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y,
                 const std::vector<double>& se) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  double vi = 0.0, vs = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double cs = sxx > 0.0 ? (x[i] - mx) / sxx : 0.0;
    const double ci = 1.0 / n - mx * cs;
    vi += ci * ci * se[i] * se[i];
    vs += cs * cs * se[i] * se[i];
  }
  f.intercept_se = std::sqrt(vi);
  f.slope_se = std::sqrt(vs);
  return f;
}

void fit_rate(SlopeReport& r, FitMethod method) {
  if (method == FitMethod::automatic)
    method = r.reference > 0.0 ? FitMethod::prefactor_corrected : FitMethod::linear;
  r.method = method == FitMethod::linear
                 ? "linear fit of -s log p in s"
                 : "linear fit of -s log p + (s/2) log s in s";
  std::vector<double> x, y, se;
  for (const auto& p : r.points) {
    if (p.censored) continue;
    double v = p.statistic;
    if (method == FitMethod::prefactor_corrected) v += 0.5 * p.speed * std::log(p.speed);
    x.push_back(p.speed);
    y.push_back(v);
    se.push_back(p.statistic_se);
  }
  const std::size_t censored = r.points.size() - x.size();
  if (censored) r.notes += std::to_string(censored) + " censored point(s) excluded; ";
  if (x.empty()) {
    r.inconclusive = true;
    r.pass = false;
    r.fitted = std::numeric_limits<double>::quiet_NaN();
    r.notes += "all points censored";
    return;
  }
  if (x.size() == 1) {
    r.fitted = y[0];
    r.fitted_se = se[0];
    r.notes += "single uncensored point, no extrapolation";
  } else {
    const LineFit f = fit_line(x, y, se);
    r.fitted = f.intercept;
    r.fitted_se = f.intercept_se;
  }
  r.pass = std::abs(r.fitted - r.reference) <= r.tolerance;
}

dynamics::SimOptions observed(int jobs, dynamics::StepObserver obs) {
  dynamics::SimOptions o;
  o.jobs = jobs;
  o.store_paths = false;
  o.observer = std::move(obs);
  return o;
}

// Mean and standard error of per-particle values.
std::pair<double, double> mean_se(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double m = 0.0;
  for (double x : v) m += x / n;
  double var = 0.0;
  for (double x : v) var += (x - m) * (x - m);
  var /= std::max(1.0, n - 1.0);
  return {m, std::sqrt(var / n)};
}

}  // namespace

SlopeReport check_ldp(const ModelSpec& spec, const rate::EventSpec& event,
                      const std::vector<double>& eps_list, const TimeGrid& grid,
                      const CheckConfig& cfg) {
  check_eps_list(eps_list, 3);
  require(cfg.particles >= 2, ErrorKind::invalid_argument, "need at least 2 particles");
  SlopeReport r;
  r.name = "ldp";
  r.tolerance = cfg.tolerance.value_or(0.03);
  if (cfg.reference) {
    r.reference = *cfg.reference;
  } else {
    const Path x0 = skeleton::solve_limit_ode(spec, grid);
    r.reference = rate::ldp_rate(spec, x0, event, grid, cfg.opt).value;
  }
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    const double eps = eps_list[i];
    EventCounter counter(event, grid, cfg.particles, spec.dim, nullptr, 1.0);
    dynamics::simulate_mvsde(
        spec, eps, cfg.particles, grid, derive_seed(cfg.seed, i, 0x1d),
        observed(cfg.jobs, [&](std::size_t k, double, std::span<const double> c) {
          counter.observe(k, c);
        }));
    r.points.push_back(make_estimate(eps, eps, counter.hits(), cfg.particles));
  }
  if (r.points.front().value * static_cast<double>(cfg.particles) < 50.0)
    r.notes += "fewer than 50 hits at the largest eps; ";
  if (!std::isfinite(r.reference)) {
    r.notes += "event infeasible for the skeleton; ";
  }
  fit_rate(r, cfg.fit);
  return r;
}

SlopeReport check_mdp(const ModelSpec& spec, const rate::EventSpec& event,
                      const std::vector<double>& eps_list, const MdpSpeed& a_of_eps,
                      const TimeGrid& grid, const CheckConfig& cfg) {
  check_eps_list(eps_list, 3);
  a_of_eps.validate(eps_list);
  require(cfg.particles >= 2, ErrorKind::invalid_argument, "need at least 2 particles");
  SlopeReport r;
  r.name = "mdp";
  r.tolerance = cfg.tolerance.value_or(0.05);
  // Center on the explicit-Euler limit path of the same grid so the
  // scheme's O(dt) drift error does not leak into M through 1/a.
  const Path x0e = skeleton::solve_limit_ode(spec, grid, skeleton::LimitScheme::euler);
  if (cfg.reference) {
    r.reference = *cfg.reference;
  } else {
    const Path x0 = skeleton::solve_limit_ode(spec, grid);
    r.reference = rate::mdp_rate(spec, x0, event, grid).value;
  }
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    const double eps = eps_list[i];
    EventCounter counter(event, grid, cfg.particles, spec.dim, &x0e, a_of_eps.a(eps));
    dynamics::simulate_mvsde(
        spec, eps, cfg.particles, grid, derive_seed(cfg.seed, i, 0x2d),
        observed(cfg.jobs, [&](std::size_t k, double, std::span<const double> c) {
          counter.observe(k, c);
        }));
    r.points.push_back(
        make_estimate(eps, a_of_eps.speed(eps), counter.hits(), cfg.particles));
  }
  std::ostringstream os;
  os << "a(eps) = " << a_of_eps.coef << " eps^" << a_of_eps.exponent << "; ";
  r.notes += os.str();
  fit_rate(r, cfg.fit);
  return r;
}

SlopeReport check_limit_convergence(const ModelSpec& spec,
                                    const std::vector<double>& eps_list,
                                    const TimeGrid& grid, const CheckConfig& cfg) {
  check_eps_list(eps_list, 2);
  SlopeReport r;
  r.name = "limit-convergence";
  r.reference = 1.0;
  r.tolerance = cfg.tolerance.value_or(0.2);
  r.method = "log-log least squares of E sup|X - X0|^2 against eps";
  const Path x0e = skeleton::solve_limit_ode(spec, grid, skeleton::LimitScheme::euler);
  std::vector<double> lx, ly, lse;
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    const double eps = eps_list[i];
    std::vector<double> sup(cfg.particles, 0.0);
    dynamics::simulate_mvsde(
        spec, eps, cfg.particles, grid, derive_seed(cfg.seed, i, 0x3d),
        observed(cfg.jobs, [&](std::size_t k, double, std::span<const double> c) {
          const int d = spec.dim;
          for (std::size_t p = 0; p < sup.size(); ++p) {
            double s = 0.0;
            for (int j = 0; j < d; ++j) {
              const double dv = c[p * d + j] - x0e.values[k][j];
              s += dv * dv;
            }
            sup[p] = std::max(sup[p], s);
          }
        }));
    const auto [m, se] = mean_se(sup);
    Estimate e;
    e.eps = eps;
    e.speed = eps;
    e.samples = cfg.particles;
    e.value = m;
    e.value_se = se;
    e.statistic = m;
    e.statistic_se = se;
    e.censored = !(m > 0.0);
    r.points.push_back(e);
    if (!e.censored) {
      lx.push_back(std::log(eps));
      ly.push_back(std::log(m));
      lse.push_back(se / m);
    }
  }
  if (lx.size() < 2) {
    r.inconclusive = true;
    r.fitted = std::numeric_limits<double>::quiet_NaN();
    r.notes = "fewer than two positive estimates";
    return r;
  }
  const LineFit f = fit_line(lx, ly, lse);
  r.fitted = f.slope;
  r.fitted_se = f.slope_se;
  r.pass = std::abs(r.fitted - r.reference) <= r.tolerance;
  return r;
}

SlopeReport check_controlled_convergence(const ModelSpec& spec, const Control& u,
                                         const std::vector<double>& eps_list,
                                         std::size_t replicas, const TimeGrid& grid,
                                         const CheckConfig& cfg) {
  check_eps_list(eps_list, 2);
  require(replicas >= 1, ErrorKind::invalid_argument, "need at least one replica");
  SlopeReport r;
  r.name = "controlled-convergence";
  r.reference = 0.0;
  r.tolerance = cfg.tolerance.value_or(0.05);
  r.method = "E sup|Z^u - Y^u|^2 per eps; monotone decrease and final value";
  const Path x0 = skeleton::solve_limit_ode(spec, grid);
  const Path y = skeleton::solve_ldp_skeleton(spec, x0, u, grid).path;
  std::vector<double> lx, ly, lse;
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    const double eps = eps_list[i];
    const auto frozen = dynamics::simulate_mvsde(spec, eps, cfg.particles, grid,
                                                 derive_seed(cfg.seed, i, 0x4d),
                                                 {cfg.jobs, true, {}});
    std::vector<double> sup(replicas, 0.0);
    dynamics::simulate_controlled_frozen(
        spec, eps, u, frozen, replicas, grid, derive_seed(cfg.seed, i, 0x5d),
        observed(cfg.jobs, [&](std::size_t k, double, std::span<const double> c) {
          const int d = spec.dim;
          for (std::size_t p = 0; p < sup.size(); ++p) {
            double s = 0.0;
            for (int j = 0; j < d; ++j) {
              const double dv = c[p * d + j] - y.values[k][j];
              s += dv * dv;
            }
            sup[p] = std::max(sup[p], s);
          }
        }));
    const auto [m, se] = mean_se(sup);
    Estimate e;
    e.eps = eps;
    e.speed = eps;
    e.samples = replicas;
    e.value = m;
    e.value_se = se;
    e.statistic = m;
    e.statistic_se = se;
    r.points.push_back(e);
    if (m > 0.0) {
      lx.push_back(std::log(eps));
      ly.push_back(std::log(m));
      lse.push_back(se / m);
    }
  }
  bool monotone = true;
  for (std::size_t i = 1; i < r.points.size(); ++i) {
    const auto& a = r.points[i - 1];
    const auto& b = r.points[i];
    if (b.value > a.value + 2.0 * std::hypot(a.value_se, b.value_se)) monotone = false;
  }
  r.fitted = r.points.back().value;
  r.fitted_se = r.points.back().value_se;
  if (lx.size() >= 2) {
    const LineFit f = fit_line(lx, ly, lse);
    std::ostringstream os;
    os << "log-log slope " << f.slope << " +- " << f.slope_se << "; ";
    r.notes += os.str();
  }
  if (!monotone) r.notes += "estimates not decreasing; ";
  r.pass = monotone && r.fitted <= r.tolerance;
  return r;
}

DemoRecord demo_frozen_vs_selfconsistent(const ModelSpec& spec, double eps,
                                         std::size_t particles, const TimeGrid& grid,
                                         std::uint64_t seed, double phi, int jobs,
                                         double tolerance) {
  require(spec.dim == 1 && !spec.has_jumps(), ErrorKind::invalid_argument,
          "the frozen-law demonstration needs a one-dimensional jump-free model");
  require(particles >= 2, ErrorKind::invalid_argument, "need at least 2 particles");
  DemoRecord rec;
  rec.eps = eps;
  rec.tolerance = tolerance;
  Control u(StepFunction(grid, 1, phi), StepFunction(grid, 0, 1.0), 1e-3, 1e3);

  auto terminal_mean = [](const dynamics::ParticleEnsemble& e) {
    const auto c = e.terminal_cloud();
    return mean_se(std::vector<double>(c.begin(), c.end()));
  };
  {
    const auto frozen = dynamics::simulate_mvsde(spec, eps, particles, grid, seed,
                                                 {jobs, true, {}});
    const auto ctrl = dynamics::simulate_controlled_frozen(
        spec, eps, u, frozen, particles, grid, derive_seed(seed, 1, 0x6d), {jobs, false, {}});
    std::tie(rec.frozen_mean_T, rec.frozen_se) = terminal_mean(ctrl);
  }
  const auto self = dynamics::simulate_controlled_selfconsistent(
      spec, eps, u, particles, grid, derive_seed(seed, 2, 0x6d), {jobs, false, {}});
  std::tie(rec.selfconsistent_mean_T, rec.selfconsistent_se) = terminal_mean(self);

  const Path x0 = skeleton::solve_limit_ode(spec, grid);
  rec.skeleton_T = skeleton::solve_ldp_skeleton(spec, x0, u, grid).path.terminal()[0];
  rec.wrong_ode_T = skeleton::solve_selfconsistent_skeleton(spec, u, grid).terminal()[0];
  rec.frozen_matches = std::abs(rec.frozen_mean_T - rec.skeleton_T) <=
                       tolerance + 3.0 * rec.frozen_se;
  rec.selfconsistent_matches = std::abs(rec.selfconsistent_mean_T - rec.wrong_ode_T) <=
                               tolerance + 3.0 * rec.selfconsistent_se;
  return rec;
}

// ---------------------------------------------------------------------------

namespace {
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
}  // namespace

json to_json(const SlopeReport& r) {
  json pts = json::array();
  for (const auto& p : r.points)
    pts.push_back({{"eps", p.eps}, {"speed", p.speed}, {"hits", p.hits},
                   {"samples", p.samples}, {"estimate", num(p.value)},
                   {"estimate_se", num(p.value_se)}, {"statistic", num(p.statistic)},
                   {"statistic_se", num(p.statistic_se)}, {"censored", p.censored}});
  return {{"name", r.name},         {"points", pts},
          {"fitted", num(r.fitted)}, {"fitted_se", num(r.fitted_se)},
          {"reference", num(r.reference)}, {"tolerance", r.tolerance},
          {"pass", r.pass},          {"inconclusive", r.inconclusive},
          {"method", r.method},      {"notes", r.notes}};
}

json to_json(const DemoRecord& r) {
  return {{"eps", r.eps},
          {"frozen_mean_T", r.frozen_mean_T},
          {"frozen_se", r.frozen_se},
          {"selfconsistent_mean_T", r.selfconsistent_mean_T},
          {"selfconsistent_se", r.selfconsistent_se},
          {"skeleton_T", r.skeleton_T},
          {"wrong_ode_T", r.wrong_ode_T},
          {"tolerance", r.tolerance},
          {"frozen_matches", r.frozen_matches},
          {"selfconsistent_matches", r.selfconsistent_matches}};
}

void write_csv(std::ostream& os, const SlopeReport& r) {
  os << "eps,speed,hits,samples,estimate,estimate_se,statistic,statistic_se,censored\n"
     << std::setprecision(12);
  for (const auto& p : r.points)
    os << p.eps << ',' << p.speed << ',' << p.hits << ',' << p.samples << ',' << p.value
       << ',' << p.value_se << ',' << p.statistic << ',' << p.statistic_se << ','
       << (p.censored ? 1 : 0) << '\n';
}

}  // namespace mvldp::verify
