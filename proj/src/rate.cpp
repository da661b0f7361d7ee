#include "mvldp/rate.hpp"

#include "mvldp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

namespace mvldp::rate {

using nlohmann::json;

double ell(double x) {
  require(x >= 0.0 && !std::isnan(x), ErrorKind::invalid_argument,
          "ell is defined on [0, inf)");
  if (x == 0.0) return 1.0;
  return x * std::log(x) - x + 1.0;
}

double q1_cost(const StepFunction& phi) {
  double acc = 0.0;
  for (std::size_t k = 0; k < phi.n_cells(); ++k)
    acc += phi.cell(k).squaredNorm() * phi.grid().dt(k);
  return 0.5 * acc;
}

double q2_cost(const StepFunction& psi, const IntensityMeasure& m) {
  require(static_cast<std::size_t>(psi.width()) == m.size(), ErrorKind::invalid_control,
          "psi width does not match the number of mark cells");
  double acc = 0.0;
  for (std::size_t k = 0; k < psi.n_cells(); ++k) {
    const double dt = psi.grid().dt(k);
    for (std::size_t j = 0; j < m.size(); ++j) {
      const double v = psi.at(k, static_cast<int>(j));
      require(v >= 0.0, ErrorKind::invalid_control, "psi must be nonnegative");
      acc += ell(v) * m.cell(j).mass * dt;
    }
  }
  return acc;
}

// ---------------------------------------------------------------------------

double event_residual(const EventSpec& event, const Path& y) {
  return std::visit(
      [&](const auto& e) -> double {
        using E = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<E, PinTerminal>) {
          return std::max(0.0, (y.terminal() - e.point).norm() - e.tol);
        } else if constexpr (std::is_same_v<E, HalfspaceTerminal>) {
          return std::max(0.0, e.level - e.direction.dot(y.terminal()));
        } else {
          double sup = 0.0;
          for (std::size_t k = 0; k < e.target.grid.n_nodes(); ++k)
            sup = std::max(sup,
                           (eval_path(y, e.target.grid.node(k)) - e.target.values[k]).norm());
          return std::max(0.0, sup - e.tol);
        }
      },
      event);
}

bool is_terminal_event(const EventSpec& event) {
  return !std::holds_alternative<PinPath>(event);
}

bool terminal_in_event(const EventSpec& event, ConstVecRef y_T, double slack) {
  if (const auto* p = std::get_if<PinTerminal>(&event))
    return (y_T - p->point).norm() <= p->tol + slack;
  if (const auto* h = std::get_if<HalfspaceTerminal>(&event))
    return h->direction.dot(y_T) >= h->level - slack;
  fail(ErrorKind::unsupported, "path events need the whole path");
}

namespace {

std::string vec_str(const Vector& v) {
  std::ostringstream os;
  os << std::setprecision(10);
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::vector<double> parse_numbers(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      // "e", "e+0.5", "e-1": offsets from Euler's number.
      double base = 0.0;
      if (!tok.empty() && tok[0] == 'e') {
        base = std::exp(1.0);
        tok = tok.substr(1);
        if (tok.empty()) {
          out.push_back(base);
          continue;
        }
      }
      std::size_t used = 0;
      out.push_back(base + std::stod(tok, &used));
      require(used == tok.size(), ErrorKind::parse_error, "bad number '" + tok + "'");
    } catch (const std::logic_error&) {
      fail(ErrorKind::parse_error, "bad number '" + tok + "'");
    }
  }
  return out;
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string describe(const EventSpec& event) {
  return std::visit(
      [](const auto& e) -> std::string {
        using E = std::decay_t<decltype(e)>;
        std::ostringstream os;
        os << std::setprecision(10);
        if constexpr (std::is_same_v<E, PinTerminal>) {
          os << "pin:" << vec_str(e.point) << "@" << e.tol;
        } else if constexpr (std::is_same_v<E, HalfspaceTerminal>) {
          os << "halfspace:" << vec_str(e.direction) << ">=" << e.level;
        } else {
          os << "path:" << e.target.grid.n_steps() << " steps@" << e.tol;
        }
        return os.str();
      },
      event);
}

EventSpec parse_event(const std::string& text, int dim) {
  const auto colon = text.find(':');
  require(colon != std::string::npos, ErrorKind::parse_error,
          "event must look like kind:args, got '" + text + "'");
  const std::string kind = text.substr(0, colon);
  std::string body = text.substr(colon + 1);
  double tol = 0.0;
  if (kind == "pin" || kind == "path") {
    const auto at = body.find('@');
    if (at != std::string::npos) {
      const auto t = parse_numbers(body.substr(at + 1));
      require(t.size() == 1 && t[0] >= 0.0, ErrorKind::parse_error,
              "event tolerance must be one nonnegative number");
      tol = t[0];
      body = body.substr(0, at);
    }
  }
  if (kind == "pin") {
    const auto a = parse_numbers(body);
    require(static_cast<int>(a.size()) == dim, ErrorKind::parse_error,
            "pin event needs " + std::to_string(dim) + " coordinates");
    return PinTerminal{to_vector(a), tol};
  }
  if (kind == "halfspace") {
    const auto ge = body.find(">=");
    std::vector<double> w(static_cast<std::size_t>(dim), 1.0);
    std::string level = body;
    if (ge != std::string::npos) {
      w = parse_numbers(body.substr(0, ge));
      level = body.substr(ge + 2);
    } else {
      require(dim == 1, ErrorKind::parse_error,
              "halfspace events in dimension > 1 need w>=c");
    }
    const auto c = parse_numbers(level);
    require(static_cast<int>(w.size()) == dim && c.size() == 1, ErrorKind::parse_error,
            "halfspace event needs a direction of length " + std::to_string(dim) +
                " and one level");
    return HalfspaceTerminal{to_vector(w), c[0]};
  }
  if (kind == "path") {
    std::ifstream in(body);
    require(bool(in), ErrorKind::file_not_found, "cannot open path file '" + body + "'");
    std::vector<double> nodes;
    std::vector<Vector> values;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#' || std::isalpha(static_cast<unsigned char>(line[0])))
        continue;
      const auto row = parse_numbers(line);
      require(static_cast<int>(row.size()) == dim + 1, ErrorKind::parse_error,
              body + ":" + std::to_string(lineno) + ": expected t and " +
                  std::to_string(dim) + " values");
      nodes.push_back(row[0]);
      values.push_back(to_vector(std::vector<double>(row.begin() + 1, row.end())));
    }
    require(nodes.size() >= 2, ErrorKind::parse_error, "path file needs at least two rows");
    return PinPath{Path(TimeGrid::from_nodes(nodes), std::move(values), Interpolation::linear),
                   tol};
  }
  fail(ErrorKind::parse_error, "unknown event kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// LDP rate

namespace {

struct Evaluation {
  double cost = 0.0;
  double residual = 0.0;
  Path path;
};

class LdpProblem {
 public:
  LdpProblem(const ModelSpec& spec, const Path& x0, const EventSpec& event,
             const TimeGrid& grid, const OptConfig& cfg)
      : spec_(spec), x0_(x0), event_(event), grid_(grid), cfg_(cfg),
        ctrl_grid_(TimeGrid::uniform(grid.horizon(), cfg.n_control)),
        d_(spec.dim), m_(static_cast<int>(spec.n_marks())),
        theta_lo_(std::log(cfg.psi_lo)), theta_hi_(std::log(cfg.psi_hi)) {}

  int size() const { return cfg_.n_control * (d_ + m_); }
  bool is_theta(int i) const { return i >= cfg_.n_control * d_; }

  Control control(const Vector& c) const {
    const int nc = cfg_.n_control;
    std::vector<double> phi(c.data(), c.data() + nc * d_);
    std::vector<double> psi(static_cast<std::size_t>(nc * m_));
    for (int i = 0; i < nc * m_; ++i)
      psi[i] = std::clamp(std::exp(c[nc * d_ + i]), cfg_.psi_lo, cfg_.psi_hi);
    return Control(StepFunction(ctrl_grid_, d_, std::move(phi)),
                   StepFunction(ctrl_grid_, m_, std::move(psi)), cfg_.psi_lo, cfg_.psi_hi);
  }

  Evaluation evaluate(const Vector& c) const {
    Control u = control(c);
    Evaluation e;
    e.cost = q1_cost(u.phi) + (m_ ? q2_cost(u.psi, spec_.intensity) : 0.0);
    try {
      e.path = skeleton::solve_ldp_skeleton(spec_, x0_, u, grid_, cfg_.picard).path;
    } catch (const Error& err) {
      throw OptimizerError(err, std::move(u));
    }
    e.residual = event_residual(event_, e.path);
    return e;
  }

  double objective(const Vector& c, double w) const {
    const Evaluation e = evaluate(c);
    return e.cost + w * e.residual * e.residual;
  }

  Vector gradient(const Vector& c, double w) const {
    Vector g(c.size());
    Vector probe = c;
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      const double h = cfg_.fd_step * (1.0 + std::abs(c[i]));
      probe[i] = c[i] + h;
      const double fp = objective(probe, w);
      probe[i] = c[i] - h;
      const double fm = objective(probe, w);
      probe[i] = c[i];
      g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
  }

  Vector project(Vector c) const {
    for (int i = cfg_.n_control * d_; i < size(); ++i)
      c[i] = std::clamp(c[i], theta_lo_, theta_hi_);
    return c;
  }

  // Projected gradient with Barzilai-Borwein steps and Armijo backtracking.
  int minimize(Vector& x, double w) const {
    double f = objective(x, w);
    Vector g = gradient(x, w);
    double alpha = 1.0 / (1.0 + g.lpNorm<Eigen::Infinity>());
    int it = 0;
    for (; it < cfg_.max_inner; ++it) {
      if ((project(x - g) - x).lpNorm<Eigen::Infinity>() < cfg_.inner_tol) break;
      Vector x_new;
      double f_new = f;
      bool accepted = false;
      for (int bt = 0; bt < 50; ++bt) {
        x_new = project(x - alpha * g);
        f_new = objective(x_new, w);
        if (f_new <= f + 1e-4 * g.dot(x_new - x)) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) break;
      const Vector s = x_new - x;
      const Vector g_new = gradient(x_new, w);
      const Vector yv = g_new - g;
      const double decrease = f - f_new;
      x = std::move(x_new);
      g = g_new;
      f = f_new;
      if (s.lpNorm<Eigen::Infinity>() < 1e-13 ||
          decrease <= 1e-16 * (1.0 + std::abs(f)))
        break;
      const double sy = s.dot(yv);
      alpha = sy > 0.0 ? s.squaredNorm() / sy : 2.0 * alpha;
    }
    return it;
  }

  const TimeGrid& ctrl_grid() const { return ctrl_grid_; }

 private:
  const ModelSpec& spec_;
  const Path& x0_;
  const EventSpec& event_;
  const TimeGrid& grid_;
  const OptConfig& cfg_;
  TimeGrid ctrl_grid_;
  int d_, m_;
  double theta_lo_, theta_hi_;
};

struct StartResult {
  Vector coeffs;
  Evaluation eval;
  std::vector<TraceEntry> trace;
  std::exception_ptr error;
};

StartResult run_start(const LdpProblem& prob, const OptConfig& cfg, int start) {
  StartResult r;
  Vector x = Vector::Zero(prob.size());
  if (start > 0) {
    Xoshiro256 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(start), 0));
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      // Box-Muller; the scale is smaller on the log-tilt coordinates.
      const double u1 = 1.0 - rng.uniform(), u2 = rng.uniform();
      const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
      x[i] = (prob.is_theta(static_cast<int>(i)) ? 0.3 : 0.5) * z;
    }
    x = prob.project(x);
  }
  double w = cfg.penalty_init;
  for (int round = 0;; ++round) {
    const int iters = prob.minimize(x, w);
    r.eval = prob.evaluate(x);
    r.trace.push_back({start, round, w, iters, r.eval.cost, r.eval.residual});
    if (r.eval.residual <= cfg.feas_tol || w >= cfg.penalty_ceiling) break;
    w = std::min(w * cfg.penalty_factor, cfg.penalty_ceiling);
  }
  r.coeffs = x;
  return r;
}

}  // namespace

RateResult ldp_rate(const ModelSpec& spec, const Path& x0, const EventSpec& event,
                    const TimeGrid& grid, const OptConfig& cfg) {
  require(cfg.n_control >= 1 && cfg.starts >= 1 && cfg.penalty_init > 0.0 &&
              cfg.penalty_factor > 1.0 && cfg.penalty_ceiling >= cfg.penalty_init &&
              cfg.feas_tol > 0.0 && cfg.fd_step > 0.0,
          ErrorKind::invalid_argument, "invalid optimizer configuration");
  require(x0.grid == grid, ErrorKind::incompatible_grids,
          "limit path must live on the optimization grid");
  const LdpProblem prob(spec, x0, event, grid, cfg);

  std::vector<StartResult> results(static_cast<std::size_t>(cfg.starts));
  const int jobs = std::clamp(cfg.jobs, 1, cfg.starts);
  auto worker = [&](int first) {
    for (int s = first; s < cfg.starts; s += jobs) {
      try {
        results[s] = run_start(prob, cfg, s);
      } catch (...) {
        results[s].error = std::current_exception();
      }
    }
  };
  if (jobs == 1) {
    worker(0);
  } else {
    std::vector<std::jthread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker, j);
  }
  for (const auto& r : results)
    if (r.error) std::rethrow_exception(r.error);

  // Best feasible by cost, then residual, then start index.
  int best = -1;
  for (int s = 0; s < cfg.starts; ++s) {
    const auto& e = results[s].eval;
    if (e.residual > cfg.feas_tol) continue;
    if (best < 0) {
      best = s;
      continue;
    }
    const auto& b = results[best].eval;
    if (e.cost < b.cost || (e.cost == b.cost && e.residual < b.residual)) best = s;
  }
  RateResult out;
  out.method = "penalty-continuation/projected-gradient";
  for (const auto& r : results) out.trace.insert(out.trace.end(), r.trace.begin(), r.trace.end());
  int pick = best;
  if (pick < 0) {
    pick = 0;
    for (int s = 1; s < cfg.starts; ++s)
      if (results[s].eval.residual < results[pick].eval.residual) pick = s;
  }
  const auto& chosen = results[pick];
  out.control = prob.control(chosen.coeffs);
  out.achieved_path = chosen.eval.path;
  out.residual = chosen.eval.residual;
  out.best_start = pick;
  out.feasible = best >= 0;
  out.value = out.feasible ? recompute_cost(out, spec)
                           : std::numeric_limits<double>::infinity();
  return out;
}

// ---------------------------------------------------------------------------
// MDP rate

namespace {

// Weighted least-norm: minimize 1/2 c^T W c subject to A c = p, for p in the
// range of A. Cost = 1/2 p^T G^+ p with G = A W^{-1} A^T.
struct LeastNorm {
  Matrix a;        // constraints x coefficients
  Vector w;        // diagonal weights
  Matrix gram;     // A W^{-1} A^T
  Eigen::SelfAdjointEigenSolver<Matrix> eig;
  double rank_tol = 0.0;

  LeastNorm(Matrix a_, Vector w_) : a(std::move(a_)), w(std::move(w_)) {
    gram = a * w.cwiseInverse().asDiagonal() * a.transpose();
    eig.compute(gram);
    rank_tol = 1e-12 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  }

  // Coefficients of the least-norm control reaching p (p in range).
  Vector coefficients(const Vector& p) const {
    const Matrix& v = eig.eigenvectors();
    Vector lam(v.cols());
    const Vector pr = v.transpose() * p;
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
      const double g = eig.eigenvalues()[i];
      lam[i] = g > rank_tol ? pr[i] / g : 0.0;
    }
    return w.cwiseInverse().asDiagonal() * (a.transpose() * (v * lam));
  }
};

}  // namespace

RateResult mdp_rate(const ModelSpec& spec, const Path& x0, const EventSpec& event,
                    const TimeGrid& grid, int n_control) {
  require(x0.grid == grid, ErrorKind::incompatible_grids,
          "limit path must live on the optimization grid");
  const int nc = n_control > 0 ? n_control : grid.n_steps();
  const TimeGrid cg = TimeGrid::uniform(grid.horizon(), nc);
  const int d = spec.dim;
  const int m = static_cast<int>(spec.n_marks());
  const int n = nc * (d + m);
  const skeleton::MdpLinearization lin(spec, x0, grid);

  auto make_control = [&](const Vector& c) {
    std::vector<double> phi(c.data(), c.data() + nc * d);
    std::vector<double> vphi(c.data() + nc * d, c.data() + n);
    return MdpControl{StepFunction(cg, d, std::move(phi)), StepFunction(cg, m, std::move(vphi))};
  };

  const bool terminal = is_terminal_event(event);
  const PinPath* pin_path = std::get_if<PinPath>(&event);
  const std::size_t n_obs = terminal ? 1 : pin_path->target.grid.n_nodes();
  Matrix a(static_cast<Eigen::Index>(n_obs) * d, n);
  Vector weights(n);
  for (int i = 0; i < n; ++i) {
    const int k = i < nc * d ? i / d : (i - nc * d) / m;
    const double dt = cg.dt(static_cast<std::size_t>(k));
    weights[i] = i < nc * d ? dt : spec.intensity.cell((i - nc * d) % m).mass * dt;
    Vector unit = Vector::Zero(n);
    unit[i] = 1.0;
    const Path col = lin.solve(make_control(unit));
    if (terminal) {
      a.col(i) = col.terminal();
    } else {
      for (std::size_t k2 = 0; k2 < n_obs; ++k2)
        a.col(i).segment(static_cast<Eigen::Index>(k2) * d, d) =
            eval_path(col, pin_path->target.grid.node(k2));
    }
  }

  RateResult out;
  out.mdp = true;
  out.method = "least-norm normal equations";
  const LeastNorm ln(a, weights);
  const auto& evals = ln.eig.eigenvalues();
  const Matrix& evecs = ln.eig.eigenvectors();
  Vector p;  // attained terminal value (or stacked path values)
  bool feasible = true;

  if (const auto* pin = std::get_if<PinTerminal>(&event)) {
    // Split the target into range and null-space parts of the Gram matrix.
    const Vector coords = evecs.transpose() * pin->point;
    double null2 = 0.0;
    for (Eigen::Index i = 0; i < coords.size(); ++i)
      if (evals[i] <= ln.rank_tol) null2 += coords[i] * coords[i];
    if (null2 > pin->tol * pin->tol + 1e-24) {
      feasible = false;
    } else {
      const double tol_r = std::sqrt(std::max(0.0, pin->tol * pin->tol - null2));
      Vector rc = coords;
      for (Eigen::Index i = 0; i < rc.size(); ++i)
        if (evals[i] <= ln.rank_tol) rc[i] = 0.0;
      if (rc.norm() <= tol_r) {
        p = Vector::Zero(d);
      } else if (tol_r == 0.0) {
        p = evecs * rc;
      } else {
        // p(lam) = lam (G^-1 + lam)^-1 r in eigen-coordinates; choose lam so
        // |p - r| = tol_r.
        auto at = [&](double lam) {
          Vector q(rc.size());
          for (Eigen::Index i = 0; i < rc.size(); ++i)
            q[i] = evals[i] > ln.rank_tol ? rc[i] * lam * evals[i] / (1.0 + lam * evals[i])
                                          : 0.0;
          return q;
        };
        double lo = 1e-16, hi = 1.0;
        while ((at(hi) - rc).norm() > tol_r && hi < 1e300) hi *= 2.0;
        for (int it = 0; it < 200; ++it) {
          const double mid = std::sqrt(lo * hi);
          if ((at(mid) - rc).norm() > tol_r) lo = mid; else hi = mid;
        }
        p = evecs * at(hi);
      }
    }
  } else if (const auto* hs = std::get_if<HalfspaceTerminal>(&event)) {
    const double wgw = hs->direction.dot(ln.gram * hs->direction);
    if (hs->level <= 0.0) {
      p = Vector::Zero(d);
    } else if (wgw <= ln.rank_tol * std::max(1.0, hs->direction.squaredNorm())) {
      feasible = false;
    } else {
      p = (hs->level / wgw) * (ln.gram * hs->direction);
    }
  } else {
    Vector target(static_cast<Eigen::Index>(n_obs) * d);
    for (std::size_t k = 0; k < n_obs; ++k)
      target.segment(static_cast<Eigen::Index>(k) * d, d) = pin_path->target.values[k];
    // Least-squares fit in the range; feasibility is judged by the residual.
    p = evecs * [&] {
      Vector c = evecs.transpose() * target;
      for (Eigen::Index i = 0; i < c.size(); ++i)
        if (evals[i] <= ln.rank_tol) c[i] = 0.0;
      return c;
    }();
  }

  if (!feasible) {
    out.feasible = false;
    out.value = std::numeric_limits<double>::infinity();
    out.mdp_control = MdpControl::zero(cg, d, static_cast<std::size_t>(m));
    out.achieved_path = lin.solve(out.mdp_control);
    out.residual = event_residual(event, out.achieved_path);
    return out;
  }
  out.mdp_control = make_control(ln.coefficients(p));
  out.achieved_path = lin.solve(out.mdp_control);
  out.residual = event_residual(event, out.achieved_path);
  out.feasible = out.residual <= 1e-8 * (1.0 + p.norm());
  out.value = out.feasible ? recompute_cost(out, spec) : std::numeric_limits<double>::infinity();
  out.trace.push_back({0, 0, 0.0, 1, out.value, out.residual});
  return out;
}

double recompute_cost(const RateResult& r, const ModelSpec& spec) {
  if (r.mdp) {
    double acc = q1_cost(r.mdp_control.phi);
    const auto& v = r.mdp_control.vphi;
    for (std::size_t k = 0; k < v.n_cells(); ++k)
      for (int j = 0; j < v.width(); ++j)
        acc += 0.5 * v.at(k, j) * v.at(k, j) * spec.intensity.cell(j).mass * v.grid().dt(k);
    return acc;
  }
  double acc = q1_cost(r.control.phi);
  if (r.control.psi.width() > 0) acc += q2_cost(r.control.psi, spec.intensity);
  return acc;
}

// ---------------------------------------------------------------------------

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json step_json(const StepFunction& f) {
  json rows = json::array();
  for (std::size_t k = 0; k < f.n_cells(); ++k) {
    const auto c = f.cell(k);
    rows.push_back(std::vector<double>(c.data(), c.data() + c.size()));
  }
  return rows;
}

}  // namespace

json to_json(const RateResult& r, const ModelSpec& spec) {
  json j;
  j["kind"] = r.mdp ? "mdp" : "ldp";
  j["value"] = finite_or_null(r.value);
  j["feasible"] = r.feasible;
  j["constraint_residual"] = finite_or_null(r.residual);
  j["method"] = r.method;
  j["best_start"] = r.best_start;
  const StepFunction& phi = r.mdp ? r.mdp_control.phi : r.control.phi;
  const StepFunction& jump = r.mdp ? r.mdp_control.vphi : r.control.psi;
  j["control"]["grid"] = phi.grid().nodes();
  j["control"]["phi"] = step_json(phi);
  j["control"][r.mdp ? "vphi" : "psi"] = step_json(jump);
  if (!r.achieved_path.values.empty()) {
    const auto& y = r.achieved_path.terminal();
    j["achieved_terminal"] = std::vector<double>(y.data(), y.data() + y.size());
  }
  json trace = json::array();
  for (const auto& t : r.trace)
    trace.push_back({{"start", t.start}, {"round", t.round}, {"weight", t.weight},
                     {"iterations", t.iterations}, {"cost", t.cost},
                     {"residual", t.residual}});
  j["trace"] = trace;
  j["model"] = spec.name;
  return j;
}

void write_control_csv(std::ostream& os, const Control& u) {
  os << "t0,t1";
  for (int j = 0; j < u.phi.width(); ++j) os << ",phi_" << j;
  for (int j = 0; j < u.psi.width(); ++j) os << ",psi_" << j;
  os << '\n' << std::setprecision(17);
  const auto& g = u.phi.grid();
  for (std::size_t k = 0; k < u.phi.n_cells(); ++k) {
    os << g.node(k) << ',' << g.node(k + 1);
    for (int j = 0; j < u.phi.width(); ++j) os << ',' << u.phi.at(k, j);
    for (int j = 0; j < u.psi.width(); ++j) os << ',' << u.psi.at(k, j);
    os << '\n';
  }
}

Control read_control_csv(std::istream& is, int dim, std::size_t n_marks, double lo,
                         double hi) {
  std::string line;
  require(bool(std::getline(is, line)), ErrorKind::parse_error, "empty control file");
  std::vector<double> nodes, phi, psi;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto row = parse_numbers(line);
    require(row.size() == 2 + dim + n_marks, ErrorKind::parse_error,
            "control csv line " + std::to_string(lineno) + ": expected " +
                std::to_string(2 + dim + n_marks) + " columns");
    if (nodes.empty()) nodes.push_back(row[0]);
    require(std::abs(row[0] - nodes.back()) < 1e-12, ErrorKind::parse_error,
            "control csv line " + std::to_string(lineno) + ": cells must be contiguous");
    nodes.push_back(row[1]);
    phi.insert(phi.end(), row.begin() + 2, row.begin() + 2 + dim);
    psi.insert(psi.end(), row.begin() + 2 + dim, row.end());
  }
  require(nodes.size() >= 2, ErrorKind::parse_error, "control file has no cells");
  const TimeGrid g = TimeGrid::from_nodes(nodes);
  return Control(StepFunction(g, dim, std::move(phi)),
                 StepFunction(g, static_cast<int>(n_marks), std::move(psi)), lo, hi);
}

}  // namespace mvldp::rate
