#include "mvldp/core.hpp"
#include "mvldp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mvldp {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::out_of_range: return "out-of-range";
    case ErrorKind::incompatible_grids: return "incompatible-grids";
    case ErrorKind::invalid_control: return "invalid-control";
    case ErrorKind::numeric_error: return "numeric-error";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::invariant_failure: return "invariant-failure";
    case ErrorKind::diverged: return "diverged";
    case ErrorKind::incompatible_frozen_law: return "incompatible-frozen-law";
    case ErrorKind::no_convergence: return "no-convergence";
    case ErrorKind::invalid_mdp_tilt: return "invalid-mdp-tilt";
    case ErrorKind::parse_error: return "parse-error";
    case ErrorKind::file_not_found: return "file-not-found";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------

IntensityMeasure::IntensityMeasure(std::vector<IntensityCell> cells)
    : cells_(std::move(cells)) {
  require(!cells_.empty(), ErrorKind::invalid_argument,
          "intensity measure needs at least one cell");
  mark_dim_ = static_cast<int>(cells_.front().mark.size());
  for (const auto& c : cells_) {
    require(c.mass > 0.0 && std::isfinite(c.mass), ErrorKind::invalid_argument,
            "intensity cell masses must be positive and finite");
    require(static_cast<int>(c.mark.size()) == mark_dim_, ErrorKind::invalid_argument,
            "all marks must share one dimension");
    total_mass_ += c.mass;
  }
  cumulative_.reserve(cells_.size());
  double acc = 0.0;
  for (const auto& c : cells_) {
    acc += c.mass;
    cumulative_.push_back(acc / total_mass_);
  }
  cumulative_.back() = 1.0;
}

std::size_t IntensityMeasure::pick(double u) const noexcept {
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  auto j = static_cast<std::size_t>(it - cumulative_.begin());
  return std::min(j, cells_.size() - 1);
}

// ---------------------------------------------------------------------------

TimeGrid TimeGrid::uniform(double horizon, int n_steps) {
  require(horizon > 0.0 && std::isfinite(horizon), ErrorKind::invalid_argument,
          "time horizon must be positive");
  require(n_steps >= 1, ErrorKind::invalid_argument, "n_steps must be >= 1");
  TimeGrid g;
  g.horizon_ = horizon;
  g.n_steps_ = n_steps;
  g.nodes_.resize(static_cast<std::size_t>(n_steps) + 1);
  for (int k = 0; k <= n_steps; ++k) g.nodes_[k] = horizon * k / n_steps;
  g.nodes_.back() = horizon;
  return g;
}

TimeGrid TimeGrid::from_nodes(std::vector<double> nodes) {
  require(nodes.size() >= 2, ErrorKind::invalid_argument, "grid needs two nodes");
  require(nodes.front() == 0.0, ErrorKind::invalid_argument, "first node must be 0");
  for (std::size_t k = 1; k < nodes.size(); ++k)
    require(nodes[k] > nodes[k - 1], ErrorKind::invalid_argument,
            "grid nodes must be strictly increasing");
  TimeGrid g;
  g.horizon_ = nodes.back();
  g.n_steps_ = static_cast<int>(nodes.size() - 1);
  const double h0 = nodes[1] - nodes[0];
  g.uniform_ = true;
  for (std::size_t k = 1; k + 1 < nodes.size(); ++k)
    if (nodes[k + 1] - nodes[k] != h0) g.uniform_ = false;
  g.nodes_ = std::move(nodes);
  return g;
}

std::size_t TimeGrid::node_at_or_before(double t) const {
  require(t >= 0.0 && t <= horizon_, ErrorKind::out_of_range,
          "time " + std::to_string(t) + " outside [0, T]");
  auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t);
  return static_cast<std::size_t>(it - nodes_.begin()) - 1;
}

std::size_t TimeGrid::step_containing(double t) const {
  std::size_t k = node_at_or_before(t);
  return std::min<std::size_t>(k, static_cast<std::size_t>(n_steps_) - 1);
}

TimeGrid make_time_grid(double horizon, int n_steps) {
  return TimeGrid::uniform(horizon, n_steps);
}

Path::Path(TimeGrid g, std::vector<Vector> v, Interpolation interp)
    : grid(std::move(g)), values(std::move(v)), interpolation(interp) {
  require(values.size() == grid.n_nodes(), ErrorKind::invalid_argument,
          "path needs one value per grid node");
}

Vector eval_path(const Path& p, double t) {
  const std::size_t k = p.grid.node_at_or_before(t);
  if (p.interpolation == Interpolation::cadlag_step || k + 1 == p.grid.n_nodes() ||
      t == p.grid.node(k))
    return p.values[k];
  const double w = (t - p.grid.node(k)) / p.grid.dt(k);
  return (1.0 - w) * p.values[k] + w * p.values[k + 1];
}

double path_sup_distance(const Path& a, const Path& b) {
  require(a.grid == b.grid, ErrorKind::incompatible_grids,
          "paths live on different grids");
  double best = 0.0;
  for (std::size_t k = 0; k < a.values.size(); ++k)
    best = std::max(best, (a.values[k] - b.values[k]).norm());
  return best;
}

// ---------------------------------------------------------------------------

StepFunction::StepFunction(TimeGrid grid, int width, double fill)
    : grid_(std::move(grid)), width_(width),
      values_(static_cast<std::size_t>(grid_.n_steps()) * width, fill) {
  require(width >= 0, ErrorKind::invalid_argument, "negative step-function width");
}

StepFunction::StepFunction(TimeGrid grid, int width, std::vector<double> values)
    : grid_(std::move(grid)), width_(width), values_(std::move(values)) {
  require(values_.size() == static_cast<std::size_t>(grid_.n_steps()) * width,
          ErrorKind::invalid_argument, "step-function value count mismatch");
}

Control::Control(StepFunction phi_, StepFunction psi_, double lo, double hi)
    : phi(std::move(phi_)), psi(std::move(psi_)), psi_lo(lo), psi_hi(hi) {
  require(lo > 0.0 && lo <= hi && std::isfinite(hi), ErrorKind::invalid_control,
          "psi bounds must satisfy 0 < lo <= hi < inf");
  require(phi.grid() == psi.grid() || psi.width() == 0, ErrorKind::incompatible_grids,
          "phi and psi must share a control grid");
  for (double v : phi.values())
    require(std::isfinite(v), ErrorKind::invalid_control, "phi must be finite");
  for (double v : psi.values())
    require(v >= lo && v <= hi, ErrorKind::invalid_control,
            "psi cell value " + std::to_string(v) + " outside [lo, hi]");
}

Control Control::null(const TimeGrid& grid, int dim, std::size_t n_marks, double lo,
                      double hi) {
  return Control(StepFunction(grid, dim, 0.0),
                 StepFunction(grid, static_cast<int>(n_marks), 1.0), lo, hi);
}

double Control::max_psi() const {
  double m = 1.0;
  for (double v : psi.values()) m = std::max(m, v);
  return m;
}

MdpControl MdpControl::zero(const TimeGrid& grid, int dim, std::size_t n_marks) {
  return {StepFunction(grid, dim, 0.0), StepFunction(grid, static_cast<int>(n_marks), 0.0)};
}

// ---------------------------------------------------------------------------

LawSummary LawSummary::dirac(ConstVecRef point) {
  LawSummary s;
  s.kind_ = Kind::dirac;
  s.mean_ = point;
  return s;
}

LawSummary LawSummary::empirical(std::span<const double> cloud, int dim) {
  require(dim > 0 && !cloud.empty() && cloud.size() % dim == 0,
          ErrorKind::invalid_argument, "empirical law needs a nonempty N x d cloud");
  LawSummary s;
  s.kind_ = Kind::empirical;
  s.cloud_ = cloud;
  s.mean_ = Vector::Zero(dim);
  const std::size_t n = cloud.size() / dim;
  for (std::size_t i = 0; i < n; ++i)
    for (int j = 0; j < dim; ++j) s.mean_[j] += cloud[i * dim + j];
  s.mean_ /= static_cast<double>(n);
  return s;
}

LawSummary LawSummary::mean_only(ConstVecRef mean) {
  LawSummary s;
  s.kind_ = Kind::mean;
  s.mean_ = mean;
  return s;
}

std::size_t LawSummary::size() const {
  switch (kind_) {
    case Kind::dirac: return 1;
    case Kind::empirical: return cloud_.size() / mean_.size();
    case Kind::mean: break;
  }
  fail(ErrorKind::unsupported, "mean-only law summary has no atoms");
}

Eigen::Map<const Vector> LawSummary::atom(std::size_t i) const {
  if (kind_ == Kind::dirac) return Eigen::Map<const Vector>(mean_.data(), mean_.size());
  require(kind_ == Kind::empirical, ErrorKind::unsupported,
          "mean-only law summary has no atoms");
  return Eigen::Map<const Vector>(cloud_.data() + i * mean_.size(), mean_.size());
}

double LawSummary::second_moment() const {
  if (kind_ != Kind::empirical) return mean_.squaredNorm();
  double acc = 0.0;
  for (double v : cloud_) acc += v * v;
  return acc / static_cast<double>(size());
}

// ---------------------------------------------------------------------------

double Modulus::operator()(double eps) const {
  return coef == 0.0 ? 0.0 : coef * std::pow(eps, power);
}

ProbeReport probe_monotonicity(const ModelSpec& spec, int samples, std::uint64_t seed) {
  Xoshiro256 rng(seed);
  std::normal_distribution<double> normal;
  ProbeReport report;
  report.samples = samples;
  const int d = spec.dim;
  Vector x(d), y(d), bx(d), by(d), m(d);
  std::vector<double> cloud(static_cast<std::size_t>(8 * d));
  for (int s = 0; s < samples; ++s) {
    const double t = rng.uniform() * spec.horizon;
    const double scale = 0.5 + 4.0 * rng.uniform();
    for (int j = 0; j < d; ++j) {
      x[j] = scale * normal(rng);
      y[j] = scale * normal(rng);
    }
    for (double& c : cloud) c = scale * normal(rng);
    const LawSummary mu = LawSummary::empirical(cloud, d);
    spec.limit.drift(t, x, mu, bx);
    spec.limit.drift(t, y, mu, by);
    const double lhs = (x - y).dot(bx - by);
    const double dist2 = (x - y).squaredNorm();
    const double rhs = spec.constants.L * dist2 + 1e-9 * (1.0 + dist2);
    if (lhs > rhs) {
      ++report.violations;
      report.max_excess = std::max(report.max_excess, lhs - rhs);
    }
  }
  return report;
}

void jump_integral(const ModelSpec& spec, const JumpFn& jump, double t, ConstVecRef x,
                   const LawSummary& mu, std::span<const double> weights, VecRef out) {
  out.setZero();
  if (!jump || spec.intensity.empty()) return;
  Vector g(spec.dim);
  for (std::size_t j = 0; j < spec.intensity.size(); ++j) {
    const auto& cell = spec.intensity.cell(j);
    jump(t, x, mu, cell.mark, g);
    out += (weights[j] * cell.mass) * g;
  }
}

}  // namespace mvldp
