#include "mvldp/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mvldp::skeleton {

namespace {

constexpr double kOverflowGuard = 1e150;

void guard(const Vector& x, int step) {
  for (Eigen::Index j = 0; j < x.size(); ++j)
    if (!std::isfinite(x[j]) || std::abs(x[j]) > kOverflowGuard)
      fail(ErrorKind::diverged, "skeleton solution diverged at step " + std::to_string(step));
}

Vector drift_at_dirac(const Coefficients& c, double t, const Vector& x) {
  Vector out(x.size());
  c.drift(t, x, LawSummary::dirac(x), out);
  return out;
}

}  // namespace

Path solve_limit_ode(const ModelSpec& spec, const TimeGrid& grid, LimitScheme scheme) {
  require(spec.initial.size() == spec.dim, ErrorKind::invalid_argument,
          "initial condition dimension mismatch");
  std::vector<Vector> values;
  values.reserve(grid.n_nodes());
  Vector x = spec.initial;
  values.push_back(x);
  for (int k = 0; k < grid.n_steps(); ++k) {
    const double t = grid.node(k);
    const double h = grid.dt(k);
    if (scheme == LimitScheme::euler) {
      x += h * drift_at_dirac(spec.limit, t, x);
    } else {
      const Vector k1 = drift_at_dirac(spec.limit, t, x);
      const Vector k2 = drift_at_dirac(spec.limit, t + 0.5 * h, x + 0.5 * h * k1);
      const Vector k3 = drift_at_dirac(spec.limit, t + 0.5 * h, x + 0.5 * h * k2);
      const Vector k4 = drift_at_dirac(spec.limit, t + h, x + h * k3);
      x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    guard(x, k);
    values.push_back(x);
  }
  return Path(grid, std::move(values), Interpolation::linear);
}

// ---------------------------------------------------------------------------

SkeletonResult solve_ldp_skeleton(const ModelSpec& spec, const Path& x0, const Control& u,
                                  const TimeGrid& grid, const PicardConfig& cfg) {
  require(x0.grid == grid, ErrorKind::incompatible_grids,
          "limit path must be solved on the skeleton grid");
  require(cfg.tol > 0.0 && cfg.max_iters >= 1 && cfg.damping > 0.0 && cfg.damping <= 1.0,
          ErrorKind::invalid_argument, "invalid Picard configuration");
  require(u.phi.width() == spec.dim &&
              u.psi.width() == static_cast<int>(spec.n_marks()),
          ErrorKind::invalid_control, "control shape does not match the model");

  const int d = spec.dim;
  const std::size_t n_nodes = grid.n_nodes();
  const std::size_t n_marks = spec.n_marks();
  const auto& c = spec.limit;

  // Frozen laws and the unperturbed drift along x0.
  std::vector<LawSummary> laws;
  std::vector<Vector> b_ref;
  laws.reserve(n_nodes);
  b_ref.reserve(n_nodes);
  for (std::size_t k = 0; k < n_nodes; ++k) {
    laws.push_back(LawSummary::dirac(x0.values[k]));
    Vector b(d);
    c.drift(grid.node(k), x0.values[k], laws.back(), b);
    b_ref.push_back(std::move(b));
  }
  // Per-step control values (constant on each step).
  std::vector<Vector> phi(grid.n_steps());
  std::vector<Vector> tilt(grid.n_steps());  // (psi - 1) * nu per mark cell
  for (int k = 0; k < grid.n_steps(); ++k) {
    const double t_mid = grid.node(k) + 0.5 * grid.dt(k);
    phi[k] = u.phi(t_mid);
    tilt[k] = Vector(static_cast<Eigen::Index>(n_marks));
    if (n_marks) {
      const auto psi = u.psi(t_mid);
      for (std::size_t j = 0; j < n_marks; ++j)
        tilt[k][j] = (psi[j] - 1.0) * spec.intensity.cell(j).mass;
    }
  }

  std::vector<Vector> dev(n_nodes, Vector::Zero(d));
  std::vector<Vector> next(n_nodes, Vector::Zero(d));
  std::vector<Vector> bd(n_nodes, Vector(d));
  std::vector<Matrix> sig(n_nodes, Matrix(d, d));
  std::vector<Matrix> jmp(n_nodes, Matrix(d, static_cast<Eigen::Index>(n_marks)));
  Vector y(d), g(d);

  SkeletonResult result;
  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    for (std::size_t k = 0; k < n_nodes; ++k) {
      const double t = grid.node(k);
      y = x0.values[k] + dev[k];
      c.drift(t, y, laws[k], bd[k]);
      bd[k] -= b_ref[k];
      c.diffusion(t, y, laws[k], sig[k]);
      for (std::size_t j = 0; j < n_marks; ++j) {
        c.jump(t, y, laws[k], spec.intensity.cell(j).mark, g);
        jmp[k].col(static_cast<Eigen::Index>(j)) = g;
      }
    }
    next[0].setZero();
    for (int k = 0; k < grid.n_steps(); ++k) {
      const double h = grid.dt(k);
      Vector integrand = bd[k] + bd[k + 1] + (sig[k] + sig[k + 1]) * phi[k];
      if (n_marks) integrand += (jmp[k] + jmp[k + 1]) * tilt[k];
      next[k + 1] = next[k] + (0.5 * h) * integrand;
    }
    double residual = 0.0;
    for (std::size_t k = 0; k < n_nodes; ++k)
      residual = std::max(residual, (next[k] - dev[k]).lpNorm<Eigen::Infinity>());
    for (std::size_t k = 0; k < n_nodes; ++k) {
      dev[k] += cfg.damping * (next[k] - dev[k]);
      guard(dev[k], static_cast<int>(k));
    }
    result.iterations = iter;
    result.residual = residual;
    if (residual < cfg.tol) {
      std::vector<Vector> values(n_nodes);
      for (std::size_t k = 0; k < n_nodes; ++k) values[k] = x0.values[k] + dev[k];
      result.path = Path(grid, std::move(values), Interpolation::linear);
      return result;
    }
  }
  fail(ErrorKind::no_convergence,
       "Picard iteration did not converge; last residual " + std::to_string(result.residual));
}

Path solve_selfconsistent_skeleton(const ModelSpec& spec, const Control& u,
                                   const TimeGrid& grid) {
  const int d = spec.dim;
  const std::size_t n_marks = spec.n_marks();
  const auto& c = spec.limit;
  Vector weights(static_cast<Eigen::Index>(n_marks));
  Vector phi(d);
  auto rhs = [&](double t, const Vector& y) {
    const LawSummary law = LawSummary::dirac(y);
    Vector b(d), extra(d);
    Matrix s(d, d);
    c.drift(t, y, law, b);
    c.diffusion(t, y, law, s);
    b += s * phi;
    if (n_marks) {
      jump_integral(spec, c.jump, t, y, law,
                    std::span<const double>(weights.data(), n_marks), extra);
      b += extra;
    }
    return b;
  };
  std::vector<Vector> values;
  Vector y = spec.initial;
  values.push_back(y);
  for (int k = 0; k < grid.n_steps(); ++k) {
    const double t = grid.node(k);
    const double h = grid.dt(k);
    phi = u.phi(t + 0.5 * h);
    if (n_marks) {
      const auto psi = u.psi(t + 0.5 * h);
      for (std::size_t j = 0; j < n_marks; ++j) weights[j] = psi[j] - 1.0;
    }
    const Vector k1 = rhs(t, y);
    const Vector k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1);
    const Vector k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2);
    const Vector k4 = rhs(t + h, y + h * k3);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    guard(y, k);
    values.push_back(y);
  }
  return Path(grid, std::move(values), Interpolation::linear);
}

// ---------------------------------------------------------------------------

Matrix jacobian_b_x(const ModelSpec& spec, double t, ConstVecRef x, const LawSummary& mu) {
  const int d = spec.dim;
  Matrix jac(d, d);
  if (spec.drift_jacobian) {
    (*spec.drift_jacobian)(t, x, mu, jac);
  } else {
    const double h = 1e-6 * (1.0 + x.norm());
    Vector xp = x, xm = x, bp(d), bm(d);
    for (int j = 0; j < d; ++j) {
      xp[j] = x[j] + h;
      xm[j] = x[j] - h;
      spec.limit.drift(t, xp, mu, bp);
      spec.limit.drift(t, xm, mu, bm);
      jac.col(j) = (bp - bm) / (2.0 * h);
      xp[j] = x[j];
      xm[j] = x[j];
    }
  }
  require(jac.allFinite(), ErrorKind::numeric_error, "drift Jacobian is not finite");
  return jac;
}

MdpLinearization::Stage MdpLinearization::make_stage(const ModelSpec& spec, double t,
                                                     const Vector& x0) const {
  const LawSummary law = LawSummary::dirac(x0);
  Stage s{jacobian_b_x(spec, t, x0, law), Matrix(dim_, dim_),
          Matrix(dim_, static_cast<Eigen::Index>(n_marks_))};
  spec.limit.diffusion(t, x0, law, s.sigma);
  Vector g(dim_);
  for (std::size_t j = 0; j < n_marks_; ++j) {
    const auto& cell = spec.intensity.cell(j);
    spec.limit.jump(t, x0, law, cell.mark, g);
    s.jump.col(static_cast<Eigen::Index>(j)) = cell.mass * g;
  }
  return s;
}

MdpLinearization::MdpLinearization(const ModelSpec& spec, const Path& x0,
                                   const TimeGrid& grid)
    : grid_(grid), dim_(spec.dim), n_marks_(spec.n_marks()) {
  require(x0.grid == grid, ErrorKind::incompatible_grids,
          "limit path must be solved on the skeleton grid");
  nodes_.reserve(grid.n_nodes());
  mids_.reserve(static_cast<std::size_t>(grid.n_steps()));
  for (std::size_t k = 0; k < grid.n_nodes(); ++k)
    nodes_.push_back(make_stage(spec, grid.node(k), x0.values[k]));
  for (int k = 0; k < grid.n_steps(); ++k) {
    // Cubic Hermite midpoint of x0 using x0' = b(t, x0, delta_x0).
    const double h = grid.dt(k);
    const Vector& xa = x0.values[k];
    const Vector& xb = x0.values[k + 1];
    const Vector fa = drift_at_dirac(spec.limit, grid.node(k), xa);
    const Vector fb = drift_at_dirac(spec.limit, grid.node(k + 1), xb);
    const Vector xm = 0.5 * (xa + xb) + (h / 8.0) * (fa - fb);
    mids_.push_back(make_stage(spec, grid.node(k) + 0.5 * h, xm));
  }
}

Path MdpLinearization::solve(const MdpControl& u) const {
  require(u.phi.width() == dim_ && u.vphi.width() == static_cast<int>(n_marks_),
          ErrorKind::invalid_control, "MDP control shape does not match the model");
  std::vector<Vector> values;
  values.reserve(grid_.n_nodes());
  Vector k_state = Vector::Zero(dim_);
  values.push_back(k_state);
  Vector vphi(static_cast<Eigen::Index>(n_marks_));
  for (int k = 0; k < grid_.n_steps(); ++k) {
    const double h = grid_.dt(k);
    const double t_mid = grid_.node(k) + 0.5 * h;
    const Vector phi = u.phi(t_mid);
    if (n_marks_) vphi = u.vphi(t_mid);
    auto rhs = [&](const Stage& s, const Vector& state) {
      Vector out = s.jac * state + s.sigma * phi;
      if (n_marks_) out += s.jump * vphi;
      return out;
    };
    const Vector k1 = rhs(nodes_[k], k_state);
    const Vector k2 = rhs(mids_[k], k_state + 0.5 * h * k1);
    const Vector k3 = rhs(mids_[k], k_state + 0.5 * h * k2);
    const Vector k4 = rhs(nodes_[k + 1], k_state + h * k3);
    k_state += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    guard(k_state, k);
    values.push_back(k_state);
  }
  return Path(grid_, std::move(values), Interpolation::linear);
}

Path solve_mdp_skeleton(const ModelSpec& spec, const Path& x0, const MdpControl& u,
                        const TimeGrid& grid) {
  return MdpLinearization(spec, x0, grid).solve(u);
}

}  // namespace mvldp::skeleton
