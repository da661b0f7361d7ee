#include "mvldp/dynamics.hpp"
#include "mvldp/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <thread>

namespace mvldp::dynamics {

namespace {

constexpr std::uint64_t kBrownianStream = 0;
constexpr std::uint64_t kJumpStream = 1;
constexpr double kOverflowGuard = 1e150;

template <class F>
void parallel_for(std::size_t n, int jobs, F&& body) {
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), n);
  if (workers <= 1) {
    body(std::size_t{0}, n);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end] { body(begin, end); });
  }
}

// Per-particle random streams. Each particle owns its Brownian engine and a
// lifted PRM sampler, so the draw sequence of particle i is independent of
// how particles are split across threads.
struct ParticleNoise {
  std::vector<Xoshiro256> brownian;
  std::vector<std::normal_distribution<double>> normals;
  std::vector<std::optional<levy::LiftedPrmSampler>> jumps;

  ParticleNoise(const ModelSpec& spec, double eps, std::size_t n, std::uint64_t seed,
                int layers) {
    brownian.reserve(n);
    normals.resize(n);
    jumps.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      brownian.emplace_back(derive_seed(seed, i, kBrownianStream));
      if (spec.has_jumps())
        jumps[i].emplace(spec.intensity, 1.0 / eps, derive_seed(seed, i, kJumpStream),
                         layers);
    }
  }
};

struct MdpSetup {
  double a = 1.0;
  const Path* x0 = nullptr;
  std::size_t clamps = 0;
};

void check_frozen(const ModelSpec& spec, double eps, const TimeGrid& grid,
                  const ParticleEnsemble& frozen) {
  const bool ok = frozen.grid() == grid && frozen.eps() == eps &&
                  frozen.dim() == spec.dim && frozen.model_name() == spec.name &&
                  frozen.has_paths();
  require(ok, ErrorKind::incompatible_frozen_law,
          "frozen ensemble must be a stored run of the same model, eps and grid");
}

void check_control(const ModelSpec& spec, const TimeGrid& grid, const Control& u) {
  require(u.phi.width() == spec.dim, ErrorKind::invalid_control,
          "phi width must equal the state dimension");
  require(u.psi.width() == static_cast<int>(spec.n_marks()), ErrorKind::invalid_control,
          "psi width must equal the number of mark cells");
  require(u.phi.grid().horizon() == grid.horizon(), ErrorKind::incompatible_grids,
          "control grid horizon differs from the simulation grid");
}

}  // namespace

class EnsembleBuilder {
 public:
  static ParticleEnsemble run(const ModelSpec& spec, double eps, const Control& u,
                              const ParticleEnsemble* frozen, std::size_t n,
                              const TimeGrid& grid, std::uint64_t seed,
                              const SimOptions& opts, const MdpSetup* mdp);
};

ParticleEnsemble EnsembleBuilder::run(const ModelSpec& spec, double eps, const Control& u,
                                      const ParticleEnsemble* frozen, std::size_t n,
                                      const TimeGrid& grid, std::uint64_t seed,
                                      const SimOptions& opts, const MdpSetup* mdp) {
  require(eps > 0.0 && std::isfinite(eps), ErrorKind::invalid_argument,
          "eps must be positive");
  check_control(spec, grid, u);
  const int d = spec.dim;
  const std::size_t nd = n * static_cast<std::size_t>(d);
  const std::size_t n_nodes = grid.n_nodes();
  const Coefficients coeffs = spec.at(eps);
  const std::size_t n_marks = spec.n_marks();
  const double sqrt_eps = std::sqrt(eps);

  ParticleEnsemble ens;
  ens.grid_ = grid;
  ens.dim_ = d;
  ens.n_ = n;
  ens.eps_ = eps;
  ens.seed_ = seed;
  ens.model_ = spec.name;
  ens.full_ = opts.store_paths;
  ens.states_.assign(opts.store_paths ? n_nodes * nd : nd, 0.0);

  std::vector<double> cur(nd), next(nd);
  for (std::size_t i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) cur[i * d + j] = mdp ? 0.0 : spec.initial[j];

  ParticleNoise noise(spec, eps, n, seed, levy::layers_for(u.max_psi()));

  auto record = [&](std::size_t k) {
    if (opts.store_paths) std::copy(cur.begin(), cur.end(), ens.states_.begin() + k * nd);
    if (opts.observer) opts.observer(k, grid.node(k), cur);
  };
  record(0);

  std::atomic<bool> diverged{false};
  Vector b0(d);
  for (int k = 0; k < grid.n_steps(); ++k) {
    const double t = grid.node(k);
    const double dt = grid.dt(k);
    const double sqrt_dt = std::sqrt(dt);
    const double t_mid = t + 0.5 * dt;
    const LawSummary law = frozen ? LawSummary::empirical(frozen->cloud(k), d)
                                  : LawSummary::empirical(cur, d);
    const auto phi = u.phi(t_mid);
    const auto psi_step =
        n_marks ? u.psi(t_mid) : Eigen::Map<const Vector>(nullptr, 0);
    Vector x0k;
    if (mdp) {
      x0k = mdp->x0->values[k];
      spec.limit.drift(t, x0k, LawSummary::dirac(x0k), b0);
    }

    parallel_for(n, opts.jobs, [&](std::size_t begin, std::size_t end) {
      Vector x(d), xe(d), b(d), drift(d), comp(d), tilt(d), g(d), dw(d), xj(d);
      Matrix s(d, d);
      std::vector<levy::LiftedPrmSampler::Point> events;
      for (std::size_t i = begin; i < end; ++i) {
        for (int j = 0; j < d; ++j) x[j] = cur[i * d + j];
        if (mdp)
          xe = mdp->a * x + x0k;
        else
          xe = x;
        coeffs.drift(t, xe, law, b);
        coeffs.diffusion(t, xe, law, s);
        comp.setZero();
        tilt.setZero();
        for (std::size_t c = 0; c < n_marks; ++c) {
          const auto& cell = spec.intensity.cell(c);
          coeffs.jump(t, xe, law, cell.mark, g);
          const double psi = psi_step[static_cast<Eigen::Index>(c)];
          comp += (psi * cell.mass) * g;
          tilt += ((psi - 1.0) * cell.mass) * g;
        }
        auto& normal = noise.normals[i];
        auto& rng = noise.brownian[i];
        for (int j = 0; j < d; ++j) dw[j] = sqrt_dt * normal(rng);

        if (mdp) {
          const double a = mdp->a;
          drift = (b - b0) / a + s * phi + (tilt - comp) / a;
          x += drift * dt + (sqrt_eps / a) * (s * dw);
        } else {
          drift = b + s * phi + tilt;
          x += drift * dt - comp * dt + sqrt_eps * (s * dw);
        }

        if (noise.jumps[i]) {
          noise.jumps[i]->step(t, t + dt, events);
          for (const auto& ev : events) {
            if (ev.lift > u.psi(ev.time)[static_cast<Eigen::Index>(ev.cell)]) continue;
            const auto& mark = spec.intensity.cell(ev.cell).mark;
            if (mdp) {
              xj = mdp->a * x + eval_path(*mdp->x0, ev.time);
              coeffs.jump(ev.time, xj, law, mark, g);
              x += (eps / mdp->a) * g;
            } else {
              coeffs.jump(ev.time, x, law, mark, g);
              x += eps * g;
            }
          }
        }

        for (int j = 0; j < d; ++j) {
          if (!std::isfinite(x[j]) || std::abs(x[j]) > kOverflowGuard)
            diverged.store(true, std::memory_order_relaxed);
          next[i * d + j] = x[j];
        }
      }
    });

    if (diverged.load())
      fail(ErrorKind::diverged,
           "particle state overflow at step " + std::to_string(k));
    std::swap(cur, next);
    record(static_cast<std::size_t>(k) + 1);
  }
  if (!opts.store_paths) std::copy(cur.begin(), cur.end(), ens.states_.begin());
  if (mdp) ens.clamps_ = mdp->clamps;
  return ens;
}

// ---------------------------------------------------------------------------

std::uint64_t ParticleEnsemble::particle_seed(std::size_t i,
                                              std::uint64_t stream) const noexcept {
  return derive_seed(seed_, i, stream);
}

std::span<const double> ParticleEnsemble::cloud(std::size_t k) const {
  const std::size_t nd = n_ * static_cast<std::size_t>(dim_);
  require(k < grid_.n_nodes(), ErrorKind::out_of_range, "node index out of range");
  if (!full_) {
    require(k + 1 == grid_.n_nodes(), ErrorKind::unsupported,
            "ensemble stores only the terminal cloud");
    return {states_.data(), nd};
  }
  return {states_.data() + k * nd, nd};
}

measure::EmpiricalMeasure ParticleEnsemble::law(std::size_t k) const {
  const auto c = cloud(k);
  return measure::EmpiricalMeasure(std::vector<double>(c.begin(), c.end()), dim_);
}

Eigen::Map<const Vector> ParticleEnsemble::value(std::size_t k, std::size_t i) const {
  return Eigen::Map<const Vector>(cloud(k).data() + i * dim_, dim_);
}

Path ParticleEnsemble::path(std::size_t i) const {
  require(full_, ErrorKind::unsupported, "ensemble does not store paths");
  std::vector<Vector> values;
  values.reserve(grid_.n_nodes());
  for (std::size_t k = 0; k < grid_.n_nodes(); ++k) values.emplace_back(value(k, i));
  return Path(grid_, std::move(values), Interpolation::cadlag_step);
}

// ---------------------------------------------------------------------------

NoiseBundle draw_noise(const ModelSpec& spec, double eps, const TimeGrid& grid,
                       std::uint64_t seed, std::span<const std::size_t> particles) {
  NoiseBundle bundle;
  for (std::size_t i : particles) {
    Xoshiro256 rng(derive_seed(seed, i, kBrownianStream));
    std::normal_distribution<double> normal;
    std::vector<double> inc;
    inc.reserve(static_cast<std::size_t>(grid.n_steps()) * spec.dim);
    for (int k = 0; k < grid.n_steps(); ++k) {
      const double sqrt_dt = std::sqrt(grid.dt(k));
      for (int j = 0; j < spec.dim; ++j) inc.push_back(sqrt_dt * normal(rng));
    }
    bundle.brownian.push_back(std::move(inc));
    if (spec.has_jumps())
      bundle.jumps.push_back(levy::sample_prm(spec.intensity, 1.0 / eps, grid,
                                              derive_seed(seed, i, kJumpStream)));
  }
  return bundle;
}

ParticleEnsemble simulate_mvsde(const ModelSpec& spec, double eps, std::size_t n_particles,
                                const TimeGrid& grid, std::uint64_t seed,
                                const SimOptions& opts) {
  require(n_particles >= 2, ErrorKind::invalid_argument, "need at least 2 particles");
  const Control null = Control::null(grid, spec.dim, spec.n_marks());
  return EnsembleBuilder::run(spec, eps, null, nullptr, n_particles, grid, seed, opts,
                              nullptr);
}

ParticleEnsemble simulate_controlled_frozen(const ModelSpec& spec, double eps,
                                            const Control& u,
                                            const ParticleEnsemble& frozen,
                                            std::size_t n_replicas, const TimeGrid& grid,
                                            std::uint64_t seed, const SimOptions& opts) {
  check_frozen(spec, eps, grid, frozen);
  require(n_replicas >= 1, ErrorKind::invalid_argument, "need at least 1 replica");
  return EnsembleBuilder::run(spec, eps, u, &frozen, n_replicas, grid, seed, opts,
                              nullptr);
}

ParticleEnsemble simulate_controlled_selfconsistent(const ModelSpec& spec, double eps,
                                                    const Control& u,
                                                    std::size_t n_particles,
                                                    const TimeGrid& grid,
                                                    std::uint64_t seed,
                                                    const SimOptions& opts) {
  require(n_particles >= 2, ErrorKind::invalid_argument, "need at least 2 particles");
  return EnsembleBuilder::run(spec, eps, u, nullptr, n_particles, grid, seed, opts,
                              nullptr);
}

Control mdp_tilt_control(const MdpControl& u, double a_eps, MdpTiltBounds bounds,
                         std::size_t* clamp_count) {
  require(bounds.lo > 0.0 && bounds.lo <= bounds.hi, ErrorKind::invalid_mdp_tilt,
          "MDP tilt bounds must satisfy 0 < lo <= hi so that psi stays positive");
  StepFunction psi(u.vphi.grid(), u.vphi.width(), 1.0);
  std::size_t clamps = 0;
  for (std::size_t k = 0; k < psi.n_cells(); ++k) {
    for (int j = 0; j < psi.width(); ++j) {
      const double raw = 1.0 + a_eps * u.vphi.at(k, j);
      require(std::isfinite(raw), ErrorKind::invalid_mdp_tilt, "non-finite MDP tilt");
      const double clamped = std::clamp(raw, bounds.lo, bounds.hi);
      if (clamped != raw) ++clamps;
      psi.at(k, j) = clamped;
    }
  }
  if (clamp_count) *clamp_count = clamps;
  return Control(u.phi, std::move(psi), bounds.lo, bounds.hi);
}

ParticleEnsemble simulate_mdp_controlled(const ModelSpec& spec, double eps, double a_eps,
                                         const MdpControl& u,
                                         const ParticleEnsemble& frozen,
                                         const Path& x0_path, std::size_t n_replicas,
                                         const TimeGrid& grid, std::uint64_t seed,
                                         const SimOptions& opts, MdpTiltBounds bounds) {
  require(a_eps > 0.0 && std::isfinite(a_eps), ErrorKind::invalid_argument,
          "a(eps) must be positive");
  require(x0_path.grid == grid, ErrorKind::incompatible_grids,
          "centering path must live on the simulation grid");
  check_frozen(spec, eps, grid, frozen);
  std::size_t clamps = 0;
  const Control tilt = mdp_tilt_control(u, a_eps, bounds, &clamps);
  const MdpSetup setup{a_eps, &x0_path, clamps};
  return EnsembleBuilder::run(spec, eps, tilt, &frozen, n_replicas, grid, seed, opts,
                              &setup);
}

// ---------------------------------------------------------------------------

std::vector<SummaryRow> summarize(const ParticleEnsemble& ens, const Path* x0) {
  std::vector<SummaryRow> rows;
  const int d = ens.dim();
  const std::size_t n = ens.size();
  const std::size_t first = ens.has_paths() ? 0 : ens.grid().n_nodes() - 1;
  for (std::size_t k = first; k < ens.grid().n_nodes(); ++k) {
    SummaryRow row;
    row.t = ens.grid().node(k);
    row.mean = Vector::Zero(d);
    row.variance = Vector::Zero(d);
    for (std::size_t i = 0; i < n; ++i) row.mean += ens.value(k, i);
    row.mean /= static_cast<double>(n);
    double w2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Vector dev = ens.value(k, i) - row.mean;
      row.variance += dev.cwiseProduct(dev);
      if (x0) w2 += (ens.value(k, i) - x0->values[k]).squaredNorm();
    }
    row.variance /= static_cast<double>(n > 1 ? n - 1 : 1);
    row.w2_to_limit = x0 ? std::sqrt(w2 / static_cast<double>(n)) : 0.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  if (rows.empty()) return;
  const auto d = rows.front().mean.size();
  os << "t";
  for (Eigen::Index j = 0; j < d; ++j) os << ",mean" << j;
  for (Eigen::Index j = 0; j < d; ++j) os << ",var" << j;
  os << ",w2_to_limit\n";
  os.precision(17);
  for (const auto& r : rows) {
    os << r.t;
    for (Eigen::Index j = 0; j < d; ++j) os << ',' << r.mean[j];
    for (Eigen::Index j = 0; j < d; ++j) os << ',' << r.variance[j];
    os << ',' << r.w2_to_limit << '\n';
  }
}

void write_ensemble_csv(std::ostream& os, const ParticleEnsemble& ens) {
  os << "node,t,particle";
  for (int j = 0; j < ens.dim(); ++j) os << ",x" << j;
  os << '\n';
  os.precision(17);
  const std::size_t first = ens.has_paths() ? 0 : ens.grid().n_nodes() - 1;
  for (std::size_t k = first; k < ens.grid().n_nodes(); ++k)
    for (std::size_t i = 0; i < ens.size(); ++i) {
      os << k << ',' << ens.grid().node(k) << ',' << i;
      for (int j = 0; j < ens.dim(); ++j) os << ',' << ens.value(k, i)[j];
      os << '\n';
    }
}

}  // namespace mvldp::dynamics
