#pragma once

#include "mvldp/core.hpp"
#include "mvldp/levy.hpp"
#include "mvldp/measure.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mvldp::dynamics {

// Called once per grid node (including node 0) with the N x d cloud at that
// node. Runs on the calling thread between steps.
using StepObserver =
    std::function<void(std::size_t node, double t, std::span<const double> cloud)>;

struct SimOptions {
  int jobs = 1;             // worker threads per step; results do not depend on it
  bool store_paths = true;  // keep every node (needed for a frozen law flow)
  StepObserver observer;
};

// N index-aligned particle paths plus the induced empirical law flow.
class ParticleEnsemble {
 public:
  ParticleEnsemble() = default;

  const TimeGrid& grid() const noexcept { return grid_; }
  int dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return n_; }
  double eps() const noexcept { return eps_; }
  std::uint64_t master_seed() const noexcept { return seed_; }
  const std::string& model_name() const noexcept { return model_; }
  bool has_paths() const noexcept { return full_; }
  // Number of MDP tilt cells clamped to the psi bounds (MDP runs only).
  std::size_t clamp_count() const noexcept { return clamps_; }

  // Per-particle seed of the Brownian (stream 0) and jump (stream 1) noise.
  std::uint64_t particle_seed(std::size_t i, std::uint64_t stream) const noexcept;

  // Atoms of law_flow[k]; requires stored paths unless k is the last node.
  std::span<const double> cloud(std::size_t k) const;
  std::span<const double> terminal_cloud() const { return cloud(grid_.n_steps()); }
  measure::EmpiricalMeasure law(std::size_t k) const;
  Path path(std::size_t i) const;
  Eigen::Map<const Vector> value(std::size_t k, std::size_t i) const;

  bool operator==(const ParticleEnsemble&) const = default;

 private:
  friend class EnsembleBuilder;
  TimeGrid grid_;
  int dim_ = 0;
  std::size_t n_ = 0;
  double eps_ = 0.0;
  std::uint64_t seed_ = 0;
  std::string model_;
  bool full_ = true;
  std::size_t clamps_ = 0;
  std::vector<double> states_;  // node-major: [(k * N + i) * d + j]
};

// Brownian increments and jump streams for selected particles, reproduced
// from the same per-particle streams the simulators use.
struct NoiseBundle {
  std::vector<std::vector<double>> brownian;  // per particle: n_steps x d
  std::vector<levy::JumpStream> jumps;        // per particle (empty without jumps)
};

NoiseBundle draw_noise(const ModelSpec& spec, double eps, const TimeGrid& grid,
                       std::uint64_t seed, std::span<const std::size_t> particles);

ParticleEnsemble simulate_mvsde(const ModelSpec& spec, double eps, std::size_t n_particles,
                                const TimeGrid& grid, std::uint64_t seed,
                                const SimOptions& opts = {});

// Controlled equation with the law argument frozen at the stored flow of an
// uncontrolled run.
ParticleEnsemble simulate_controlled_frozen(const ModelSpec& spec, double eps,
                                            const Control& u,
                                            const ParticleEnsemble& frozen,
                                            std::size_t n_replicas, const TimeGrid& grid,
                                            std::uint64_t seed,
                                            const SimOptions& opts = {});

// Controlled equation whose law argument is the controlled particles' own
// empirical law. This is the incorrect equation, kept as a negative control.
ParticleEnsemble simulate_controlled_selfconsistent(const ModelSpec& spec, double eps,
                                                    const Control& u,
                                                    std::size_t n_particles,
                                                    const TimeGrid& grid,
                                                    std::uint64_t seed,
                                                    const SimOptions& opts = {});

struct MdpTiltBounds {
  double lo = 1e-3;
  double hi = 1e3;
};

// Jump tilt psi = clamp(1 + a * vphi, lo, hi) as a validated Control; the
// number of clamped cells is written to clamp_count.
Control mdp_tilt_control(const MdpControl& u, double a_eps, MdpTiltBounds bounds,
                         std::size_t* clamp_count = nullptr);

// Fluctuation process M = (X - X0)/a under control: Euler discretization of
// the controlled moderate-deviation equation with M(0) = 0. x0_path is the
// centering path (use the explicit-Euler limit path of the same grid to
// cancel the scheme's O(dt)/a bias).
ParticleEnsemble simulate_mdp_controlled(const ModelSpec& spec, double eps, double a_eps,
                                         const MdpControl& u,
                                         const ParticleEnsemble& frozen,
                                         const Path& x0_path, std::size_t n_replicas,
                                         const TimeGrid& grid, std::uint64_t seed,
                                         const SimOptions& opts = {},
                                         MdpTiltBounds bounds = {});

struct SummaryRow {
  double t = 0.0;
  Vector mean;
  Vector variance;
  double w2_to_limit = 0.0;  // W2(law_flow[k], delta_{x0(t_k)}); 0 without x0
};

std::vector<SummaryRow> summarize(const ParticleEnsemble& ens, const Path* x0 = nullptr);
void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows);
void write_ensemble_csv(std::ostream& os, const ParticleEnsemble& ens);

}  // namespace mvldp::dynamics
