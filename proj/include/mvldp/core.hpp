#pragma once

#include "mvldp/error.hpp"
#include "mvldp/intensity.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mvldp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using ConstVecRef = Eigen::Ref<const Eigen::VectorXd>;
using VecRef = Eigen::Ref<Eigen::VectorXd>;
using MatRef = Eigen::Ref<Eigen::MatrixXd>;

// ---------------------------------------------------------------------------
// Time grids and paths

class TimeGrid {
 public:
  TimeGrid() = default;

  static TimeGrid uniform(double horizon, int n_steps);
  // Non-uniform grid; the uniform flag is cleared unless spacing is exactly
  // constant.
  static TimeGrid from_nodes(std::vector<double> nodes);

  double horizon() const noexcept { return horizon_; }
  int n_steps() const noexcept { return n_steps_; }
  std::size_t n_nodes() const noexcept { return nodes_.size(); }
  bool is_uniform() const noexcept { return uniform_; }
  const std::vector<double>& nodes() const noexcept { return nodes_; }
  double node(std::size_t k) const { return nodes_.at(k); }
  double dt(std::size_t k) const { return nodes_.at(k + 1) - nodes_.at(k); }

  // Step k with nodes[k] <= t < nodes[k+1]; t == T maps to the last step.
  std::size_t step_containing(double t) const;
  // Largest node index with nodes[k] <= t.
  std::size_t node_at_or_before(double t) const;

  bool operator==(const TimeGrid& other) const noexcept {
    return nodes_ == other.nodes_;
  }

 private:
  std::vector<double> nodes_;
  double horizon_ = 0.0;
  int n_steps_ = 0;
  bool uniform_ = true;
};

TimeGrid make_time_grid(double horizon, int n_steps);

enum class Interpolation { cadlag_step, linear };

struct Path {
  TimeGrid grid;
  std::vector<Vector> values;
  Interpolation interpolation = Interpolation::cadlag_step;

  Path() = default;
  Path(TimeGrid g, std::vector<Vector> v,
       Interpolation interp = Interpolation::cadlag_step);

  int dim() const noexcept {
    return values.empty() ? 0 : static_cast<int>(values.front().size());
  }
  const Vector& terminal() const { return values.back(); }
};

Vector eval_path(const Path& p, double t);
double path_sup_distance(const Path& a, const Path& b);

// ---------------------------------------------------------------------------
// Controls

// Piecewise-constant map [0,T] -> R^width, constant on [t_k, t_{k+1}).
class StepFunction {
 public:
  StepFunction() = default;
  StepFunction(TimeGrid grid, int width, double fill = 0.0);
  StepFunction(TimeGrid grid, int width, std::vector<double> values);

  const TimeGrid& grid() const noexcept { return grid_; }
  int width() const noexcept { return width_; }
  std::size_t n_cells() const noexcept {
    return static_cast<std::size_t>(grid_.n_steps());
  }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  double& at(std::size_t k, int j) { return values_[k * width_ + j]; }
  double at(std::size_t k, int j) const { return values_[k * width_ + j]; }
  Eigen::Map<const Vector> cell(std::size_t k) const {
    return Eigen::Map<const Vector>(values_.data() + k * width_, width_);
  }
  // Value of the cell containing t (right-continuous).
  Eigen::Map<const Vector> operator()(double t) const {
    return cell(grid_.step_containing(t));
  }

 private:
  TimeGrid grid_;
  int width_ = 0;
  std::vector<double> values_;
};

// u = (phi, psi): drift shift phi in R^d and jump tilt psi on
// time-cells x mark-cells. Validated on construction.
struct Control {
  StepFunction phi;
  StepFunction psi;
  double psi_lo = 1e-3;
  double psi_hi = 1e3;

  Control() = default;
  Control(StepFunction phi, StepFunction psi, double lo, double hi);

  // phi == 0, psi == 1.
  static Control null(const TimeGrid& grid, int dim, std::size_t n_marks,
                      double lo = 1e-3, double hi = 1e3);

  double max_psi() const;
};

// MDP control (phi, vphi); vphi is a signed square-integrable tilt.
struct MdpControl {
  StepFunction phi;
  StepFunction vphi;

  static MdpControl zero(const TimeGrid& grid, int dim, std::size_t n_marks);
};

// ---------------------------------------------------------------------------
// Law summaries passed to coefficients

class LawSummary {
 public:
  enum class Kind { dirac, empirical, mean };

  static LawSummary dirac(ConstVecRef point);
  // Non-owning view of an N x dim row-major cloud. The cloud must outlive
  // the summary.
  static LawSummary empirical(std::span<const double> cloud, int dim);
  static LawSummary mean_only(ConstVecRef mean);

  Kind kind() const noexcept { return kind_; }
  int dim() const noexcept { return static_cast<int>(mean_.size()); }
  const Vector& mean() const noexcept { return mean_; }
  std::size_t size() const;
  Eigen::Map<const Vector> atom(std::size_t i) const;
  double second_moment() const;

 private:
  Kind kind_ = Kind::dirac;
  Vector mean_;
  std::span<const double> cloud_;
};

// ---------------------------------------------------------------------------
// Model specification

using DriftFn =
    std::function<void(double t, ConstVecRef x, const LawSummary& mu, VecRef out)>;
using DiffusionFn =
    std::function<void(double t, ConstVecRef x, const LawSummary& mu, MatRef out)>;
using JumpFn = std::function<void(double t, ConstVecRef x, const LawSummary& mu,
                                  ConstVecRef z, VecRef out)>;
using JacobianFn = DiffusionFn;

struct Coefficients {
  DriftFn drift;
  DiffusionFn diffusion;
  JumpFn jump;  // may be empty when the model has no jump channel
};

// rho(eps) = coef * eps^power; the convergence moduli of the eps-families.
struct Modulus {
  double coef = 0.0;
  double power = 1.0;
  double operator()(double eps) const;
};

struct ModelConstants {
  double L = 0.0;        // one-sided Lipschitz constant of b
  double q = 0.0;
  double L_prime = 0.0;  // local Lipschitz constant of the x-Jacobian of b
  double q_prime = 0.0;
  Modulus rho_b, rho_sigma, rho_G;
  std::vector<double> L1, L2, L3;  // per mark cell
};

struct ModelSpec {
  std::string name;
  int dim = 1;
  Vector initial;
  double horizon = 1.0;
  int n_steps = 400;
  Coefficients limit;
  // Coefficients at noise level eps; empty means the limit coefficients.
  std::function<Coefficients(double eps)> family;
  std::optional<JacobianFn> drift_jacobian;  // exact override for b'_2
  IntensityMeasure intensity;
  ModelConstants constants;

  Coefficients at(double eps) const { return family ? family(eps) : limit; }
  bool has_jumps() const noexcept { return !intensity.empty() && bool(limit.jump); }
  std::size_t n_marks() const noexcept { return has_jumps() ? intensity.size() : 0; }
  TimeGrid default_grid() const { return make_time_grid(horizon, n_steps); }
};

struct ProbeReport {
  int samples = 0;
  int violations = 0;
  double max_excess = 0.0;
};

// Random-probe check of <x-x', b(t,x,mu)-b(t,x',mu)> <= L|x-x'|^2.
ProbeReport probe_monotonicity(const ModelSpec& spec, int samples = 200,
                               std::uint64_t seed = 7);

// Integral of G(t, x, mu, z) * weight_j over the mark cells:
// out = sum_j weight_j * G(t, x, mu, z_j) * nu_j.
void jump_integral(const ModelSpec& spec, const JumpFn& jump, double t, ConstVecRef x,
                   const LawSummary& mu, std::span<const double> weights, VecRef out);

}  // namespace mvldp
