#pragma once

#include "mvldp/core.hpp"

#include <vector>

namespace mvldp::skeleton {

struct PicardConfig {
  int max_iters = 200;
  double tol = 1e-10;   // sup-norm change between iterates
  double damping = 1.0; // in (0, 1]
};

enum class LimitScheme { rk4, euler };

// Limit ODE x' = b(t, x, delta_x), x(0) = h. RK4 by default; the explicit
// Euler variant reproduces the particle scheme's discretization exactly and
// is used to center fluctuation processes.
Path solve_limit_ode(const ModelSpec& spec, const TimeGrid& grid,
                     LimitScheme scheme = LimitScheme::rk4);

struct SkeletonResult {
  Path path;
  int iterations = 0;
  double residual = 0.0;
};

// Controlled skeleton with the law frozen at delta_{x0(t)}:
//   Y = h + int b(Y, delta_x0) + int sigma(Y, delta_x0) phi
//         + int int G(Y, delta_x0, z) (psi - 1) nu(dz).
// Solved by Picard iteration on the deviation D = Y - x0 with trapezoidal
// quadrature; the null control is an exact fixed point (D = 0).
SkeletonResult solve_ldp_skeleton(const ModelSpec& spec, const Path& x0, const Control& u,
                                  const TimeGrid& grid, const PicardConfig& cfg = {});

// Same controlled ODE but with the law taken from the solution itself
// (delta_{y(t)}). Incorrect for the deviation problem; used as the
// comparison value in the frozen-law demonstration.
Path solve_selfconsistent_skeleton(const ModelSpec& spec, const Control& u,
                                   const TimeGrid& grid);

// d x d Jacobian of x -> b(t, x, mu) with mu held fixed. Uses the model's
// exact Jacobian when provided, central differences otherwise.
Matrix jacobian_b_x(const ModelSpec& spec, double t, ConstVecRef x, const LawSummary& mu);

// Coefficients of the linearized equation
//   K' = b'_2(t, x0) K + sigma(t, x0) phi + int G(t, x0, z) vphi(t, z) nu(dz)
// sampled at the RK4 stage times of every step. Building it once lets many
// controls be integrated cheaply (the map u -> K is linear).
class MdpLinearization {
 public:
  MdpLinearization(const ModelSpec& spec, const Path& x0, const TimeGrid& grid);

  Path solve(const MdpControl& u) const;
  const TimeGrid& grid() const noexcept { return grid_; }
  int dim() const noexcept { return dim_; }
  std::size_t n_marks() const noexcept { return n_marks_; }

 private:
  struct Stage {
    Matrix jac;
    Matrix sigma;
    Matrix jump;  // d x n_marks, column j = G(z_j) * nu_j
  };
  Stage make_stage(const ModelSpec& spec, double t, const Vector& x0) const;

  TimeGrid grid_;
  int dim_;
  std::size_t n_marks_;
  std::vector<Stage> nodes_;
  std::vector<Stage> mids_;
};

Path solve_mdp_skeleton(const ModelSpec& spec, const Path& x0, const MdpControl& u,
                        const TimeGrid& grid);

}  // namespace mvldp::skeleton
