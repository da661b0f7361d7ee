#pragma once

#include "mvldp/core.hpp"
#include "mvldp/skeleton.hpp"

#include <json.hpp>

#include <iosfwd>
#include <limits>
#include <string>
#include <variant>
#include <vector>

namespace mvldp::rate {

// l(x) = x log x - x + 1 with l(0) = 1.
double ell(double x);

// 1/2 int |phi|^2 ds, exact for a piecewise-constant phi.
double q1_cost(const StepFunction& phi);
// int int l(psi) nu(dz) ds over time cells x mark cells.
double q2_cost(const StepFunction& psi, const IntensityMeasure& m);

// ---------------------------------------------------------------------------
// Events

struct PinTerminal {
  Vector point;
  double tol = 0.0;  // closed ball |y(T) - point| <= tol
};

struct PinPath {
  Path target;
  double tol = 0.0;  // sup_t |y(t) - g(t)| <= tol on the path's nodes
};

struct HalfspaceTerminal {
  Vector direction;
  double level = 0.0;  // <w, y(T)> >= level
};

using EventSpec = std::variant<PinTerminal, PinPath, HalfspaceTerminal>;

// Distance-like constraint violation; zero inside the event.
double event_residual(const EventSpec& event, const Path& y);
// Membership of a terminal value (terminal events only).
bool terminal_in_event(const EventSpec& event, ConstVecRef y_T, double slack = 1e-9);
bool is_terminal_event(const EventSpec& event);
std::string describe(const EventSpec& event);

// Parses "pin:a1[,a2..][@tol]", "halfspace:w1[,w2..]>=c" (the bare form
// "halfspace:c" uses w = 1) or "path:<csv file>[@tol]". A number may be
// written as e, e+x or e-x (offset from Euler's number).
EventSpec parse_event(const std::string& text, int dim);

// ---------------------------------------------------------------------------
// Optimizers

struct OptConfig {
  int n_control = 10;          // control intervals on [0, T]
  int starts = 5;
  double penalty_init = 10.0;
  double penalty_factor = 2.0;
  double penalty_ceiling = 1e8;
  double feas_tol = 1e-6;
  int max_inner = 300;
  double inner_tol = 1e-10;    // projected-gradient step norm
  double fd_step = 1e-6;       // relative central-difference step
  double psi_lo = 1e-3;
  double psi_hi = 1e3;
  std::uint64_t seed = 1;
  int jobs = 1;                // concurrent starts
  skeleton::PicardConfig picard{400, 1e-13, 1.0};
};

struct TraceEntry {
  int start = 0;
  int round = 0;
  double weight = 0.0;
  int iterations = 0;
  double cost = 0.0;
  double residual = 0.0;
};

struct RateResult {
  double value = std::numeric_limits<double>::infinity();
  bool feasible = false;
  double residual = std::numeric_limits<double>::infinity();
  bool mdp = false;
  Control control;           // LDP optimum
  MdpControl mdp_control;    // MDP optimum
  Path achieved_path;
  std::vector<TraceEntry> trace;
  std::string method;
  int best_start = -1;
};

// Raised when the skeleton solver fails inside the optimizer; carries the
// control that triggered it.
class OptimizerError : public Error {
 public:
  OptimizerError(const Error& cause, Control control)
      : Error(cause.kind(), std::string("skeleton failure during optimization: ") +
                                cause.what()),
        control_(std::move(control)) {}
  const Control& control() const noexcept { return control_; }

 private:
  Control control_;
};

// inf {Q1(phi) + Q2(psi) : Y^u in event} over controls constant on
// cfg.n_control intervals. Penalty continuation with projected gradient
// inside; psi = exp(theta), theta clipped to [log lo, log hi].
RateResult ldp_rate(const ModelSpec& spec, const Path& x0, const EventSpec& event,
                    const TimeGrid& grid, const OptConfig& cfg = {});

// 1/2 |phi|^2 + 1/2 |vphi|^2_nu subject to K^u in event, solved exactly through
// the normal equations of the linear control-to-state map. n_control = 0
// uses one control cell per grid step.
RateResult mdp_rate(const ModelSpec& spec, const Path& x0, const EventSpec& event,
                    const TimeGrid& grid, int n_control = 0);

// Cost recomputed from the stored control.
double recompute_cost(const RateResult& r, const ModelSpec& spec);

nlohmann::json to_json(const RateResult& r, const ModelSpec& spec);

// Control CSV: t0,t1,phi_0..phi_{d-1},psi_0..psi_{m-1}; one row per cell.
void write_control_csv(std::ostream& os, const Control& u);
Control read_control_csv(std::istream& is, int dim, std::size_t n_marks,
                         double lo = 1e-3, double hi = 1e3);

}  // namespace mvldp::rate
