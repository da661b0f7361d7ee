#pragma once

#include "mvldp/core.hpp"
#include "mvldp/rate.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mvldp::verify {

// One Monte Carlo point of a report.
struct Estimate {
  double eps = 0.0;
  double speed = 0.0;      // eps (LDP) or eps / a(eps)^2 (MDP)
  std::size_t hits = 0;    // event counts; unused by the convergence checks
  std::size_t samples = 0;
  double value = 0.0;      // p-hat, or E sup |.|^2 for the convergence checks
  double value_se = 0.0;
  double statistic = 0.0;  // -speed * log p-hat
  double statistic_se = 0.0;
  bool censored = false;   // no hits: excluded from the fit
};

enum class FitMethod {
  automatic,            // corrected when the reference rate is positive
  linear,               // statistic = I + c * speed
  prefactor_corrected,  // statistic + (speed/2) log speed = I + c * speed
};

struct SlopeReport {
  std::string name;
  std::vector<Estimate> points;
  double fitted = 0.0;
  double fitted_se = 0.0;
  double reference = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  bool inconclusive = false;
  std::string method;
  std::string notes;
};

// a(eps) = coef * eps^exponent with exponent in (0, 1/2).
struct MdpSpeed {
  double exponent = 0.25;
  double coef = 1.0;

  double a(double eps) const;
  double speed(double eps) const { return eps / (a(eps) * a(eps)); }
  // Checks that a(eps) and eps/a^2 decrease along the list.
  void validate(const std::vector<double>& eps_list) const;
};

struct CheckConfig {
  std::size_t particles = 100000;
  std::uint64_t seed = 20240101;
  int jobs = 1;
  // Pass band; empty means the per-check default (LDP 0.03, MDP 0.05,
  // slope 0.2, controlled final value 0.05).
  std::optional<double> tolerance;
  FitMethod fit = FitMethod::automatic;
  std::optional<double> reference;  // overrides the computed rate
  rate::OptConfig opt;
};

// -eps log P(X^eps in event) extrapolated to eps -> 0 against ldp_rate.
SlopeReport check_ldp(const ModelSpec& spec, const rate::EventSpec& event,
                      const std::vector<double>& eps_list, const TimeGrid& grid,
                      const CheckConfig& cfg);

// Same for M = (X^eps - X0)/a(eps) at speed eps/a^2 against mdp_rate.
SlopeReport check_mdp(const ModelSpec& spec, const rate::EventSpec& event,
                      const std::vector<double>& eps_list, const MdpSpeed& a_of_eps,
                      const TimeGrid& grid, const CheckConfig& cfg);

// E sup |X^eps - X0|^2 per eps; log-log slope against reference 1.
SlopeReport check_limit_convergence(const ModelSpec& spec,
                                    const std::vector<double>& eps_list,
                                    const TimeGrid& grid, const CheckConfig& cfg);

// E sup |Z^u - Y^u|^2 per eps for a fixed control, frozen law re-simulated
// per eps with cfg.particles particles and `replicas` controlled replicas.
// Passes when the estimates decrease and the last one is below cfg.tolerance.
SlopeReport check_controlled_convergence(const ModelSpec& spec, const Control& u,
                                         const std::vector<double>& eps_list,
                                         std::size_t replicas, const TimeGrid& grid,
                                         const CheckConfig& cfg);

struct DemoRecord {
  double eps = 0.0;
  double frozen_mean_T = 0.0;
  double frozen_se = 0.0;
  double selfconsistent_mean_T = 0.0;
  double selfconsistent_se = 0.0;
  double skeleton_T = 0.0;
  double wrong_ode_T = 0.0;
  double tolerance = 0.0;
  bool frozen_matches = false;
  bool selfconsistent_matches = false;
};

// Controlled example11 with constant drift control phi: the frozen-law
// equation against the self-consistent one, plus the two ODE values.
DemoRecord demo_frozen_vs_selfconsistent(const ModelSpec& spec, double eps,
                                         std::size_t particles, const TimeGrid& grid,
                                         std::uint64_t seed, double phi = 1.0,
                                         int jobs = 1, double tolerance = 0.005);

nlohmann::json to_json(const SlopeReport& r);
nlohmann::json to_json(const DemoRecord& r);
void write_csv(std::ostream& os, const SlopeReport& r);

}  // namespace mvldp::verify
