#pragma once

#include "mvldp/core.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace mvldp::models {

// Names accepted by make_builtin.
std::vector<std::string> builtin_names();

// Built-in coefficient families:
//   example11        b = mean(mu), sigma = 1, no jumps (d = 1)
//   linear_gaussian  b = a x + c mean(mu), sigma = s I, no jumps
//   pure_jump        b = 0, sigma = 0, G(z) = z, nu = lambda delta_1
//   logistic_mf      b = r x (1 - x/K) + kappa (mean - x), sigma = s,
//                    G = g x z, nu = lambda delta_1
// `params` overrides the defaults (x0, a, c, s, lambda, ...). An optional
// "perturbation" object adds eps-dependent shifts {coef, power} to the drift,
// diffusion or jump coefficient and sets the matching rho modulus.
ModelSpec make_builtin(const std::string& name, const nlohmann::json& params = {});

// A monomial c * t^pt * prod x_j^px_j * prod m_j^pm_j * prod z_j^pz_j where m
// is the law mean.
struct Monomial {
  double coef = 0.0;
  int t_power = 0;
  std::vector<int> x_powers;
  std::vector<int> m_powers;
  std::vector<int> z_powers;
};
using Polynomial = std::vector<Monomial>;

double evaluate(const Polynomial& p, double t, ConstVecRef x, ConstVecRef m,
                ConstVecRef z);

// Model built from declarative polynomial coefficients (see README for the
// file layout).
ModelSpec make_polynomial(const nlohmann::json& doc);

struct LoadedModel {
  ModelSpec spec;
  std::string source;        // file contents (or the builtin reference)
  std::uint64_t hash = 0;    // FNV-1a of source
};

// Parses a model document. Errors carry the offending field name.
ModelSpec model_from_json(const nlohmann::json& doc);

// Loads a model file, or "builtin:<name>" for a registry model with default
// parameters.
LoadedModel load_model(const std::string& path_or_ref);

std::uint64_t fnv1a(const std::string& bytes);

}  // namespace mvldp::models
