#include "mvldp/models.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace mvldp::models {

using nlohmann::json;

namespace {

double param(const json& params, const char* key, double fallback) {
  if (!params.is_object() || !params.contains(key)) return fallback;
  const auto& v = params.at(key);
  require(v.is_number(), ErrorKind::parse_error,
          std::string("field 'params.") + key + "': expected a number");
  return v.get<double>();
}

Modulus modulus_from(const json& j, const std::string& field) {
  require(j.is_object(), ErrorKind::parse_error,
          "field '" + field + "': expected {\"coef\": .., \"power\": ..}");
  Modulus m;
  m.coef = j.value("coef", 0.0);
  m.power = j.value("power", 1.0);
  return m;
}

IntensityMeasure single_atom(double mass) {
  IntensityCell cell;
  cell.mark = Vector::Ones(1);
  cell.mass = mass;
  return IntensityMeasure({cell});
}

Coefficients zero_coefficients() {
  Coefficients c;
  c.drift = [](double, ConstVecRef, const LawSummary&, VecRef out) { out.setZero(); };
  c.diffusion = [](double, ConstVecRef, const LawSummary&, MatRef out) { out.setZero(); };
  return c;
}

// Wraps the limit coefficients into an eps-family with additive shifts.
void apply_perturbation(ModelSpec& spec, const json& pert) {
  if (!pert.is_object() || pert.empty()) return;
  Modulus db, ds, dg;
  if (pert.contains("drift")) db = modulus_from(pert["drift"], "perturbation.drift");
  if (pert.contains("diffusion"))
    ds = modulus_from(pert["diffusion"], "perturbation.diffusion");
  if (pert.contains("jump")) dg = modulus_from(pert["jump"], "perturbation.jump");
  spec.constants.rho_b = db;
  spec.constants.rho_sigma = ds;
  spec.constants.rho_G = dg;
  const Coefficients limit = spec.limit;
  spec.family = [limit, db, ds, dg](double eps) {
    Coefficients c = limit;
    const double sb = db(eps), ss = ds(eps), sg = dg(eps);
    if (sb != 0.0)
      c.drift = [f = limit.drift, sb](double t, ConstVecRef x, const LawSummary& mu,
                                      VecRef out) {
        f(t, x, mu, out);
        out.array() += sb;
      };
    if (ss != 0.0)
      c.diffusion = [f = limit.diffusion, ss](double t, ConstVecRef x,
                                              const LawSummary& mu, MatRef out) {
        f(t, x, mu, out);
        out.diagonal().array() += ss;
      };
    if (sg != 0.0 && limit.jump)
      c.jump = [f = limit.jump, sg](double t, ConstVecRef x, const LawSummary& mu,
                                    ConstVecRef z, VecRef out) {
        f(t, x, mu, z, out);
        out.array() += sg;
      };
    return c;
  };
}

std::vector<int> powers_from(const json& term, const char* key, int n,
                             const std::string& field) {
  std::vector<int> p(static_cast<std::size_t>(n), 0);
  if (!term.contains(key)) return p;
  const auto& arr = term.at(key);
  require(arr.is_array() && static_cast<int>(arr.size()) == n, ErrorKind::parse_error,
          "field '" + field + "." + key + "': expected " + std::to_string(n) +
              " integer exponents");
  for (int i = 0; i < n; ++i) {
    require(arr[i].is_number_integer() && arr[i].get<int>() >= 0, ErrorKind::parse_error,
            "field '" + field + "." + key + "': exponents must be nonnegative integers");
    p[i] = arr[i].get<int>();
  }
  return p;
}

Polynomial polynomial_from(const json& j, int d, int k, const std::string& field) {
  require(j.is_array(), ErrorKind::parse_error,
          "field '" + field + "': expected a list of terms");
  Polynomial poly;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& term = j[i];
    const std::string where = field + "[" + std::to_string(i) + "]";
    require(term.is_object() && term.contains("c") && term["c"].is_number(),
            ErrorKind::parse_error, "field '" + where + "': term needs numeric \"c\"");
    Monomial m;
    m.coef = term["c"].get<double>();
    m.t_power = term.value("t", 0);
    m.x_powers = powers_from(term, "x", d, where);
    m.m_powers = powers_from(term, "m", d, where);
    m.z_powers = powers_from(term, "z", k, where);
    poly.push_back(std::move(m));
  }
  return poly;
}

std::vector<double> number_list(const json& j, const std::string& field) {
  require(j.is_array(), ErrorKind::parse_error, "field '" + field + "': expected an array");
  std::vector<double> out;
  for (const auto& v : j) {
    require(v.is_number(), ErrorKind::parse_error,
            "field '" + field + "': expected numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

IntensityMeasure intensity_from(const json& j) {
  require(j.is_array() && !j.empty(), ErrorKind::parse_error,
          "field 'intensity': expected a nonempty list of {mark, mass}");
  std::vector<IntensityCell> cells;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string where = "intensity[" + std::to_string(i) + "]";
    require(j[i].is_object() && j[i].contains("mark") && j[i].contains("mass"),
            ErrorKind::parse_error, "field '" + where + "': needs mark and mass");
    const auto mark = number_list(j[i]["mark"], where + ".mark");
    IntensityCell cell;
    cell.mark = Eigen::Map<const Vector>(mark.data(), static_cast<Eigen::Index>(mark.size()));
    require(j[i]["mass"].is_number(), ErrorKind::parse_error,
            "field '" + where + ".mass': expected a number");
    cell.mass = j[i]["mass"].get<double>();
    cells.push_back(std::move(cell));
  }
  try {
    return IntensityMeasure(std::move(cells));
  } catch (const Error& e) {
    fail(ErrorKind::parse_error, std::string("field 'intensity': ") + e.what());
  }
}

}  // namespace

std::vector<std::string> builtin_names() {
  return {"example11", "linear_gaussian", "pure_jump", "logistic_mf"};
}

ModelSpec make_builtin(const std::string& name, const json& params) {
  ModelSpec spec;
  spec.name = name;
  spec.horizon = param(params, "horizon", 1.0);
  spec.n_steps = static_cast<int>(param(params, "n_steps", 400));

  if (name == "example11") {
    spec.dim = 1;
    spec.initial = Vector::Constant(1, param(params, "x0", 1.0));
    spec.limit.drift = [](double, ConstVecRef, const LawSummary& mu, VecRef out) {
      out = mu.mean();
    };
    spec.limit.diffusion = [](double, ConstVecRef, const LawSummary&, MatRef out) {
      out.setIdentity();
    };
    spec.drift_jacobian = [](double, ConstVecRef, const LawSummary&, MatRef out) {
      out.setZero();
    };
    spec.constants.L = 0.0;
  } else if (name == "linear_gaussian") {
    const int d = static_cast<int>(param(params, "dim", 1));
    require(d >= 1, ErrorKind::parse_error, "field 'params.dim': must be >= 1");
    const double a = param(params, "a", -1.0);
    const double c = param(params, "c", 0.0);
    const double s = param(params, "s", 1.0);
    spec.dim = d;
    spec.initial = Vector::Constant(d, param(params, "x0", 1.0));
    spec.limit.drift = [a, c](double, ConstVecRef x, const LawSummary& mu, VecRef out) {
      out = a * x + c * mu.mean();
    };
    spec.limit.diffusion = [s](double, ConstVecRef, const LawSummary&, MatRef out) {
      out.setIdentity();
      out *= s;
    };
    spec.drift_jacobian = [a](double, ConstVecRef, const LawSummary&, MatRef out) {
      out.setIdentity();
      out *= a;
    };
    spec.constants.L = std::max(a, 0.0);
  } else if (name == "pure_jump") {
    spec.dim = 1;
    spec.initial = Vector::Constant(1, param(params, "x0", 0.0));
    spec.limit = zero_coefficients();
    spec.limit.jump = [](double, ConstVecRef, const LawSummary&, ConstVecRef z,
                         VecRef out) { out = z; };
    spec.drift_jacobian = [](double, ConstVecRef, const LawSummary&, MatRef out) {
      out.setZero();
    };
    spec.intensity = single_atom(param(params, "lambda", 1.0));
    spec.constants.L1 = {1.0};
    spec.constants.L2 = {1.0};
    spec.constants.L3 = {1.0};
  } else if (name == "logistic_mf") {
    const double r = param(params, "r", 1.0);
    const double cap = param(params, "K", 2.0);
    const double kappa = param(params, "kappa", 0.5);
    const double s = param(params, "s", 0.3);
    const double g = param(params, "g", 0.1);
    spec.dim = 1;
    spec.initial = Vector::Constant(1, param(params, "x0", 0.5));
    spec.limit.drift = [r, cap, kappa](double, ConstVecRef x, const LawSummary& mu,
                                       VecRef out) {
      out[0] = r * x[0] * (1.0 - x[0] / cap) + kappa * (mu.mean()[0] - x[0]);
    };
    spec.limit.diffusion = [s](double, ConstVecRef, const LawSummary&, MatRef out) {
      out(0, 0) = s;
    };
    spec.limit.jump = [g](double, ConstVecRef x, const LawSummary&, ConstVecRef z,
                          VecRef out) { out[0] = g * x[0] * z[0]; };
    spec.drift_jacobian = [r, cap, kappa](double, ConstVecRef x, const LawSummary&,
                                          MatRef out) {
      out(0, 0) = r * (1.0 - 2.0 * x[0] / cap) - kappa;
    };
    spec.intensity = single_atom(param(params, "lambda", 1.0));
    spec.constants.L = r;
    spec.constants.L1 = {g};
    spec.constants.L2 = {g};
    spec.constants.L3 = {g};
  } else {
    fail(ErrorKind::parse_error, "unknown built-in model '" + name + "'");
  }
  if (params.is_object() && params.contains("perturbation"))
    apply_perturbation(spec, params["perturbation"]);
  return spec;
}

double evaluate(const Polynomial& p, double t, ConstVecRef x, ConstVecRef m,
                ConstVecRef z) {
  double acc = 0.0;
  for (const auto& term : p) {
    double v = term.coef * std::pow(t, term.t_power);
    for (std::size_t j = 0; j < term.x_powers.size(); ++j)
      if (term.x_powers[j]) v *= std::pow(x[static_cast<Eigen::Index>(j)], term.x_powers[j]);
    for (std::size_t j = 0; j < term.m_powers.size(); ++j)
      if (term.m_powers[j]) v *= std::pow(m[static_cast<Eigen::Index>(j)], term.m_powers[j]);
    for (std::size_t j = 0; j < term.z_powers.size(); ++j)
      if (term.z_powers[j]) v *= std::pow(z[static_cast<Eigen::Index>(j)], term.z_powers[j]);
    acc += v;
  }
  return acc;
}

ModelSpec make_polynomial(const json& doc) {
  ModelSpec spec;
  spec.name = "polynomial";
  const int d = doc.value("dim", 1);
  spec.dim = d;
  const json coeffs = doc.value("coefficients", json::object());
  IntensityMeasure intensity;
  if (doc.contains("intensity")) intensity = intensity_from(doc["intensity"]);
  const int k = intensity.empty() ? 0 : intensity.mark_dim();

  std::vector<Polynomial> drift, diffusion, jump;
  const json drift_j = coeffs.value("drift", json::array());
  require(drift_j.is_array() && static_cast<int>(drift_j.size()) == d,
          ErrorKind::parse_error,
          "field 'coefficients.drift': expected one term list per component");
  for (int i = 0; i < d; ++i)
    drift.push_back(polynomial_from(drift_j[i], d, k,
                                    "coefficients.drift[" + std::to_string(i) + "]"));
  const json diff_j = coeffs.value("diffusion", json::array());
  require(diff_j.empty() || static_cast<int>(diff_j.size()) == d * d,
          ErrorKind::parse_error,
          "field 'coefficients.diffusion': expected d*d term lists (row-major)");
  for (std::size_t i = 0; i < diff_j.size(); ++i)
    diffusion.push_back(polynomial_from(diff_j[i], d, k,
                                        "coefficients.diffusion[" + std::to_string(i) + "]"));
  const json jump_j = coeffs.value("jump", json::array());
  require(jump_j.empty() || static_cast<int>(jump_j.size()) == d, ErrorKind::parse_error,
          "field 'coefficients.jump': expected one term list per component");
  for (std::size_t i = 0; i < jump_j.size(); ++i)
    jump.push_back(polynomial_from(jump_j[i], d, k,
                                   "coefficients.jump[" + std::to_string(i) + "]"));

  const Vector no_z = Vector::Zero(std::max(k, 0));
  spec.limit.drift = [drift, no_z](double t, ConstVecRef x, const LawSummary& mu,
                                   VecRef out) {
    for (std::size_t i = 0; i < drift.size(); ++i)
      out[static_cast<Eigen::Index>(i)] = evaluate(drift[i], t, x, mu.mean(), no_z);
  };
  spec.limit.diffusion = [diffusion, d, no_z](double t, ConstVecRef x,
                                              const LawSummary& mu, MatRef out) {
    out.setZero();
    for (std::size_t i = 0; i < diffusion.size(); ++i)
      out(static_cast<Eigen::Index>(i) / d, static_cast<Eigen::Index>(i) % d) =
          evaluate(diffusion[i], t, x, mu.mean(), no_z);
  };
  if (!jump.empty() && !intensity.empty()) {
    spec.limit.jump = [jump](double t, ConstVecRef x, const LawSummary& mu, ConstVecRef z,
                             VecRef out) {
      for (std::size_t i = 0; i < jump.size(); ++i)
        out[static_cast<Eigen::Index>(i)] = evaluate(jump[i], t, x, mu.mean(), z);
    };
    spec.intensity = intensity;
  }
  return spec;
}

ModelSpec model_from_json(const json& doc) {
  require(doc.is_object(), ErrorKind::parse_error, "model document must be an object");
  require(doc.contains("model") && doc["model"].is_string(), ErrorKind::parse_error,
          "field 'model': expected a coefficient identifier string");
  const std::string id = doc["model"].get<std::string>();
  json params = doc.value("params", json::object());
  if (doc.contains("perturbation")) params["perturbation"] = doc["perturbation"];

  ModelSpec spec = id == "polynomial" ? make_polynomial(doc) : make_builtin(id, params);
  if (id == "polynomial" && doc.contains("perturbation"))
    apply_perturbation(spec, doc["perturbation"]);

  if (doc.contains("dim")) {
    require(doc["dim"].is_number_integer() && doc["dim"].get<int>() == spec.dim,
            ErrorKind::parse_error,
            "field 'dim': does not match the coefficient family dimension " +
                std::to_string(spec.dim));
  }
  if (doc.contains("horizon")) {
    require(doc["horizon"].is_number() && doc["horizon"].get<double>() > 0.0,
            ErrorKind::parse_error, "field 'horizon': expected a positive number");
    spec.horizon = doc["horizon"].get<double>();
  }
  if (doc.contains("n_steps")) {
    require(doc["n_steps"].is_number_integer() && doc["n_steps"].get<int>() >= 1,
            ErrorKind::parse_error, "field 'n_steps': expected an integer >= 1");
    spec.n_steps = doc["n_steps"].get<int>();
  }
  if (doc.contains("initial")) {
    const auto init = number_list(doc["initial"], "initial");
    require(static_cast<int>(init.size()) == spec.dim, ErrorKind::parse_error,
            "field 'initial': expected " + std::to_string(spec.dim) + " numbers");
    spec.initial = Eigen::Map<const Vector>(init.data(), spec.dim);
  }
  require(spec.initial.size() == spec.dim, ErrorKind::parse_error,
          "field 'initial': missing initial condition");
  if (doc.contains("intensity") && id != "polynomial") {
    require(bool(spec.limit.jump), ErrorKind::parse_error,
            "field 'intensity': model '" + id + "' has no jump coefficient");
    spec.intensity = intensity_from(doc["intensity"]);
  }
  if (doc.contains("constants")) {
    const auto& c = doc["constants"];
    require(c.is_object(), ErrorKind::parse_error, "field 'constants': expected an object");
    spec.constants.L = c.value("L", spec.constants.L);
    spec.constants.q = c.value("q", spec.constants.q);
    spec.constants.L_prime = c.value("L_prime", spec.constants.L_prime);
    spec.constants.q_prime = c.value("q_prime", spec.constants.q_prime);
    if (c.contains("rho_b")) spec.constants.rho_b = modulus_from(c["rho_b"], "constants.rho_b");
    if (c.contains("rho_sigma"))
      spec.constants.rho_sigma = modulus_from(c["rho_sigma"], "constants.rho_sigma");
    if (c.contains("rho_G")) spec.constants.rho_G = modulus_from(c["rho_G"], "constants.rho_G");
    if (c.contains("L1")) spec.constants.L1 = number_list(c["L1"], "constants.L1");
    if (c.contains("L2")) spec.constants.L2 = number_list(c["L2"], "constants.L2");
    if (c.contains("L3")) spec.constants.L3 = number_list(c["L3"], "constants.L3");
  }
  return spec;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

LoadedModel load_model(const std::string& path_or_ref) {
  LoadedModel out;
  const std::string prefix = "builtin:";
  if (path_or_ref.rfind(prefix, 0) == 0) {
    out.spec = make_builtin(path_or_ref.substr(prefix.size()));
    out.source = path_or_ref;
    out.hash = fnv1a(out.source);
    return out;
  }
  std::ifstream in(path_or_ref, std::ios::binary);
  require(bool(in), ErrorKind::file_not_found, "cannot open model file '" + path_or_ref + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  out.source = buf.str();
  out.hash = fnv1a(out.source);
  json doc;
  try {
    doc = json::parse(out.source);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min(e.byte, out.source.size()); ++i)
      if (out.source[i] == '\n') ++line;
    fail(ErrorKind::parse_error,
         path_or_ref + ":" + std::to_string(line) + ": " + e.what());
  }
  try {
    out.spec = model_from_json(doc);
  } catch (const json::exception& e) {
    fail(ErrorKind::parse_error, path_or_ref + ": " + e.what());
  }
  return out;
}

}  // namespace mvldp::models
