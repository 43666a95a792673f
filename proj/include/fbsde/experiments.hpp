#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fbsde/bsde.hpp"
#include "fbsde/dpp.hpp"
#include "fbsde/hamiltonian.hpp"
#include "fbsde/lq.hpp"

namespace fbsde {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

struct GridConfig {
  double t0 = 0.0;
  double T = 1.0;
  int N = 200;
};

struct McConfig {
  int M = 10000;
  std::uint64_t seed = 20240811;
  bool antithetic = true;
};

struct BasisConfig {
  int degree = 2;
  bool use_state = true;
  bool use_w = false;
  double ridge = 1e-8;

  RegressionBasis to_basis() const {
    RegressionBasis b;
    b.degree = degree;
    b.use_all_state = use_state;
    b.use_w = use_w;
    b.ridge = ridge;
    return b;
  }
};

// A fully resolved experiment configuration. Experiments install their own
// defaults first; the JSON document then overrides field by field.
struct ExperimentConfig {
  std::string experiment;
  GridConfig grid;
  McConfig mc;
  BasisConfig basis;
  json problem;  // optional problem override, experiment-specific
  std::map<std::string, double> tolerances;
  std::string output_dir = "out";
  bool strict = false;

  double tolerance_or(const std::string& key, double fallback) const {
    const auto it = tolerances.find(key);
    return it == tolerances.end() ? fallback : it->second;
  }
};

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

enum class Cmp { le, ge };

struct CriterionRow {
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  double std_error = 0.0;
  Cmp cmp = Cmp::le;
  bool pass = false;
  double wall_ms = 0.0;
};

// Statistical pass rule: a criterion only fails when it misses its tolerance
// by more than three standard errors.
inline bool criterion_pass(double measured, double tolerance, double std_error, Cmp cmp) {
  if (cmp == Cmp::le) return measured <= tolerance + 3.0 * std_error;
  return measured >= tolerance - 3.0 * std_error;
}

struct RunReport {
  std::string experiment;
  std::vector<CriterionRow> rows;
  ExperimentConfig config;

  bool all_pass() const {
    for (const auto& r : rows)
      if (!r.pass) return false;
    return true;
  }

  void add(const std::string& name, double measured, double tolerance, double se,
           Cmp cmp = Cmp::le) {
    CriterionRow row;
    row.name = name;
    row.measured = measured;
    row.tolerance = tolerance;
    row.std_error = se;
    row.cmp = cmp;
    row.pass = criterion_pass(measured, tolerance, se, cmp);
    rows.push_back(row);
  }
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace detail

inline std::string report_csv(const RunReport& report) {
  std::string out = "experiment,criterion,measured,tolerance,std_error,comparator,pass,wall_ms\n";
  for (const auto& r : report.rows) {
    out += report.experiment + "," + r.name + "," + detail::fmt_double(r.measured) + "," +
           detail::fmt_double(r.tolerance) + "," + detail::fmt_double(r.std_error) + "," +
           (r.cmp == Cmp::le ? "le" : "ge") + "," + (r.pass ? "pass" : "fail") + "," +
           detail::fmt_double(r.wall_ms) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// problem parsing: constants and whitelisted factor forms
// ---------------------------------------------------------------------------

namespace detail {

// whitelisted scalar factor forms of the Brownian level
inline ScalarField parse_scalar_field(const json& j, const std::string& where) {
  if (j.is_number()) return constant_field(j.get<double>());
  if (j.is_object()) {
    if (!j.contains("form"))
      throw SchemaError("field '" + where + "': object form requires a 'form' key");
    const std::string form = j.at("form").get<std::string>();
    const double a0 = j.value("a0", 0.0);
    const double a1 = j.value("a1", 0.0);
    for (const auto& [key, val] : j.items()) {
      (void)val;
      if (key != "form" && key != "a0" && key != "a1")
        throw SchemaError("field '" + where + "': unknown key '" + key + "'");
    }
    if (form == "a0+a1*sin(w)")
      return {[a0, a1](double, const Vec&, double w) { return a0 + a1 * std::sin(w); },
              Growth::bounded, std::abs(a0) + std::abs(a1)};
    if (form == "a0+a1*cos(w)")
      return {[a0, a1](double, const Vec&, double w) { return a0 + a1 * std::cos(w); },
              Growth::bounded, std::abs(a0) + std::abs(a1)};
    if (form == "a0+a1*w")
      return {[a0, a1](double, const Vec&, double w) { return a0 + a1 * w; }, Growth::linear,
              std::numeric_limits<double>::infinity()};
    throw SchemaError("field '" + where + "': form '" + form +
                      "' is not in the registered whitelist");
  }
  throw SchemaError("field '" + where + "': expected a number or a form object");
}

inline MatrixField parse_matrix_field(const json& j, int rows, int cols,
                                      const std::string& where) {
  if (j.is_number() || j.is_object()) {
    if (rows == 1 && cols == 1) {
      const ScalarField s = parse_scalar_field(j, where);
      return {[s](double t, const Vec& x, double w) { return Mat::Constant(1, 1, s(t, x, w)); },
              s.growth, s.bound};
    }
    if (j.is_number())
      throw SchemaError("field '" + where + "': a matrix entry needs a nested array");
    throw SchemaError("field '" + where + "': factor forms are scalar-only");
  }
  if (j.is_array()) {
    Mat m(rows, cols);
    if (static_cast<int>(j.size()) != rows)
      throw SchemaError("field '" + where + "': wrong row count");
    for (int i = 0; i < rows; ++i) {
      const auto& row = j.at(i);
      if (!row.is_array() || static_cast<int>(row.size()) != cols)
        throw SchemaError("field '" + where + "': wrong column count");
      for (int c = 0; c < cols; ++c) m(i, c) = row.at(c).get<double>();
    }
    return constant_field(m);
  }
  throw SchemaError("field '" + where + "': expected a number, array, or form object");
}

}  // namespace detail

struct LqProblemConfig {
  LqCoefficients coeffs;
  Vec x0;
};

inline LqProblemConfig parse_lq_problem(const json& j) {
  static const std::vector<std::string> allowed = {"type", "n",      "k", "A", "B", "C", "D",
                                                   "lambda", "Q",    "R", "G", "x0"};
  std::string bad;
  for (const auto& [key, val] : j.items()) {
    (void)val;
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) bad += " '" + key + "'";
  }
  if (!bad.empty()) throw SchemaError("lq problem: unknown keys:" + bad);

  LqProblemConfig out;
  const int n = j.value("n", 1);
  const int k = j.value("k", 1);
  out.coeffs.n = n;
  out.coeffs.k = k;
  auto member = [&](const char* key, int r, int c, double fallback) -> MatrixField {
    if (j.contains(key)) return detail::parse_matrix_field(j.at(key), r, c, key);
    return constant_field(Mat::Constant(r, c, fallback));
  };
  out.coeffs.A = member("A", n, n, 0.0);
  out.coeffs.B = member("B", n, k, 1.0);
  out.coeffs.C = member("C", n, n, 0.0);
  out.coeffs.D = member("D", n, k, 0.0);
  out.coeffs.Q = member("Q", n, n, 1.0);
  out.coeffs.R = member("R", k, k, 1.0);
  out.coeffs.G_term = member("G", n, n, 1.0);
  out.coeffs.lambda =
      j.contains("lambda") ? detail::parse_scalar_field(j.at("lambda"), "lambda")
                           : constant_field(0.0);
  out.x0 = Vec::Constant(n, 1.0);
  if (j.contains("x0")) {
    const auto& arr = j.at("x0");
    if (!arr.is_array() || static_cast<int>(arr.size()) != n)
      throw SchemaError("lq problem: x0 must be an array of length n");
    for (int i = 0; i < n; ++i) out.x0[i] = arr.at(i).get<double>();
  }
  return out;
}

// Registered non-LQ test problems.
struct PresetProblem {
  ProblemSpec spec;
  Vec x0;
  Vec u0;  // a reference (suboptimal) constant control
};

inline PresetProblem make_preset(const std::string& name, const json& j) {
  PresetProblem out;
  if (name == "sin_drift_recursive") {
    // b = sin(x) + u, sigma = 0.2, f = y/2 + z/4 + u^2, h = x^2 / (1 + x^2)
    ProblemSpec spec;
    spec.n = 1;
    spec.k = 1;
    spec.b = [](double, const Vec& x, const Vec& u, double) {
      return Vec::Constant(1, std::sin(x[0]) + u[0]);
    };
    spec.sigma = [](double, const Vec&, const Vec&, double) { return Vec::Constant(1, 0.2); };
    spec.f = [](double, const Vec&, double y, double z, const Vec& u, double) {
      return 0.5 * y + 0.25 * z + u[0] * u[0];
    };
    spec.h = [](const Vec& x, double) { return x[0] * x[0] / (1.0 + x[0] * x[0]); };
    spec.b_x = [](double, const Vec& x, const Vec&, double) {
      return Mat::Constant(1, 1, std::cos(x[0]));
    };
    spec.b_u = [](double, const Vec&, const Vec&, double) { return Mat::Constant(1, 1, 1.0); };
    spec.sigma_x = [](double, const Vec&, const Vec&, double) { return Mat::Zero(1, 1); };
    spec.sigma_u = [](double, const Vec&, const Vec&, double) { return Mat::Zero(1, 1); };
    spec.f_x = [](double, const Vec&, double, double, const Vec&, double) {
      return Vec::Zero(1);
    };
    spec.f_y = [](double, const Vec&, double, double, const Vec&, double) { return 0.5; };
    spec.f_z = [](double, const Vec&, double, double, const Vec&, double) { return 0.25; };
    spec.f_u = [](double, const Vec&, double, double, const Vec& u, double) {
      return Vec::Constant(1, 2.0 * u[0]);
    };
    spec.h_x = [](const Vec& x, double) {
      const double d = 1.0 + x[0] * x[0];
      return Vec::Constant(1, 2.0 * x[0] / (d * d));
    };
    out.spec = spec;
    out.x0 = Vec::Constant(1, j.value("x0", 0.5));
    out.u0 = Vec::Constant(1, j.value("u0", 0.1));
    return out;
  }
  if (name == "gbm") {
    const double mu = j.value("mu", 0.1);
    const double sg = j.value("sigma", 0.2);
    ProblemSpec spec;
    spec.n = 1;
    spec.k = 1;
    spec.b = [mu](double, const Vec& x, const Vec&, double) -> Vec { return mu * x; };
    spec.sigma = [sg](double, const Vec& x, const Vec&, double) -> Vec { return sg * x; };
    spec.f = [](double, const Vec&, double, double, const Vec&, double) { return 0.0; };
    spec.h = [](const Vec& x, double) { return x[0]; };
    spec.b_x = [mu](double, const Vec&, const Vec&, double) {
      return Mat::Constant(1, 1, mu);
    };
    spec.sigma_x = [sg](double, const Vec&, const Vec&, double) {
      return Mat::Constant(1, 1, sg);
    };
    out.spec = spec;
    out.x0 = Vec::Constant(1, j.value("x0", 1.0));
    out.u0 = Vec::Zero(1);
    return out;
  }
  throw SchemaError("unknown problem preset '" + name + "'");
}

// ---------------------------------------------------------------------------
// experiment registry
// ---------------------------------------------------------------------------

RunReport run_experiment(const ExperimentConfig& config);

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {
      "riccati_fixed_point", "riccati_cross_validate", "lq_value_match",
      "mp_dpp_lq",           "mp_dpp_general",         "stationarity",
      "gradient_check",      "first_order_condition",  "dpp_check",
      "hjb_delta_check",     "sde_convergence",        "constant_error"};
  return names;
}

inline bool is_registered(const std::string& name) {
  const auto& names = experiment_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

// Per-experiment default sizes (the config document overrides them).
inline ExperimentConfig default_config(const std::string& experiment) {
  if (!is_registered(experiment))
    throw SchemaError("unknown experiment '" + experiment + "'");
  ExperimentConfig c;
  c.experiment = experiment;
  if (experiment == "riccati_cross_validate") {
    c.grid.N = 50;
    c.mc.M = 20000;
    c.basis.use_w = true;
    c.basis.use_state = false;
  } else if (experiment == "lq_value_match") {
    c.basis.degree = 3;
    c.basis.use_w = true;
  } else if (experiment == "mp_dpp_lq") {
    c.basis.degree = 2;
  } else if (experiment == "sde_convergence") {
    c.mc.M = 4000;
  } else if (experiment == "dpp_check") {
    c.basis.degree = 2;
  } else if (experiment == "gradient_check") {
    c.basis.degree = 2;
  }
  return c;
}

// Parses and validates the single JSON configuration document; unknown keys
// are collected into the schema error. Environment overrides: FBSDE_SEED and
// FBSDE_OUTPUT_DIR.
inline ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw SchemaError("config must be a JSON object");
  if (!doc.contains("experiment")) throw SchemaError("config is missing the 'experiment' key");
  const std::string name = doc.at("experiment").get<std::string>();
  if (!is_registered(name)) throw SchemaError("unknown experiment '" + name + "'");

  static const std::vector<std::string> allowed = {"experiment", "grid",       "mc",
                                                   "basis",      "problem",    "tolerances",
                                                   "output_dir", "strict"};
  std::string bad;
  for (const auto& [key, val] : doc.items()) {
    (void)val;
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) bad += " '" + key + "'";
  }
  if (!bad.empty()) throw SchemaError("config has unknown keys:" + bad);

  ExperimentConfig c = default_config(name);
  if (doc.contains("grid")) {
    const auto& g = doc.at("grid");
    for (const auto& [key, val] : g.items()) {
      (void)val;
      if (key != "t0" && key != "T" && key != "N")
        throw SchemaError("grid has unknown key '" + key + "'");
    }
    c.grid.t0 = g.value("t0", c.grid.t0);
    c.grid.T = g.value("T", c.grid.T);
    c.grid.N = g.value("N", c.grid.N);
  }
  if (doc.contains("mc")) {
    const auto& m = doc.at("mc");
    for (const auto& [key, val] : m.items()) {
      (void)val;
      if (key != "M" && key != "seed" && key != "antithetic")
        throw SchemaError("mc has unknown key '" + key + "'");
    }
    c.mc.M = m.value("M", c.mc.M);
    c.mc.seed = m.value("seed", c.mc.seed);
    c.mc.antithetic = m.value("antithetic", c.mc.antithetic);
  }
  if (doc.contains("basis")) {
    const auto& b = doc.at("basis");
    for (const auto& [key, val] : b.items()) {
      (void)val;
      if (key != "degree" && key != "variables" && key != "ridge")
        throw SchemaError("basis has unknown key '" + key + "'");
    }
    c.basis.degree = b.value("degree", c.basis.degree);
    c.basis.ridge = b.value("ridge", c.basis.ridge);
    if (b.contains("variables")) {
      c.basis.use_state = false;
      c.basis.use_w = false;
      for (const auto& v : b.at("variables")) {
        const std::string s = v.get<std::string>();
        if (s == "x")
          c.basis.use_state = true;
        else if (s == "w")
          c.basis.use_w = true;
        else
          throw SchemaError("basis variables must be 'x' or 'w', got '" + s + "'");
      }
    }
  }
  if (doc.contains("problem")) c.problem = doc.at("problem");
  if (doc.contains("tolerances")) {
    for (const auto& [key, val] : doc.at("tolerances").items())
      c.tolerances[key] = val.get<double>();
  }
  c.output_dir = doc.value("output_dir", c.output_dir);
  c.strict = doc.value("strict", c.strict);

  if (const char* env_seed = std::getenv("FBSDE_SEED"))
    c.mc.seed = std::strtoull(env_seed, nullptr, 10);
  if (const char* env_out = std::getenv("FBSDE_OUTPUT_DIR")) c.output_dir = env_out;
  return c;
}

inline json config_to_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = c.experiment;
  j["grid"] = {{"t0", c.grid.t0}, {"T", c.grid.T}, {"N", c.grid.N}};
  j["mc"] = {{"M", c.mc.M}, {"seed", c.mc.seed}, {"antithetic", c.mc.antithetic}};
  std::vector<std::string> vars;
  if (c.basis.use_state) vars.push_back("x");
  if (c.basis.use_w) vars.push_back("w");
  j["basis"] = {{"degree", c.basis.degree}, {"variables", vars}, {"ridge", c.basis.ridge}};
  if (!c.problem.is_null()) j["problem"] = c.problem;
  j["tolerances"] = c.tolerances;
  j["output_dir"] = c.output_dir;
  j["strict"] = c.strict;
  return j;
}

// ---------------------------------------------------------------------------
// the experiments
// ---------------------------------------------------------------------------

namespace experiments {

inline LqProblemConfig default_deterministic_lq() {
  json j = {{"type", "lq"}, {"A", 0.05}, {"B", 1.0}, {"C", 0.3}, {"D", 0.2},
            {"lambda", 0.1}, {"Q", 1.0},  {"R", 1.0}, {"G", 1.0}, {"x0", {1.0}}};
  return parse_lq_problem(j);
}

inline LqProblemConfig fixed_point_lq() {
  json j = {{"type", "lq"}, {"A", 0.0}, {"B", 1.0}, {"C", 0.0}, {"D", 0.0},
            {"lambda", 0.0}, {"Q", 1.0}, {"R", 1.0}, {"G", 1.0}, {"x0", {1.0}}};
  return parse_lq_problem(j);
}

inline LqProblemConfig random_level_lq(double amplitude = 0.5) {
  json j = {{"type", "lq"},
            {"A", 0.0},
            {"B", 1.0},
            {"C", 0.0},
            {"D", 0.0},
            {"lambda", {{"form", "a0+a1*sin(w)"}, {"a0", 0.0}, {"a1", amplitude}}},
            {"Q", 1.0},
            {"R", 1.0},
            {"G", 1.0},
            {"x0", {1.0}}};
  return parse_lq_problem(j);
}

inline LqProblemConfig lq_from_config(const ExperimentConfig& config,
                                      const LqProblemConfig& fallback) {
  LqProblemConfig p = fallback;
  if (!config.problem.is_null()) {
    if (config.problem.value("type", "lq") != "lq")
      throw SchemaError("this experiment takes an 'lq' problem");
    p = parse_lq_problem(config.problem);
  }
  validate_lq_coefficients(p.coeffs, config.grid.t0, config.grid.T);
  return p;
}

inline RegressionBasis state_only(const BasisConfig& b) {
  BasisConfig c = b;
  c.use_state = true;
  c.use_w = false;
  return c.to_basis();
}

inline RegressionBasis state_and_level(const BasisConfig& b) {
  BasisConfig c = b;
  c.use_state = true;
  c.use_w = true;
  return c.to_basis();
}

inline RegressionBasis level_only(const BasisConfig& b) {
  BasisConfig c = b;
  c.use_state = false;
  c.use_w = true;
  return c.to_basis();
}

inline RunReport riccati_fixed_point(const ExperimentConfig& config) {
  RunReport report;
  const LqProblemConfig p = lq_from_config(config, fixed_point_lq());
  const TimeGrid grid = build_grid(config.grid.t0, config.grid.T, config.grid.N);
  const RiccatiSolution sol = solve_riccati_ode(p.coeffs, grid);
  double worst_p = 0.0, worst_l = 0.0;
  for (int k = 0; k <= grid.N; ++k) {
    worst_p = std::max(worst_p,
                       (sol.P_nodes[k] - Mat::Identity(p.coeffs.n, p.coeffs.n))
                           .cwiseAbs()
                           .maxCoeff());
    worst_l = std::max(worst_l, sol.L_nodes[k].cwiseAbs().maxCoeff());
  }
  report.add("max_abs_P_minus_fixed_point", worst_p,
             config.tolerance_or("max_abs_P_minus_fixed_point", 1e-10), 0.0);
  report.add("max_abs_L", worst_l, config.tolerance_or("max_abs_L", 0.0), 0.0);
  return report;
}

inline RunReport riccati_cross_validate(const ExperimentConfig& config) {
  RunReport report;
  const LqProblemConfig p = lq_from_config(config, default_deterministic_lq());
  const TimeGrid grid = build_grid(config.grid.t0, config.grid.T, config.grid.N);
  const BrownianDriver driver =
      sample_brownian(grid, config.mc.M, config.mc.seed, config.mc.antithetic);
  RiccatiOptions options;
  options.strict = config.strict;
  const RiccatiSolution ode = solve_riccati_ode(p.coeffs, grid, options);
  const RiccatiSolution lsmc =
      solve_riccati_lsmc(p.coeffs, grid, driver, level_only(config.basis), options);
  const Mat p_ode = ode.P_nodes[0];
  const Mat p_lsmc = lsmc.P_at(0, 0.0);
  const double gap = (p_lsmc - p_ode).cwiseAbs().maxCoeff() / p_ode.cwiseAbs().maxCoeff();
  report.add("p0_relative_gap", gap, config.tolerance_or("p0_relative_gap", 0.05), 0.0);
  report.add("max_eigenvalue_clip", lsmc.max_clip,
             config.tolerance_or("max_eigenvalue_clip", 1e-4), 0.0);
  return report;
}

inline RunReport lq_value_match(const ExperimentConfig& config) {
  RunReport report;
  const TimeGrid grid = build_grid(config.grid.t0, config.grid.T, config.grid.N);
  const BrownianDriver driver =
      sample_brownian(grid, config.mc.M, config.mc.seed, config.mc.antithetic);
  const double rel = config.tolerance_or("relative_gap", 0.02);

  {  // deterministic case: exact Riccati value vs simulated recursive cost
    const LqProblemConfig p = lq_from_config(config, fixed_point_lq());
    const RiccatiSolution ric = solve_riccati_ode(p.coeffs, grid);
    const ControlLaw law = feedback_control(ric, p.coeffs);
    const ProblemSpec spec = make_lq_problem(p.coeffs);
    const CostEstimate j =
        cost_functional(spec, law, p.x0, grid, driver, state_only(config.basis));
    const double v0 = p.x0.dot(ric.P_nodes[0] * p.x0);
    report.add("deterministic_value_gap", std::abs(j.value - v0), rel * std::abs(v0),
               j.std_error);
  }
  {  // random level case: LSMC Riccati feedback vs simulated recursive cost
    const LqProblemConfig p = random_level_lq();
    RiccatiOptions options;
    options.strict = config.strict;
    const RiccatiSolution ric =
        solve_riccati_lsmc(p.coeffs, grid, driver, level_only(config.basis), options);
    const ControlLaw law = feedback_control(ric, p.coeffs);
    const ProblemSpec spec = make_lq_problem(p.coeffs);
    const CostEstimate j =
        cost_functional(spec, law, p.x0, grid, driver, state_and_level(config.basis));
    const double v0 = p.x0.dot(ric.P_at(0, 0.0) * p.x0);
    report.add("random_value_gap", std::abs(j.value - v0), rel * std::abs(v0), j.std_error);
  }
  return report;
}

inline RunReport mp_dpp_lq(const ExperimentConfig& config) {
  RunReport report;
  const TimeGrid grid = build_grid(config.grid.t0, config.grid.T, config.grid.N);

  {  // deterministic coefficients at the configured scale
    const LqProblemConfig p = lq_from_config(config, default_deterministic_lq());
    const BrownianDriver driver =
        sample_brownian(grid, config.mc.M, config.mc.seed, config.mc.antithetic);
    const RiccatiSolution ric = solve_riccati_ode(p.coeffs, grid);
    const ControlLaw law = feedback_control(ric, p.coeffs);
    const ProblemSpec spec = make_lq_problem(p.coeffs);
    const StatePaths states = simulate_forward(spec, law, p.x0, grid, driver);
    const Eigen::MatrixXd k = solve_k_lq(p.coeffs, grid, driver);
    const AdjointTriple adj =
        solve_lq_adjoint(p.coeffs, states, law, k, driver, state_only(config.basis));
    const CostateResiduals res = mp_dpp_residual_lq(ric, states, law, adj, k, driver);
    const double tol = config.tolerance_or("deterministic_relative_rms", 0.05);
    report.add("deterministic_p_relative_rms", res.rel_p, tol, 0.0);
    report.add("deterministic_q_relative_rms", res.rel_q, tol, 0.0);
  }
  {  // random discount rate; doubled path count per the acceptance spec
    const LqProblemConfig p = random_level_lq();
    const BrownianDriver driver =
        sample_brownian(grid, 2 * config.mc.M, config.mc.seed + 1, config.mc.antithetic);
    RiccatiOptions options;
    options.strict = config.strict;
    BasisConfig fac = config.basis;
    fac.degree = std::max(fac.degree, 3);
    const RiccatiSolution ric =
        solve_riccati_lsmc(p.coeffs, grid, driver, level_only(fac), options);
    const ControlLaw law = feedback_control(ric, p.coeffs);
    const ProblemSpec spec = make_lq_problem(p.coeffs);
    const StatePaths states = simulate_forward(spec, law, p.x0, grid, driver);
    const Eigen::MatrixXd k = solve_k_lq(p.coeffs, grid, driver);
    const AdjointTriple adj =
        solve_lq_adjoint(p.coeffs, states, law, k, driver, state_and_level(fac));
    const CostateResiduals res = mp_dpp_residual_lq(ric, states, law, adj, k, driver);
    const double tol = config.tolerance_or("random_relative_rms", 0.10);
    report.add("random_p_relative_rms", res.rel_p, tol, 0.0);
    report.add("random_q_relative_rms", res.rel_q, tol, 0.0);
  }
  return report;
}

inline RunReport mp_dpp_general(const ExperimentConfig& config) {
  // the general field machinery on an LQ instance, where the quadratic field
  // makes the relation checkable at the same tolerance as the LQ route
  RunReport report;
  const LqProblemConfig p = lq_from_config(config, default_deterministic_lq());
  const TimeGrid grid = build_grid(config.grid.t0, config.grid.T, config.grid.N);
  const BrownianDriver driver =
      sample_brownian(grid, config.mc.M, config.mc.seed, config.mc.antithetic);
  const RiccatiSolution ric = solve_riccati_ode(p.coeffs, grid);
  const ControlLaw law = feedback_control(ric, p.coeffs);
  const ProblemSpec spec = make_lq_problem(p.coeffs);
  const StatePaths states = simulate_forward(spec, law, p.x0, grid, driver);
  const BsdeSolution bsde = solve_bsde(spec, states, law, driver, state_only(config.basis));
  const Eigen::MatrixXd k = solve_k_general(spec, states, law, driver, bsde);
  const AdjointTriple adj =
      solve_adjoint_general(spec, states, law, k, bsde, driver, state_only(config.basis));
  const ValueField field = ValueField::from_lq(ric);
  const CostateResiduals res = mp_dpp_relation_general(field, spec, states, law, adj, k, driver);
  const double tol = config.tolerance_or("relative_rms", 0.05);
  report.add("p_relative_rms", res.rel_p, tol, 0.0);
  report.add("q_relative_rms", res.rel_q, tol, 0.0);
  return report;
}

inline RunReport stationarity(const ExperimentConfig& config) {
  RunReport report;
  const LqProblemConfig p = lq_from_config(config, default_deterministic_lq());
  const TimeGrid grid = build_grid(config.grid.t0, config.grid.T, config.grid.N);
  const BrownianDriver driver =
      sample_brownian(grid, config.mc.M, config.mc.seed, config.mc.antithetic);
  const RiccatiSolution ric = solve_riccati_ode(p.coeffs, grid);
  const ControlLaw opt = feedback_control(ric, p.coeffs);
  const ProblemSpec spec = make_lq_problem(p.coeffs);
  const Eigen::MatrixXd k = solve_k_lq(p.coeffs, grid, driver);

  const StatePaths s_opt = simulate_forward(spec, opt, p.x0, grid, driver);
  const AdjointTriple adj_opt =
      solve_lq_adjoint(p.coeffs, s_opt, opt, k, driver, state_only(config.basis));
  const StationarityReport r_opt = stationarity_residual(p.coeffs, s_opt, opt, adj_opt, driver);
  report.add("optimal_relative_rms", r_opt.relative,
             config.tolerance_or("optimal_relative_rms", 0.05), 0.0);

  const ControlLaw shifted =
      opt.shifted([](double) { return Vec::Constant(1, 0.5); });
  const StatePaths s_sh = simulate_forward(spec, shifted, p.x0, grid, driver);
  const AdjointTriple adj_sh =
      solve_lq_adjoint(p.coeffs, s_sh, shifted, k, driver, state_only(config.basis));
  const StationarityReport r_sh =
      stationarity_residual(p.coeffs, s_sh, shifted, adj_sh, driver);
  report.add("perturbed_relative_rms", r_sh.relative,
             config.tolerance_or("perturbed_relative_rms", 0.20), 0.0, Cmp::ge);
  return report;
}

struct GradientCheckOutcome {
  double y1 = 0.0, y1_se = 0.0;
  double fd = 0.0, fd_se = 0.0;
  double dual = 0.0, dual_se = 0.0;
};

inline GradientCheckOutcome gradient_check_on(const ProblemSpec& spec, const ControlLaw& law,
                                              const Vec& x0, double direction,
                                              const TimeGrid& grid,
                                              const BrownianDriver& driver,
                                              const RegressionBasis& basis) {
  GradientCheckOutcome out;
  const StatePaths states = simulate_forward(spec, law, x0, grid, driver);
  const BsdeSolution bsde = solve_bsde(spec, states, law, driver, basis);
  PathTensor u1(driver.M, grid.N, spec.k);
  for (int m = 0; m < driver.M; ++m)
    for (int j = 0; j < grid.N; ++j) u1.at(m, j) = Vec::Constant(spec.k, direction);
  const VariationalSolution var = solve_variational(spec, states, law, bsde, u1, driver, basis);
  const CostEstimate y1 = gateaux_derivative(var);
  out.y1 = y1.value;
  out.y1_se = y1.std_error;

  const double eps = 1e-3;
  Eigen::VectorXd pw_base, pw_pert;
  cost_functional(spec, law, x0, grid, driver, basis, &pw_base);
  const ControlLaw pert =
      law.shifted([eps, direction, &spec](double) { return Vec::Constant(spec.k, eps * direction); });
  cost_functional(spec, pert, x0, grid, driver, basis, &pw_pert);
  const auto [fd, fd_se] = mc_mean_stderr((pw_pert - pw_base) / eps, driver.antithetic);
  out.fd = fd;
  out.fd_se = fd_se;

  const Eigen::MatrixXd k = solve_k_general(spec, states, law, driver, bsde);
  const AdjointTriple adj = solve_adjoint_general(spec, states, law, k, bsde, driver, basis);
  Eigen::VectorXd duality(driver.M);
  for (int m = 0; m < driver.M; ++m) {
    double acc = 0.0;
    for (int j = 0; j < grid.N; ++j) {
      const double t = grid.nodes[j];
      const double w = driver.level(m, j);
      const Vec x = states.X.at(m, j);
      const Vec u = law.value(m, j, t, x, w);
      const Vec hu = hamiltonian_u(spec, t, x, bsde.Y(m, j), bsde.Z(m, j), adj.p.at(m, j),
                                   adj.q.at(m, j), k(m, j), u, w);
      acc += hu.dot(u1.at(m, j)) * grid.dt;
    }
    duality[m] = acc;
  }
  const auto [dual, dual_se] = mc_mean_stderr(duality, driver.antithetic);
  out.dual = dual;
  out.dual_se = dual_se;
  return out;
}

inline RunReport gradient_check(const ExperimentConfig& config) {
  RunReport report;
  const TimeGrid grid = build_grid(config.grid.t0, config.grid.T, config.grid.N);
  const BrownianDriver driver =
      sample_brownian(grid, config.mc.M, config.mc.seed, config.mc.antithetic);
  const double fd_rel = config.tolerance_or("fd_relative", 0.01);
  const double dual_rel = config.tolerance_or("duality_relative", 0.05);

  {  // LQ instance around a deliberately suboptimal constant law
    const LqProblemConfig p = lq_from_config(config, default_deterministic_lq());
    const ProblemSpec spec = make_lq_problem(p.coeffs);
    const ControlLaw law = ControlLaw::constant(Vec::Constant(p.coeffs.k, -0.2));
    const GradientCheckOutcome o = gradient_check_on(spec, law, p.x0, 0.8, grid, driver,
                                                     state_only(config.basis));
    report.add("lq_fd_gap", std::abs(o.y1 - o.fd), fd_rel * std::abs(o.fd),
               o.y1_se + o.fd_se);
    report.add("lq_duality_gap", std::abs(o.y1 - o.dual), dual_rel * std::abs(o.dual),
               o.y1_se + o.dual_se);
  }
  {  // bounded non-quadratic instance
    const PresetProblem p = make_preset("sin_drift_recursive", json::object());
    const ControlLaw law = ControlLaw::constant(p.u0);
    const GradientCheckOutcome o =
        gradient_check_on(p.spec, law, p.x0, 0.8, grid, driver, state_only(config.basis));
    report.add("nonlq_fd_gap", std::abs(o.y1 - o.fd), fd_rel * std::abs(o.fd),
               o.y1_se + o.fd_se);
    report.add("nonlq_duality_gap", std::abs(o.y1 - o.dual), dual_rel * std::abs(o.dual),
               o.y1_se + o.dual_se);
  }
  return report;
}

inline RunReport first_order_condition(const ExperimentConfig& config) {
  RunReport report;
  const LqProblemConfig p = lq_from_config(config, default_deterministic_lq());
  const TimeGrid grid = build_grid(config.grid.t0, config.grid.T, config.grid.N);
  const BrownianDriver driver =
      sample_brownian(grid, config.mc.M, config.mc.seed, config.mc.antithetic);
  const RiccatiSolution ric = solve_riccati_ode(p.coeffs, grid);
  const ControlLaw opt = feedback_control(ric, p.coeffs);
  const ProblemSpec spec = make_lq_problem(p.coeffs);
  const Eigen::MatrixXd k = solve_k_lq(p.coeffs, grid, driver);

  std::vector<Vec> grid_points;
  for (double u = -2.0; u <= 2.0 + 1e-9; u += 0.5)
    grid_points.push_back(Vec::Constant(p.coeffs.k, u));

  const StatePaths s_opt = simulate_forward(spec, opt, p.x0, grid, driver);
  const BsdeSolution bsde_opt = solve_bsde(spec, s_opt, opt, driver, state_only(config.basis));
  const AdjointTriple adj_opt =
      solve_lq_adjoint(p.coeffs, s_opt, opt, k, driver, state_only(config.basis));
  const FirstOrderReport ok = first_order_condition_check(spec, s_opt, opt, adj_opt, k, bsde_opt,
                                                          driver, grid_points);
  report.add("optimal_violation_fraction", ok.violation_fraction,
             config.tolerance_or("optimal_violation_fraction", 0.01), 0.0);

  const ControlLaw bad = opt.shifted([](double) { return Vec::Constant(1, 0.5); });
  const StatePaths s_bad = simulate_forward(spec, bad, p.x0, grid, driver);
  const BsdeSolution bsde_bad = solve_bsde(spec, s_bad, bad, driver, state_only(config.basis));
  const AdjointTriple adj_bad =
      solve_lq_adjoint(p.coeffs, s_bad, bad, k, driver, state_only(config.basis));
  const FirstOrderReport fail = first_order_condition_check(spec, s_bad, bad, adj_bad, k,
                                                            bsde_bad, driver, grid_points);
  report.add("perturbed_violation_fraction", fail.violation_fraction,
             config.tolerance_or("perturbed_violation_fraction", 0.10), 0.0, Cmp::ge);
  return report;
}

inline RunReport dpp_check(const ExperimentConfig& config) {
  RunReport report;
  const LqProblemConfig p = lq_from_config(config, fixed_point_lq());
  const TimeGrid grid = build_grid(config.grid.t0, config.grid.T, config.grid.N);
  const BrownianDriver driver =
      sample_brownian(grid, config.mc.M, config.mc.seed, config.mc.antithetic);
  const RiccatiSolution ric = solve_riccati_ode(p.coeffs, grid);
  const ValueField field = ValueField::from_lq(ric);
  const ProblemSpec spec = make_lq_problem(p.coeffs);
  const ControlLaw opt = feedback_control(ric, p.coeffs);
  const int delta = grid.N / 4;
  const double v0 = p.x0.dot(ric.P_nodes[0] * p.x0);

  const CostEstimate r_opt =
      dpp_residual(field, spec, opt, 0, delta, p.x0, grid, driver, state_only(config.basis));
  report.add("optimal_abs_residual", std::abs(r_opt.value),
             config.tolerance_or("optimal_abs_residual", 0.02 * std::abs(v0)), r_opt.std_error);

  // five clearly suboptimal laws must never undershoot the value
  double worst = std::numeric_limits<double>::infinity();
  double worst_se = 0.0;
  for (double cst : {0.5, -1.0, 1.0, 0.8, -0.4}) {
    const ControlLaw law = ControlLaw::constant(Vec::Constant(p.coeffs.k, cst));
    const CostEstimate r =
        dpp_residual(field, spec, law, 0, delta, p.x0, grid, driver, state_only(config.basis));
    if (r.value < worst) {
      worst = r.value;
      worst_se = r.std_error;
    }
  }
  report.add("suboptimal_min_residual", worst, config.tolerance_or("suboptimal_min_residual", 0.0),
             worst_se, Cmp::ge);
  return report;
}

inline RunReport hjb_delta_check(const ExperimentConfig& config) {
  RunReport report;
  const LqProblemConfig p = lq_from_config(config, fixed_point_lq());
  const TimeGrid grid = build_grid(config.grid.t0, config.grid.T, config.grid.N);
  const RiccatiSolution ric = solve_riccati_ode(p.coeffs, grid);
  const ValueField field = ValueField::from_lq(ric);
  const ProblemSpec spec = make_lq_problem(p.coeffs);
  const int t_index = grid.N / 2;
  const Vec x = p.x0;

  // nonpositivity on a wide control grid, exactly
  std::vector<Vec> wide;
  for (double u = -3.0; u <= 3.0 + 1e-9; u += 0.5) wide.push_back(Vec::Constant(p.coeffs.k, u));
  double worst_delta = -std::numeric_limits<double>::infinity();
  for (const Vec& u : wide)
    worst_delta =
        std::max(worst_delta, delta_function(field, spec, grid, t_index, x, 0.0, u, wide));
  report.add("max_delta_on_grid", worst_delta, config.tolerance_or("max_delta_on_grid", 0.0),
             0.0);

  // quadratic approach of the grid minimizer to the continuous one
  const Vec u_star = lq_feedback_value(eval_lq(p.coeffs, grid.nodes[t_index], 0.0),
                                       ric.P_nodes[t_index], Mat::Zero(p.coeffs.n, p.coeffs.n),
                                       x);
  HamiltonianInputs in_star = hjb_inputs(field, t_index, grid.nodes[t_index], x, 0.0, u_star);
  const double g_star = generalized_hamiltonian(in_star, spec, 0.0);
  std::vector<double> gaps;
  for (double s : {0.4, 0.2, 0.1}) {
    double best = std::numeric_limits<double>::infinity();
    for (int j = -5; j <= 5; ++j) {
      const Vec u = Vec::Constant(p.coeffs.k, u_star[0] - s / 3.0 + j * s);
      HamiltonianInputs in = hjb_inputs(field, t_index, grid.nodes[t_index], x, 0.0, u);
      best = std::min(best, generalized_hamiltonian(in, spec, 0.0));
    }
    gaps.push_back(best - g_star);
  }
  const double slope = std::log(gaps[0] / gaps[2]) / std::log(4.0);
  report.add("refinement_order_gap", std::abs(slope - 2.0),
             config.tolerance_or("refinement_order_gap", 0.2), 0.0);
  return report;
}

inline RunReport sde_convergence(const ExperimentConfig& config) {
  RunReport report;
  const PresetProblem p = make_preset(
      "gbm", config.problem.is_null() ? json::object() : config.problem);
  const TimeGrid grid = build_grid(config.grid.t0, config.grid.T, config.grid.N);
  const BrownianDriver driver =
      sample_brownian(grid, config.mc.M, config.mc.seed, config.mc.antithetic);
  const ControlLaw law = ControlLaw::constant(Vec::Zero(1));
  const StatePaths s = simulate_forward(p.spec, law, p.x0, grid, driver);
  const double mu = config.problem.is_null() ? 0.1 : config.problem.value("mu", 0.1);
  const double sg = config.problem.is_null() ? 0.2 : config.problem.value("sigma", 0.2);
  double ss = 0.0;
  for (int m = 0; m < driver.M; ++m) {
    const double exact =
        p.x0[0] * std::exp((mu - 0.5 * sg * sg) * (grid.T - grid.t0) + sg * driver.level(m, grid.N));
    const double diff = s.X.scalar(m, grid.N) - exact;
    ss += diff * diff;
  }
  const double rms = std::sqrt(ss / driver.M);
  report.add("strong_rms_error", rms, config.tolerance_or("strong_rms_error", 0.05), 0.0);
  return report;
}

inline RunReport constant_error(const ExperimentConfig& config) {
  // diagnostic experiment with a flat error, used to sanity-check studies
  RunReport report;
  report.add("flat_error", 1.0, config.tolerance_or("flat_error", 2.0), 0.0);
  return report;
}

}  // namespace experiments

inline RunReport run_experiment(const ExperimentConfig& config) {
  if (!is_registered(config.experiment))
    throw SchemaError("unknown experiment '" + config.experiment + "'");
  const auto start = std::chrono::steady_clock::now();
  RunReport report;
  if (config.experiment == "riccati_fixed_point")
    report = experiments::riccati_fixed_point(config);
  else if (config.experiment == "riccati_cross_validate")
    report = experiments::riccati_cross_validate(config);
  else if (config.experiment == "lq_value_match")
    report = experiments::lq_value_match(config);
  else if (config.experiment == "mp_dpp_lq")
    report = experiments::mp_dpp_lq(config);
  else if (config.experiment == "mp_dpp_general")
    report = experiments::mp_dpp_general(config);
  else if (config.experiment == "stationarity")
    report = experiments::stationarity(config);
  else if (config.experiment == "gradient_check")
    report = experiments::gradient_check(config);
  else if (config.experiment == "first_order_condition")
    report = experiments::first_order_condition(config);
  else if (config.experiment == "dpp_check")
    report = experiments::dpp_check(config);
  else if (config.experiment == "hjb_delta_check")
    report = experiments::hjb_delta_check(config);
  else if (config.experiment == "sde_convergence")
    report = experiments::sde_convergence(config);
  else if (config.experiment == "constant_error")
    report = experiments::constant_error(config);
  const auto end = std::chrono::steady_clock::now();
  const double ms = std::chrono::duration<double, std::milli>(end - start).count();
  report.experiment = config.experiment;
  report.config = config;
  for (auto& row : report.rows) row.wall_ms = ms;
  return report;
}

// Writes the CSV report and the JSON manifest (the full resolved config plus
// outcomes) into config.output_dir. Returns the CSV path.
inline std::string write_report(const RunReport& report) {
  namespace fs = std::filesystem;
  fs::create_directories(report.config.output_dir);
  const std::string csv_path =
      (fs::path(report.config.output_dir) / (report.experiment + "_report.csv")).string();
  {
    std::ofstream out(csv_path);
    out << report_csv(report);
  }
  const std::string manifest_path =
      (fs::path(report.config.output_dir) / (report.experiment + "_manifest.json")).string();
  json manifest;
  manifest["experiment"] = report.experiment;
  manifest["resolved_config"] = config_to_json(report.config);
  manifest["all_pass"] = report.all_pass();
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"criterion", r.name},
                    {"measured", r.measured},
                    {"tolerance", r.tolerance},
                    {"std_error", r.std_error},
                    {"comparator", r.cmp == Cmp::le ? "le" : "ge"},
                    {"pass", r.pass}});
  }
  manifest["rows"] = rows;
  manifest["outputs"] = {csv_path};
  {
    std::ofstream out(manifest_path);
    out << manifest.dump(2) << "\n";
  }
  return csv_path;
}

// Optional state-path dump (path index, node, time, state components).
inline std::string dump_paths_csv(const StatePaths& states, const BrownianDriver& driver,
                                  const std::string& file) {
  namespace fs = std::filesystem;
  if (fs::path(file).has_parent_path()) fs::create_directories(fs::path(file).parent_path());
  std::ofstream out(file);
  const int n = states.X.dim();
  out << "path,node,time";
  for (int i = 0; i < n; ++i) out << ",x" << i;
  out << "\n";
  for (int m = 0; m < driver.M; ++m) {
    for (int k = 0; k <= states.grid.N; ++k) {
      out << m << "," << k << "," << detail::fmt_double(states.grid.nodes[k]);
      for (int i = 0; i < n; ++i) out << "," << detail::fmt_double(states.X.at(m, k)[i]);
      out << "\n";
    }
  }
  return file;
}

// Simulates the configured problem under its natural law (optimal feedback
// for LQ coefficients, the reference control for presets) and dumps the
// paths. Backs the CLI --dump-paths flag.
inline std::string dump_experiment_paths(const ExperimentConfig& config,
                                         const std::string& file) {
  const TimeGrid grid = build_grid(config.grid.t0, config.grid.T, config.grid.N);
  const BrownianDriver driver =
      sample_brownian(grid, config.mc.M, config.mc.seed, config.mc.antithetic);
  if (!config.problem.is_null() && config.problem.value("type", "lq") == "preset") {
    const PresetProblem p =
        make_preset(config.problem.value("name", "gbm"), config.problem);
    const StatePaths states =
        simulate_forward(p.spec, ControlLaw::constant(p.u0), p.x0, grid, driver);
    return dump_paths_csv(states, driver, file);
  }
  const LqProblemConfig p = experiments::lq_from_config(
      config, experiments::default_deterministic_lq());
  RiccatiSolution ric;
  try {
    ric = solve_riccati_ode(p.coeffs, grid);
  } catch (const ConfigError&) {
    ric = solve_riccati_lsmc(p.coeffs, grid, driver,
                             experiments::level_only(config.basis));
  }
  const ControlLaw law = feedback_control(ric, p.coeffs);
  const StatePaths states =
      simulate_forward(make_lq_problem(p.coeffs), law, p.x0, grid, driver);
  return dump_paths_csv(states, driver, file);
}

// ---------------------------------------------------------------------------
// convergence studies
// ---------------------------------------------------------------------------

struct StudyRow {
  double value = 0.0;
  double error = 0.0;
  double std_error = 0.0;
};

struct StudyTable {
  std::string experiment;
  std::string axis;
  std::vector<StudyRow> rows;
  double slope = 0.0;  // log-log slope of error against the axis value
};

// Reruns the experiment for each axis value and fits a log-log slope to the
// chosen criterion row's measurement (the first row when no name is given).
inline StudyTable convergence_study(const ExperimentConfig& base, const std::string& axis,
                                    const std::vector<double>& values,
                                    const std::string& row_name = "") {
  if (values.size() < 3)
    throw ConfigError("convergence_study: need at least three axis values");
  for (size_t i = 1; i < values.size(); ++i)
    if (!(values[i] > values[i - 1]))
      throw ConfigError("convergence_study: axis values must be sorted ascending");
  if (axis != "N" && axis != "M" && axis != "degree")
    throw ConfigError("convergence_study: axis must be one of N, M, degree");

  StudyTable table;
  table.experiment = base.experiment;
  table.axis = axis;
  for (double v : values) {
    ExperimentConfig c = base;
    if (axis == "N")
      c.grid.N = static_cast<int>(v);
    else if (axis == "M")
      c.mc.M = static_cast<int>(v);
    else
      c.basis.degree = static_cast<int>(v);
    const RunReport report = run_experiment(c);
    if (report.rows.empty()) throw ConfigError("convergence_study: experiment reported no rows");
    const CriterionRow* picked = &report.rows.front();
    if (!row_name.empty()) {
      picked = nullptr;
      for (const auto& r : report.rows)
        if (r.name == row_name) picked = &r;
      if (!picked)
        throw ConfigError("convergence_study: experiment has no row named '" + row_name + "'");
    }
    StudyRow row;
    row.value = v;
    row.error = picked->measured;
    row.std_error = picked->std_error;
    table.rows.push_back(row);
  }
  // least-squares slope of log(error) on log(value); flat if errors vanish
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (const auto& r : table.rows) {
    if (r.error <= 0.0) continue;
    const double lx = std::log(r.value);
    const double ly = std::log(r.error);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  table.slope = (n >= 2) ? (n * sxy - sx * sy) / (n * sxx - sx * sx) : 0.0;
  return table;
}

inline std::string study_csv(const StudyTable& table) {
  std::string out = "experiment,axis,value,error,std_error,slope\n";
  for (const auto& r : table.rows) {
    out += table.experiment + "," + table.axis + "," + detail::fmt_double(r.value) + "," +
           detail::fmt_double(r.error) + "," + detail::fmt_double(r.std_error) + "," +
           detail::fmt_double(table.slope) + "\n";
  }
  return out;
}

inline std::string write_study(const StudyTable& table, const std::string& output_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(output_dir);
  const std::string path =
      (fs::path(output_dir) / (table.experiment + "_study_" + table.axis + ".csv")).string();
  std::ofstream out(path);
  out << study_csv(table);
  return path;
}

}  // namespace fbsde
