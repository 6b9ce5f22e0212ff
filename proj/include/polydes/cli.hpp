#pragma once

// Problem-file driver: a JSON schema for problems and results, the
// solve -> recover -> certify pipeline with exit-code semantics, golden
// designs for the bundled presets, and the command-line front end.
//
// Exit codes: 0 when the recovered design is certified, 2 when the rank
// condition is never satisfied within the lift cap (diagnostics are still
// written), 1 for input or solver errors.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "polydes/certify.hpp"
#include "polydes/criteria.hpp"
#include "polydes/designsolve.hpp"
#include "polydes/errors.hpp"
#include "polydes/recovery.hpp"
#include "polydes/semialg.hpp"

namespace polydes::cli {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitRankNotSatisfied = 2;

/// Everything a run needs, parsed and validated. `space` keeps the raw
/// constraints as the file gave them; compactness is certified when the
/// pipeline hands the set to the solver.
struct ProblemFile {
  std::string space_name;  // preset name; empty for inline sets
  semialg::SemiAlgebraicSet space;
  std::optional<double> radius_hint;
  int d = 1;
  int delta = 1;
  std::optional<Eigen::MatrixXd> basis_matrix;
  criteria::Criterion criterion = criteria::Criterion::D;
  recovery::RecoveryConfig recovery;
  std::vector<std::pair<polybasis::Exponents, double>> fixed_moments;
  std::uint64_t seed = 0;
  std::string out;  // output directory; empty disables file output
};

// ---------------------------------------------------------------------------
// JSON parsing with location-carrying errors.

namespace detail {

inline const json& field(const json& j, const std::string& key,
                         const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw ParseError(where + ": missing required field '" + key + "'");
  }
  return *it;
}

inline void reject_unknown(const json& j, const std::string& where,
                           std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed) {
      if (key == a) {
        known = true;
        break;
      }
    }
    if (!known) throw ParseError(where + ": unknown field '" + key + "'");
  }
}

inline double as_number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ParseError(where + ": expected a number");
  return j.get<double>();
}

inline int as_int(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ParseError(where + ": expected an integer");
  return j.get<int>();
}

inline std::string as_string(const json& j, const std::string& where) {
  if (!j.is_string()) throw ParseError(where + ": expected a string");
  return j.get<std::string>();
}

}  // namespace detail

/// Polynomials travel as [{"exponents": [..], "coefficient": c}, ..].
inline polybasis::Polynomial parse_polynomial(const json& j, int n,
                                              const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected an array of terms");
  polybasis::Polynomial p(n);
  for (size_t t = 0; t < j.size(); ++t) {
    const std::string here = where + "[" + std::to_string(t) + "]";
    const json& term = j[t];
    if (!term.is_object()) throw ParseError(here + ": expected a term object");
    detail::reject_unknown(term, here, {"exponents", "coefficient"});
    const json& ex = detail::field(term, "exponents", here);
    if (!ex.is_array() || static_cast<int>(ex.size()) != n) {
      throw ParseError(here + ".exponents: expected an array of " +
                       std::to_string(n) + " entries");
    }
    polybasis::Exponents alpha(static_cast<size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
      alpha[static_cast<size_t>(i)] =
          detail::as_int(ex[static_cast<size_t>(i)],
                         here + ".exponents[" + std::to_string(i) + "]");
      if (alpha[static_cast<size_t>(i)] < 0) {
        throw ParseError(here + ".exponents: exponents must be nonnegative");
      }
    }
    p.add_term(std::move(alpha),
               detail::as_number(detail::field(term, "coefficient", here),
                                 here + ".coefficient"));
  }
  return p;
}

inline json polynomial_to_json(const polybasis::Polynomial& p) {
  json terms = json::array();
  for (const auto& [alpha, coef] : p.terms) {
    terms.push_back({{"exponents", alpha}, {"coefficient", coef}});
  }
  return terms;
}

inline ProblemFile parse_problem(const json& j) {
  if (!j.is_object()) throw ParseError("problem: expected a JSON object");
  detail::reject_unknown(j, "problem",
                         {"schema_version", "design_space", "regression",
                          "criterion", "delta", "recovery", "fixed_moments",
                          "seed", "out"});
  if (j.contains("schema_version") &&
      detail::as_int(j["schema_version"], "problem.schema_version") !=
          kSchemaVersion) {
    throw ParseError("problem.schema_version: expected " +
                     std::to_string(kSchemaVersion));
  }

  ProblemFile p;
  const json& space = detail::field(j, "design_space", "problem");
  if (space.is_string()) {
    p.space_name = space.get<std::string>();
    p.space = semialg::preset(p.space_name);
  } else if (space.is_object()) {
    const std::string where = "problem.design_space";
    detail::reject_unknown(space, where, {"n", "inequalities", "radius_hint"});
    p.space.n = detail::as_int(detail::field(space, "n", where), where + ".n");
    if (p.space.n < 1) throw ParseError(where + ".n: must be positive");
    const json& ineqs = detail::field(space, "inequalities", where);
    if (!ineqs.is_array() || ineqs.empty()) {
      throw ParseError(where + ".inequalities: expected a nonempty array");
    }
    for (size_t g = 0; g < ineqs.size(); ++g) {
      p.space.inequalities.push_back(parse_polynomial(
          ineqs[g], p.space.n,
          where + ".inequalities[" + std::to_string(g) + "]"));
    }
    if (space.contains("radius_hint")) {
      p.radius_hint = detail::as_number(space["radius_hint"], where + ".radius_hint");
    }
  } else {
    throw ParseError("problem.design_space: expected a preset name or an object");
  }

  const json& reg = detail::field(j, "regression", "problem");
  detail::reject_unknown(reg, "problem.regression", {"d", "basis_matrix"});
  p.d = detail::as_int(detail::field(reg, "d", "problem.regression"),
                       "problem.regression.d");
  if (p.d < 1) throw ParseError("problem.regression.d: must be at least 1");
  if (reg.contains("basis_matrix")) {
    const json& bm = reg["basis_matrix"];
    if (!bm.is_array() || bm.empty() || !bm[0].is_array()) {
      throw ParseError("problem.regression.basis_matrix: expected rows of numbers");
    }
    Eigen::MatrixXd A(bm.size(), bm[0].size());
    for (size_t r = 0; r < bm.size(); ++r) {
      if (bm[r].size() != bm[0].size()) {
        throw ParseError("problem.regression.basis_matrix: ragged rows");
      }
      for (size_t c = 0; c < bm[r].size(); ++c) {
        A(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            detail::as_number(bm[r][c], "problem.regression.basis_matrix[" +
                                            std::to_string(r) + "][" +
                                            std::to_string(c) + "]");
      }
    }
    p.basis_matrix = std::move(A);
  }

  if (j.contains("criterion")) {
    p.criterion = criteria::criterion_from_string(
        detail::as_string(j["criterion"], "problem.criterion"));
  }
  if (j.contains("delta")) {
    p.delta = detail::as_int(j["delta"], "problem.delta");
    if (p.delta < 0) throw ParseError("problem.delta: must be nonnegative");
  }

  if (j.contains("recovery")) {
    const json& rec = j["recovery"];
    const std::string where = "problem.recovery";
    detail::reject_unknown(rec, where,
                           {"method", "r", "r_cap", "rank_tol",
                            "membership_tol", "objective"});
    if (rec.contains("method")) {
      p.recovery.method = recovery::method_from_string(
          detail::as_string(rec["method"], where + ".method"));
    }
    if (rec.contains("r")) {
      p.recovery.r = detail::as_int(rec["r"], where + ".r");
      if (p.recovery.r < 1) throw ParseError(where + ".r: must be at least 1");
    }
    if (rec.contains("r_cap")) {
      p.recovery.r_cap = detail::as_int(rec["r_cap"], where + ".r_cap");
      if (p.recovery.r_cap < p.recovery.r) {
        throw ParseError(where + ".r_cap: must be at least r");
      }
    }
    if (rec.contains("rank_tol")) {
      p.recovery.rank_tol = detail::as_number(rec["rank_tol"], where + ".rank_tol");
    }
    if (rec.contains("membership_tol")) {
      p.recovery.membership_tol =
          detail::as_number(rec["membership_tol"], where + ".membership_tol");
    }
    if (rec.contains("objective")) {
      p.recovery.objective =
          parse_polynomial(rec["objective"], p.space.n, where + ".objective");
    }
  }

  if (j.contains("fixed_moments")) {
    const json& fm = j["fixed_moments"];
    if (!fm.is_array()) {
      throw ParseError("problem.fixed_moments: expected an array");
    }
    for (size_t t = 0; t < fm.size(); ++t) {
      const std::string here = "problem.fixed_moments[" + std::to_string(t) + "]";
      detail::reject_unknown(fm[t], here, {"exponents", "value"});
      const json& ex = detail::field(fm[t], "exponents", here);
      if (!ex.is_array() || static_cast<int>(ex.size()) != p.space.n) {
        throw ParseError(here + ".exponents: expected an array of " +
                         std::to_string(p.space.n) + " entries");
      }
      polybasis::Exponents alpha;
      for (size_t i = 0; i < ex.size(); ++i) {
        alpha.push_back(detail::as_int(ex[i], here + ".exponents"));
      }
      p.fixed_moments.emplace_back(
          std::move(alpha),
          detail::as_number(detail::field(fm[t], "value", here), here + ".value"));
    }
  }

  if (j.contains("seed")) {
    const json& s = j["seed"];
    if (!s.is_number_integer() || s.get<std::int64_t>() < 0) {
      throw ParseError("problem.seed: expected a nonnegative integer");
    }
    p.seed = s.get<std::uint64_t>();
  }
  p.recovery.seed = p.seed;
  if (j.contains("out")) p.out = detail::as_string(j["out"], "problem.out");
  return p;
}

inline json problem_to_json(const ProblemFile& p) {
  json j;
  j["schema_version"] = kSchemaVersion;
  if (!p.space_name.empty()) {
    j["design_space"] = p.space_name;
  } else {
    json space;
    space["n"] = p.space.n;
    json ineqs = json::array();
    for (const auto& g : p.space.inequalities) ineqs.push_back(polynomial_to_json(g));
    space["inequalities"] = std::move(ineqs);
    if (p.radius_hint) space["radius_hint"] = *p.radius_hint;
    j["design_space"] = std::move(space);
  }
  j["regression"]["d"] = p.d;
  if (p.basis_matrix) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < p.basis_matrix->rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < p.basis_matrix->cols(); ++c) {
        row.push_back((*p.basis_matrix)(r, c));
      }
      rows.push_back(std::move(row));
    }
    j["regression"]["basis_matrix"] = std::move(rows);
  }
  j["criterion"] = criteria::to_string(p.criterion);
  j["delta"] = p.delta;
  j["recovery"]["method"] = recovery::to_string(p.recovery.method);
  j["recovery"]["r"] = p.recovery.r;
  j["recovery"]["r_cap"] = p.recovery.r_cap;
  j["recovery"]["rank_tol"] = p.recovery.rank_tol;
  j["recovery"]["membership_tol"] = p.recovery.membership_tol;
  if (p.recovery.objective) {
    j["recovery"]["objective"] = polynomial_to_json(*p.recovery.objective);
  }
  if (!p.fixed_moments.empty()) {
    json fm = json::array();
    for (const auto& [alpha, value] : p.fixed_moments) {
      fm.push_back({{"exponents", alpha}, {"value", value}});
    }
    j["fixed_moments"] = std::move(fm);
  }
  j["seed"] = p.seed;
  if (!p.out.empty()) j["out"] = p.out;
  return j;
}

inline ProblemFile load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open problem file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("problem file '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_problem(j);
}

/// Built-in problems matching the bundled golden designs.
inline ProblemFile preset_problem(const std::string& name) {
  ProblemFile p;
  p.space_name = name;
  p.space = semialg::preset(name);
  p.criterion = criteria::Criterion::D;
  if (name == "interval") {
    p.d = 5;
    p.delta = 0;
    p.recovery.r = 1;
  } else if (name == "sphere3d") {
    p.d = 1;
    p.delta = 1;
    p.recovery.r = 2;
    p.recovery.membership_tol = 1e-5;
    // The moment-matching face is a family of designs; penalizing the
    // mixed fourth moments pins the axis-supported member.
    polybasis::Polynomial axis(3);
    axis.add_term({0, 0, 0}, 1.0);
    axis.add_term({2, 2, 0}, 1.0);
    axis.add_term({2, 0, 2}, 1.0);
    axis.add_term({0, 2, 2}, 1.0);
    p.recovery.objective = std::move(axis);
  } else {
    // Planar regions: degree-1 regression with a deep lift, as in the
    // reference runs behind the golden table.
    p.d = 1;
    p.delta = 3;
    p.recovery.r = 3;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Pipeline.

enum class Stage { Solve, Recover, Certify, LevelSet, Pipeline };

inline Stage stage_from_string(const std::string& s) {
  if (s == "solve") return Stage::Solve;
  if (s == "recover") return Stage::Recover;
  if (s == "certify") return Stage::Certify;
  if (s == "levelset") return Stage::LevelSet;
  if (s == "pipeline") return Stage::Pipeline;
  throw ParseError("unknown stage '" + s + "'");
}

struct PipelineResult {
  ProblemFile problem;
  std::optional<designsolve::SolveResult> solve;
  std::optional<recovery::Design> design;
  std::optional<certify::CertificateReport> report;
  std::optional<certify::LevelSetGrid> grid;
  double solve_seconds = 0.0;
  double recover_seconds = 0.0;
  double certify_seconds = 0.0;
  double total_seconds = 0.0;
  int exit_code = kExitOk;
  std::string error_code;
  std::string error_message;
};

inline PipelineResult run_pipeline(const ProblemFile& problem, Stage stage,
                                   int levelset_resolution = 201,
                                   const conic::SolveOptions& opts = {}) {
  using clock = std::chrono::steady_clock;
  const auto since = [](clock::time_point t0) {
    return std::chrono::duration<double>(clock::now() - t0).count();
  };
  PipelineResult res;
  res.problem = problem;
  const auto t_start = clock::now();
  auto fail = [&](const std::string& code, const std::string& message,
                  int exit_code) -> PipelineResult& {
    res.exit_code = exit_code;
    res.error_code = code;
    res.error_message = message;
    res.total_seconds = since(t_start);
    return res;
  };

  designsolve::RelaxationConfig cfg;
  cfg.d = problem.d;
  cfg.delta = problem.delta;
  cfg.criterion = problem.criterion;
  cfg.fixed_moments = problem.fixed_moments;
  try {
    if (problem.basis_matrix) {
      cfg.basis = polybasis::RegressionBasis::from_matrix(*problem.basis_matrix);
    }
    const auto set = semialg::validate_archimedean(problem.space, problem.radius_hint);
    const auto t0 = clock::now();
    res.solve = designsolve::solve_design(set, cfg, opts);
    res.solve_seconds = since(t0);
  } catch (const Error& e) {
    return fail(e.code(), e.what(), kExitError);
  }
  if (res.solve->status != conic::SolveStatus::Optimal) {
    return fail("SolverNotOptimal",
                "relaxation ended " + conic::to_string(res.solve->status) + ": " +
                    res.solve->conic.message,
                kExitError);
  }

  if (stage == Stage::LevelSet) {
    try {
      res.grid = certify::levelset_grid(res.solve->y_star, res.solve->relaxation.set,
                                        res.solve->relaxation.basis,
                                        problem.criterion, levelset_resolution);
    } catch (const Error& e) {
      return fail(e.code(), e.what(), kExitError);
    }
    res.total_seconds = since(t_start);
    return res;
  }

  if (stage != Stage::Solve) {
    const auto t0 = clock::now();
    try {
      res.design = recovery::recover_design(*res.solve, problem.recovery, opts);
    } catch (const Error& e) {
      res.recover_seconds = since(t0);
      return fail(e.code(), e.what(), kExitRankNotSatisfied);
    }
    res.recover_seconds = since(t0);
  }

  if (stage == Stage::Certify || stage == Stage::Pipeline) {
    const auto t0 = clock::now();
    try {
      res.report = certify::check_design(
          res.solve->y_star, *res.design, res.solve->relaxation.set,
          res.solve->relaxation.basis, problem.criterion, 2048, problem.seed);
    } catch (const Error& e) {
      res.certify_seconds = since(t0);
      return fail(e.code(), e.what(), kExitError);
    }
    res.certify_seconds = since(t0);
    if (!res.report->passed) {
      const bool rank_trouble = !res.design->flat;
      return fail("CertificationFailed",
                  rank_trouble
                      ? "equivalence check failed on a non-flat recovery"
                      : "equivalence check failed",
                  rank_trouble ? kExitRankNotSatisfied : kExitError);
    }
  }
  res.total_seconds = since(t_start);
  return res;
}

// ---------------------------------------------------------------------------
// Result serialization.

namespace detail {

inline json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    out.push_back(vector_to_json(m.row(r).transpose()));
  }
  return out;
}

}  // namespace detail

inline json result_to_json(const PipelineResult& res) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["problem"] = problem_to_json(res.problem);
  if (res.solve) {
    const auto& rs = *res.solve;
    json s;
    s["status"] = conic::to_string(rs.status);
    s["rho_delta"] = rs.rho_delta;
    s["num_moments"] = rs.relaxation.num_moments;
    s["y_lifted"] = detail::vector_to_json(rs.y_lifted.values);
    s["y_star"] = detail::vector_to_json(rs.y_star.values);
    s["info_matrix"] = detail::matrix_to_json(rs.info_matrix);
    s["iterations"] = rs.conic.iterations;
    j["solve"] = std::move(s);
  }
  if (res.design) {
    const auto& d = *res.design;
    json points = json::array();
    for (const auto& x : d.points) points.push_back(detail::vector_to_json(x));
    json dd;
    dd["points"] = std::move(points);
    dd["weights"] = detail::vector_to_json(d.weights);
    dd["residual"] = d.extraction_residual;
    dd["ranks"] = {d.rank_high, d.rank_low};
    dd["flat"] = d.flat;
    dd["method"] = recovery::to_string(d.method);
    dd["r"] = d.r_used;
    dd["moment_residual"] = d.moment_residual;
    dd["lift_objective"] = d.lift_objective;
    j["design"] = std::move(dd);
  }
  if (res.report) {
    const auto& r = *res.report;
    json c;
    c["lambda_star"] = r.lambda_star;
    c["min_pstar_on_samples"] = r.min_pstar_on_samples;
    c["argmin"] = detail::vector_to_json(r.argmin);
    c["riesz_pstar"] = r.riesz_pstar;
    c["atom_values"] = r.atom_values;
    c["passed"] = r.passed;
    c["sample_count"] = r.sample_count;
    c["evidence"] = r.evidence;
    c["multiplicity_warning"] = r.multiplicity_warning;
    c["tolerances"] = {{"neg", r.tolerances.neg},
                       {"riesz", r.tolerances.riesz},
                       {"atom", r.tolerances.atom}};
    j["certificate"] = std::move(c);
  }
  if (res.grid) {
    j["levelset"] = {{"resolution", res.grid->resolution},
                     {"nodes", res.grid->points.size()}};
  }
  j["timing"] = {{"solve_s", res.solve_seconds},
                 {"recover_s", res.recover_seconds},
                 {"certify_s", res.certify_seconds},
                 {"total_s", res.total_seconds}};
  j["exit_code"] = res.exit_code;
  if (!res.error_code.empty()) {
    j["error"] = {{"code", res.error_code}, {"message", res.error_message}};
  }
  return j;
}

/// Linear SDP data of the relaxation for external solvers or debugging.
inline json sdp_to_json(const conic::ConicProgram& prog) {
  json j;
  j["num_vars"] = prog.num_vars;
  j["maximize"] = true;
  j["c"] = detail::vector_to_json(prog.c);
  j["logdet_tau"] = prog.tau;
  json blocks = json::array();
  for (const auto& blk : prog.blocks) {
    json b;
    b["dim"] = blk.dim;
    b["constant"] = detail::matrix_to_json(blk.constant);
    json entries = json::array();
    for (size_t v = 0; v < blk.coeff.size(); ++v) {
      for (const auto& e : blk.coeff[v]) {
        entries.push_back({{"var", v}, {"row", e.row}, {"col", e.col},
                           {"value", e.value}});
      }
    }
    b["entries"] = std::move(entries);
    blocks.push_back(std::move(b));
  }
  j["blocks"] = std::move(blocks);
  j["A"] = detail::matrix_to_json(prog.A);
  j["b"] = detail::vector_to_json(prog.b);
  return j;
}

// ---------------------------------------------------------------------------
// Golden designs for --check.

struct Golden {
  std::vector<std::vector<double>> points;
  std::vector<double> weights;
};

/// Reference designs for the bundled presets, keyed by (preset, d). The
/// planar tables are printed to two (coordinates) and three (weights)
/// decimals, well inside the 5e-3 check tolerance.
inline std::optional<Golden> golden_design(const std::string& preset, int d) {
  if (preset == "interval" && d == 5) {
    const double a = 0.2852315164806451;
    const double b = 0.7650553239294647;
    const double w = 1.0 / 6.0;
    return Golden{{{-1.0}, {-b}, {-a}, {a}, {b}, {1.0}}, {w, w, w, w, w, w}};
  }
  if (preset == "sphere3d" && d == 1) {
    const double w = 1.0 / 6.0;
    return Golden{{{-1, 0, 0}, {0, -1, 0}, {0, 0, -1}, {0, 0, 1}, {0, 1, 0},
                   {1, 0, 0}},
                  {w, w, w, w, w, w}};
  }
  if (preset == "wynn_polygon") {
    if (d == 1) {
      return Golden{{{-0.35, -0.35}, {-0.35, 0.35}, {0.35, -0.35}, {0.71, 0.71}},
                    {0.125, 0.281, 0.281, 0.313}};
    }
    if (d == 2) {
      return Golden{{{-0.35, -0.35},
                     {-0.35, 0.35},
                     {0.12, 0.12},
                     {0.35, -0.35},
                     {0.18, 0.53},
                     {0.53, 0.18},
                     {0.71, 0.71}},
                    {0.163, 0.165, 0.066, 0.165, 0.141, 0.141, 0.159}};
    }
    if (d == 3) {
      return Golden{{{-0.35, -0.35},
                     {0.02, -0.35},
                     {-0.35, 0.02},
                     {0.35, -0.35},
                     {0.14, -0.12},
                     {-0.12, 0.14},
                     {-0.35, 0.35},
                     {0.45, -0.06},
                     {-0.06, 0.45},
                     {0.39, 0.39},
                     {0.61, 0.41},
                     {0.41, 0.61},
                     {0.71, 0.71}},
                    {0.095, 0.074, 0.074, 0.096, 0.044, 0.044, 0.097, 0.088,
                     0.088, 0.037, 0.084, 0.084, 0.097}};
    }
  }
  if (preset == "ellipse_ring") {
    if (d == 1) {
      return Golden{
          {{-0.00, -0.75}, {-0.90, -0.00}, {0.90, 0.00}, {0.00, 0.75}},
          {0.250, 0.250, 0.250, 0.250}};
    }
    if (d == 2) {
      return Golden{{{-0.45, -0.65},
                     {-0.90, -0.00},
                     {-0.00, -0.39},
                     {0.45, -0.65},
                     {-0.45, 0.65},
                     {0.00, 0.39},
                     {0.90, 0.00},
                     {0.45, 0.65}},
                    {0.134, 0.139, 0.093, 0.134, 0.134, 0.093, 0.139, 0.134}};
    }
    if (d == 3) {
      return Golden{{{-0.64, -0.53},
                     {-0.90, 0.00},
                     {-0.00, -0.75},
                     {-0.36, -0.32},
                     {0.00, -0.39},
                     {-0.64, 0.53},
                     {-0.36, 0.32},
                     {0.36, -0.32},
                     {0.64, -0.53},
                     {-0.00, 0.39},
                     {0.36, 0.32},
                     {-0.00, 0.75},
                     {0.90, -0.00},
                     {0.64, 0.53}},
                    {0.085, 0.088, 0.088, 0.075, 0.005, 0.085, 0.075, 0.075,
                     0.085, 0.005, 0.075, 0.088, 0.088, 0.085}};
    }
  }
  if (preset == "moon") {
    if (d == 1) {
      return Golden{{{-0.80, 0.00},
                     {0.07, -0.53},
                     {0.07, 0.53},
                     {0.33, -0.29},
                     {0.33, 0.29}},
                    {0.329, 0.305, 0.305, 0.031, 0.031}};
    }
    if (d == 2) {
      return Golden{{{-0.39, -0.57},
                     {-0.80, 0.00},
                     {-0.20, -0.00},
                     {0.29, -0.35},
                     {-0.39, 0.57},
                     {0.29, 0.35}},
                    {0.167, 0.167, 0.167, 0.167, 0.167, 0.167}};
    }
    if (d == 3) {
      return Golden{{{-0.57, -0.47},
                     {-0.08, -0.59},
                     {-0.80, 0.00},
                     {-0.45, -0.18},
                     {-0.11, -0.30},
                     {-0.45, 0.18},
                     {0.33, -0.29},
                     {-0.57, 0.47},
                     {0.11, -0.00},
                     {-0.11, 0.30},
                     {-0.08, 0.59},
                     {0.33, 0.29}},
                    {0.099, 0.098, 0.100, 0.061, 0.062, 0.061, 0.099, 0.099,
                     0.063, 0.062, 0.098, 0.099}};
    }
  }
  if (preset == "folium") {
    if (d == 1) {
      return Golden{{{0.29, -0.55}, {-1.00, 0.00}, {0.29, 0.55}},
                    {0.333, 0.333, 0.333}};
    }
    if (d == 2) {
      return Golden{{{-1.00, 0.00},
                     {-0.60, -0.21},
                     {-0.60, 0.21},
                     {0.28, -0.56},
                     {0.21, -0.20},
                     {0.21, 0.20},
                     {0.28, 0.56}},
                    {0.167, 0.166, 0.166, 0.162, 0.088, 0.088, 0.162}};
    }
    if (d == 3) {
      return Golden{{{-1.00, -0.00},
                     {-0.77, -0.20},
                     {-0.77, 0.20},
                     {-0.45, 0.00},
                     {-0.14, -0.00},
                     {0.10, -0.41},
                     {0.29, -0.56},
                     {0.31, -0.35},
                     {0.10, 0.41},
                     {0.31, 0.35},
                     {0.29, 0.56}},
                    {0.100, 0.099, 0.099, 0.077, 0.033, 0.098, 0.099, 0.100,
                     0.098, 0.100, 0.099}};
    }
  }
  return std::nullopt;
}

/// Greedy nearest matching between computed and reference atoms; returns a
/// description of the first violation, or nullopt when everything is within
/// the per-coordinate and per-weight tolerance.
inline std::optional<std::string> golden_mismatch(const recovery::Design& design,
                                                  const Golden& golden,
                                                  double tol = 5e-3) {
  if (design.points.size() != golden.points.size()) {
    return "expected " + std::to_string(golden.points.size()) + " atoms, got " +
           std::to_string(design.points.size());
  }
  const size_t m = golden.points.size();
  std::vector<std::tuple<double, size_t, size_t>> dist;
  for (size_t g = 0; g < m; ++g) {
    for (size_t c = 0; c < m; ++c) {
      double dmax = 0.0;
      for (int i = 0; i < design.points[c].size(); ++i) {
        dmax = std::max(dmax, std::abs(design.points[c][i] -
                                       golden.points[g][static_cast<size_t>(i)]));
      }
      dist.emplace_back(dmax, g, c);
    }
  }
  std::sort(dist.begin(), dist.end());
  std::vector<int> golden_match(m, -1);
  std::vector<bool> used(m, false);
  for (const auto& [dmax, g, c] : dist) {
    if (golden_match[g] >= 0 || used[c]) continue;
    golden_match[g] = static_cast<int>(c);
    used[c] = true;
  }
  for (size_t g = 0; g < m; ++g) {
    const size_t c = static_cast<size_t>(golden_match[g]);
    for (int i = 0; i < design.points[c].size(); ++i) {
      const double diff =
          std::abs(design.points[c][i] - golden.points[g][static_cast<size_t>(i)]);
      if (diff > tol) {
        std::ostringstream os;
        os << "atom " << g << " coordinate " << i << " off by " << diff;
        return os.str();
      }
    }
    const double wdiff = std::abs(design.weights[static_cast<Eigen::Index>(c)] -
                                  golden.weights[g]);
    if (wdiff > tol) {
      std::ostringstream os;
      os << "atom " << g << " weight off by " << wdiff;
      return os.str();
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Front end.

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"approximate optimal designs for polynomial regression"};
  app.require_subcommand(1);

  std::string problem_path, preset_name, out_dir;
  bool check = false, dump_sdp = false;
  std::int64_t seed_override = -1;
  int resolution = 201;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--problem", problem_path, "problem JSON file");
    sub->add_option("--preset", preset_name, "built-in problem name");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_flag("--check", check, "diff the design against the golden table");
    sub->add_flag("--dump-sdp", dump_sdp, "write the relaxation SDP data");
    sub->add_option("--seed", seed_override, "override the problem seed");
    return sub;
  };
  add_common(app.add_subcommand("solve", "solve the moment relaxation"));
  add_common(app.add_subcommand("recover", "solve and extract the design"));
  add_common(app.add_subcommand("certify", "solve, recover and certify"));
  add_common(app.add_subcommand("levelset", "export a p* grid"))
      ->add_option("--resolution", resolution, "grid nodes per axis");
  add_common(app.add_subcommand("pipeline", "full run: solve, recover, certify"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  auto emit = [&](const PipelineResult& res,
                  const json& extra_files = json::object()) {
    json out = result_to_json(res);
    for (const auto& [key, value] : extra_files.items()) out[key] = value;
    std::cout << out.dump(2) << "\n";
  };

  PipelineResult res;
  try {
    if (problem_path.empty() == preset_name.empty()) {
      throw ParseError("exactly one of --problem and --preset is required");
    }
    ProblemFile problem = problem_path.empty() ? preset_problem(preset_name)
                                               : load_problem(problem_path);
    if (seed_override >= 0) {
      problem.seed = static_cast<std::uint64_t>(seed_override);
      problem.recovery.seed = problem.seed;
    }
    if (!out_dir.empty()) problem.out = out_dir;
    const Stage stage = stage_from_string(app.get_subcommands().front()->get_name());

    res = run_pipeline(problem, stage, resolution);

    if (check && res.exit_code == kExitOk && res.design) {
      const auto golden = golden_design(problem.space_name, problem.d);
      if (!golden) {
        res.exit_code = kExitError;
        res.error_code = "NoGoldenDesign";
        res.error_message = "no golden design for '" + problem.space_name +
                            "' at d=" + std::to_string(problem.d);
      } else if (auto diff = golden_mismatch(*res.design, *golden)) {
        res.exit_code = kExitError;
        res.error_code = "GoldenMismatch";
        res.error_message = *diff;
      }
    }

    json files = json::object();
    if (!problem.out.empty()) {
      const std::filesystem::path dir(problem.out);
      std::filesystem::create_directories(dir);
      detail::write_text(dir / "problem.json", problem_to_json(problem).dump(2) + "\n");
      detail::write_text(dir / "result.json", result_to_json(res).dump(2) + "\n");
      files["files"] = {{"problem", (dir / "problem.json").string()},
                        {"result", (dir / "result.json").string()}};
      if (res.grid) {
        std::ofstream csv(dir / "levelset.csv");
        certify::write_levelset_csv(*res.grid, csv);
        files["files"]["levelset"] = (dir / "levelset.csv").string();
      }
      if (dump_sdp && res.solve) {
        detail::write_text(dir / "sdp.json",
                           sdp_to_json(res.solve->relaxation.program).dump(2) + "\n");
        files["files"]["sdp"] = (dir / "sdp.json").string();
      }
    }
    emit(res, files);
    return res.exit_code;
  } catch (const Error& e) {
    res.exit_code = kExitError;
    res.error_code = e.code();
    res.error_message = e.what();
    emit(res);
    return kExitError;
  }
}

}  // namespace polydes::cli
