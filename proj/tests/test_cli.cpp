#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "polydes/cli.hpp"

using namespace polydes;
using Catch::Approx;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("polydes_test_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

/// Runs the CLI in-process with stdout captured; returns the exit code.
int run(const std::vector<std::string>& args, std::string* captured = nullptr) {
  std::vector<std::string> words{"polydes"};
  words.insert(words.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& w : words) argv.push_back(w.c_str());
  std::ostringstream buffer;
  std::streambuf* old = std::cout.rdbuf(buffer.rdbuf());
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old);
  if (captured) *captured = buffer.str();
  return code;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  json j;
  in >> j;
  return j;
}

std::string parse_failure(const json& j) {
  try {
    cli::parse_problem(j);
  } catch (const ParseError& e) {
    return e.what();
  }
  return {};
}

json full_problem_json() {
  json space;
  space["n"] = 2;
  space["inequalities"] = json::array();
  json g = json::array();
  g.push_back({{"exponents", {0, 0}}, {"coefficient", 1.0}});
  g.push_back({{"exponents", {2, 0}}, {"coefficient", -1.0}});
  g.push_back({{"exponents", {0, 2}}, {"coefficient", -1.0}});
  space["inequalities"].push_back(g);
  space["radius_hint"] = 1.5;

  json j;
  j["schema_version"] = 1;
  j["design_space"] = space;
  j["regression"]["d"] = 2;
  j["regression"]["basis_matrix"] = {{1, 0, 0, 0, 0, 0}, {0, 1, 1, 0, 0, 0},
                                     {0, 0, 0, 1, 0, 1}};
  j["criterion"] = "A";
  j["delta"] = 2;
  j["recovery"] = {{"method", "christoffel-min"},
                   {"r", 2},
                   {"r_cap", 4},
                   {"rank_tol", 1e-5},
                   {"membership_tol", 1e-4},
                   {"objective", json::array({{{"exponents", {2, 2}},
                                               {"coefficient", 0.5}}})}};
  j["fixed_moments"] =
      json::array({{{"exponents", {2, 0}}, {"value", 0.25}}});
  j["seed"] = 11;
  j["out"] = "scratch";
  return j;
}

}  // namespace

TEST_CASE("problem files round trip through parse and emit", "[cli]") {
  const json j = full_problem_json();
  const cli::ProblemFile p = cli::parse_problem(j);

  CHECK(p.space_name.empty());
  CHECK(p.space.n == 2);
  REQUIRE(p.space.inequalities.size() == 1);
  CHECK(p.space.inequalities[0].terms.size() == 3);
  REQUIRE(p.radius_hint.has_value());
  CHECK(*p.radius_hint == 1.5);
  CHECK(p.d == 2);
  REQUIRE(p.basis_matrix.has_value());
  CHECK(p.basis_matrix->rows() == 3);
  CHECK(p.basis_matrix->cols() == 6);
  CHECK((*p.basis_matrix)(1, 2) == 1.0);
  CHECK(p.criterion == criteria::Criterion::A);
  CHECK(p.delta == 2);
  CHECK(p.recovery.method == recovery::Method::ChristoffelMin);
  CHECK(p.recovery.r == 2);
  CHECK(p.recovery.r_cap == 4);
  CHECK(p.recovery.rank_tol == 1e-5);
  CHECK(p.recovery.membership_tol == 1e-4);
  REQUIRE(p.recovery.objective.has_value());
  CHECK(p.recovery.objective->terms.at({2, 2}) == 0.5);
  REQUIRE(p.fixed_moments.size() == 1);
  CHECK(p.fixed_moments[0].first == polybasis::Exponents{2, 0});
  CHECK(p.fixed_moments[0].second == 0.25);
  CHECK(p.seed == 11);
  CHECK(p.recovery.seed == 11);
  CHECK(p.out == "scratch");

  // Emit -> parse -> emit is a fixed point, so nothing is lost or invented.
  const json emitted = cli::problem_to_json(p);
  const cli::ProblemFile p2 = cli::parse_problem(emitted);
  CHECK(cli::problem_to_json(p2) == emitted);
  CHECK(p2.space.inequalities[0].terms == p.space.inequalities[0].terms);
}

TEST_CASE("parse errors carry the offending path", "[cli]") {
  auto expect = [](json j, const std::string& needle) {
    const std::string msg = parse_failure(j);
    INFO("message: " << msg << " expected to mention: " << needle);
    CHECK(msg.find(needle) != std::string::npos);
  };

  json ok = full_problem_json();

  json j = ok;
  j["bogus"] = 1;
  expect(j, "unknown field 'bogus'");

  j = ok;
  j["design_space"]["inequalities"][0][1]["exponents"] = {2};
  expect(j, "design_space.inequalities[0][1].exponents");

  j = ok;
  j["design_space"]["inequalities"][0][0]["weird"] = 3;
  expect(j, "inequalities[0][0]: unknown field 'weird'");

  j = ok;
  j["recovery"]["verbose"] = true;
  expect(j, "recovery: unknown field 'verbose'");

  j = ok;
  j["recovery"]["method"] = "newton";
  CHECK_THROWS_AS(cli::parse_problem(j), ParseError);

  j = ok;
  j["delta"] = -1;
  expect(j, "delta: must be nonnegative");

  j = ok;
  j["regression"].erase("d");
  expect(j, "regression: missing required field 'd'");

  j = ok;
  j["regression"]["d"] = 0;
  expect(j, "regression.d: must be at least 1");

  j = ok;
  j["schema_version"] = 7;
  expect(j, "schema_version");

  j = ok;
  j["design_space"] = 3.14;
  expect(j, "preset name or an object");

  j = ok;
  j["recovery"]["r_cap"] = 1;
  expect(j, "r_cap: must be at least r");

  j = ok;
  j["fixed_moments"][0]["exponents"] = {1, 2, 3};
  expect(j, "fixed_moments[0].exponents");

  j = ok;
  j["seed"] = -4;
  expect(j, "seed: expected a nonnegative integer");

  j = ok;
  j["regression"]["basis_matrix"] = {{1.0, 0.0}, {0.0}};
  expect(j, "basis_matrix: ragged rows");
}

TEST_CASE("bundled data files parse and presets are configured", "[cli]") {
  const fs::path data(POLYDES_DATA_DIR);
  for (const char* name :
       {"interval.json", "wynn_polygon.json", "sphere3d.json",
        "scaled_interval.json"}) {
    INFO(name);
    CHECK_NOTHROW(cli::load_problem((data / name).string()));
  }

  // The data files mirror the built-in preset configurations.
  const cli::ProblemFile file = cli::load_problem((data / "interval.json").string());
  const cli::ProblemFile preset = cli::preset_problem("interval");
  CHECK(cli::problem_to_json(file) == cli::problem_to_json(preset));
  CHECK(preset.d == 5);
  CHECK(preset.delta == 0);
  CHECK(preset.recovery.r == 1);

  const cli::ProblemFile sphere_file =
      cli::load_problem((data / "sphere3d.json").string());
  const cli::ProblemFile sphere = cli::preset_problem("sphere3d");
  CHECK(cli::problem_to_json(sphere_file) == cli::problem_to_json(sphere));
  REQUIRE(sphere.recovery.objective.has_value());
  CHECK(sphere.recovery.objective->terms.size() == 4);
  CHECK(sphere.recovery.membership_tol == 1e-5);

  const cli::ProblemFile wynn = cli::preset_problem("wynn_polygon");
  CHECK(wynn.d == 1);
  CHECK(wynn.delta == 3);
  CHECK(wynn.recovery.r == 3);

  for (const auto& name : semialg::preset_names()) {
    CHECK_NOTHROW(cli::preset_problem(name));
  }
}

TEST_CASE("pipeline certifies the interval fixture against its golden design",
          "[cli]") {
  const cli::ProblemFile problem = cli::preset_problem("interval");
  const cli::PipelineResult res =
      cli::run_pipeline(problem, cli::Stage::Pipeline);

  REQUIRE(res.exit_code == cli::kExitOk);
  REQUIRE(res.solve.has_value());
  CHECK(res.solve->status == conic::SolveStatus::Optimal);
  REQUIRE(res.design.has_value());
  REQUIRE(res.report.has_value());
  CHECK(res.report->passed);
  CHECK(res.design->points.size() == 6);
  CHECK(res.solve_seconds > 0.0);
  CHECK(res.total_seconds >= res.solve_seconds);

  const auto golden = cli::golden_design("interval", 5);
  REQUIRE(golden.has_value());
  CHECK_FALSE(cli::golden_mismatch(*res.design, *golden).has_value());

  // A perturbation past the tolerance is flagged with its location.
  recovery::Design off = *res.design;
  off.points[2][0] += 8e-3;
  const auto diff = cli::golden_mismatch(off, *golden);
  REQUIRE(diff.has_value());
  CHECK(diff->find("coordinate") != std::string::npos);

  recovery::Design wrong_count = *res.design;
  wrong_count.points.pop_back();
  const auto count_diff = cli::golden_mismatch(wrong_count, *golden);
  REQUIRE(count_diff.has_value());
  CHECK(count_diff->find("expected 6 atoms") != std::string::npos);
}

TEST_CASE("golden matching is order free and weight sensitive", "[cli]") {
  cli::Golden golden{{{-1.0, 0.5}, {0.25, -0.75}}, {0.4, 0.6}};
  recovery::Design design;
  Eigen::VectorXd a(2), b(2);
  a << 0.251, -0.748;
  b << -0.999, 0.502;
  design.points = {a, b};
  design.weights = Eigen::VectorXd(2);
  design.weights << 0.602, 0.398;
  CHECK_FALSE(cli::golden_mismatch(design, golden).has_value());

  design.weights << 0.61, 0.39;
  const auto diff = cli::golden_mismatch(design, golden);
  REQUIRE(diff.has_value());
  CHECK(diff->find("weight") != std::string::npos);
}

TEST_CASE("run_cli writes problem, result and sdp files", "[cli]") {
  TempDir tmp("files");
  std::string stdout_text;
  const int code = run({"pipeline", "--preset", "interval", "--check",
                        "--dump-sdp", "--out", tmp.path.string()},
                       &stdout_text);
  REQUIRE(code == 0);

  const json result = read_json(tmp.path / "result.json");
  CHECK(result["exit_code"] == 0);
  CHECK(result["solve"]["status"] == "Optimal");
  CHECK(result["certificate"]["passed"] == true);
  CHECK(result["design"]["points"].size() == 6);
  CHECK(result["design"]["flat"] == true);
  CHECK(result["timing"]["total_s"].get<double>() > 0.0);

  // Moments of the reported design reproduce the solver moments.
  std::vector<Eigen::VectorXd> pts;
  for (const auto& p : result["design"]["points"]) {
    Eigen::VectorXd x(1);
    x << p[0].get<double>();
    pts.push_back(x);
  }
  Eigen::VectorXd w(static_cast<Eigen::Index>(pts.size()));
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    w[i] = result["design"]["weights"][static_cast<size_t>(i)].get<double>();
  }
  const auto y_design = moments::MomentSequence::from_design(pts, w, 10);
  const auto& y_star = result["solve"]["y_star"];
  REQUIRE(y_design.values.size() == static_cast<Eigen::Index>(y_star.size()));
  for (Eigen::Index i = 0; i < y_design.values.size(); ++i) {
    CHECK(y_design.values[i] ==
          Approx(y_star[static_cast<size_t>(i)].get<double>()).margin(1e-5));
  }

  const json problem = read_json(tmp.path / "problem.json");
  CHECK(problem["design_space"] == "interval");
  CHECK(problem["regression"]["d"] == 5);

  const json sdp = read_json(tmp.path / "sdp.json");
  CHECK(sdp["num_vars"].get<int>() > 0);
  CHECK(sdp["blocks"].size() >= 2);
  CHECK(sdp["A"].size() == sdp["b"].size());
  CHECK(sdp["c"].size() == sdp["num_vars"].get<size_t>());

  // Stdout carries the same result payload.
  const json echoed = json::parse(stdout_text);
  CHECK(echoed["exit_code"] == 0);
  CHECK(echoed["solve"]["y_star"] == result["solve"]["y_star"]);
  CHECK(echoed["files"]["sdp"].get<std::string>().find("sdp.json") !=
        std::string::npos);
}

TEST_CASE("run_cli reproduces a run from its own problem echo", "[cli]") {
  TempDir tmp("rerun");
  std::string first_text;
  REQUIRE(run({"pipeline", "--preset", "interval", "--out", tmp.path.string()},
              &first_text) == 0);
  const json first = json::parse(first_text);

  std::string second_text;
  REQUIRE(run({"pipeline", "--problem", (tmp.path / "problem.json").string()},
              &second_text) == 0);
  const json second = json::parse(second_text);

  const auto& y1 = first["solve"]["y_star"];
  const auto& y2 = second["solve"]["y_star"];
  REQUIRE(y1.size() == y2.size());
  for (size_t i = 0; i < y1.size(); ++i) {
    CHECK(y1[i].get<double>() == Approx(y2[i].get<double>()).margin(1e-10));
  }
  CHECK(first["design"]["points"] == second["design"]["points"]);
}

TEST_CASE("run_cli usage and input errors exit with code 1", "[cli]") {
  TempDir tmp("errors");
  std::string text;

  CHECK(run({"pipeline", "--preset", "interval", "--problem", "x.json"},
            &text) == 1);
  CHECK(json::parse(text)["error"]["message"].get<std::string>().find(
            "exactly one") != std::string::npos);

  CHECK(run({"pipeline"}, &text) == 1);
  CHECK(run({"pipeline", "--preset", "dodecahedron"}, &text) == 1);
  CHECK(json::parse(text)["error"]["code"] == "ParseError");
  CHECK(run({"pipeline", "--problem", (tmp.path / "missing.json").string()},
            &text) == 1);

  {
    std::ofstream bad(tmp.path / "bad.json");
    bad << "{ not json";
  }
  CHECK(run({"pipeline", "--problem", (tmp.path / "bad.json").string()},
            &text) == 1);
  CHECK(json::parse(text)["error"]["message"].get<std::string>().find(
            "not valid JSON") != std::string::npos);

  // A set with no compactness certificate is rejected before solving.
  {
    json j;
    j["design_space"] = {
        {"n", 1},
        {"inequalities",
         json::array({json::array(
             {{{"exponents", {1}}, {"coefficient", 1.0}}})})}};
    j["regression"]["d"] = 1;
    std::ofstream out(tmp.path / "open.json");
    out << j.dump();
  }
  CHECK(run({"solve", "--problem", (tmp.path / "open.json").string()},
            &text) == 1);
  CHECK(json::parse(text)["error"]["code"] == "MissingCompactnessCertificate");
}

TEST_CASE("a lift cap below the flat order reports recovery failure", "[cli]") {
  cli::ProblemFile problem = cli::preset_problem("wynn_polygon");
  problem.recovery.r = 1;
  problem.recovery.r_cap = 1;
  const cli::PipelineResult res =
      cli::run_pipeline(problem, cli::Stage::Pipeline);
  CHECK(res.exit_code == cli::kExitRankNotSatisfied);
  CHECK_FALSE(res.error_code.empty());
}

TEST_CASE("levelset stage writes the grid files", "[cli]") {
  TempDir tmp("grid");
  std::string text;
  REQUIRE(run({"levelset", "--preset", "interval", "--resolution", "41",
               "--out", tmp.path.string()},
              &text) == 0);
  const json echoed = json::parse(text);
  CHECK(echoed["levelset"]["nodes"] == 41);

  std::ifstream csv(tmp.path / "levelset.csv");
  REQUIRE(csv.good());
  std::string header;
  std::getline(csv, header);
  CHECK(header == "x1,pstar,inside");
  int rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  CHECK(rows == 41);
}

TEST_CASE("seed override reaches the problem echo", "[cli]") {
  TempDir tmp("seed");
  REQUIRE(run({"recover", "--preset", "interval", "--seed", "7", "--out",
               tmp.path.string()}) == 0);
  const json problem = read_json(tmp.path / "problem.json");
  CHECK(problem["seed"] == 7);
}

TEST_CASE("a rescaled basis matrix shifts the criterion by its determinant",
          "[cli]") {
  // phi_D(A M A^T) = det(A)^(2/p) phi_D(M), so the moments agree and the
  // value picks up exactly the determinant factor.
  json j;
  j["design_space"] = "interval";
  j["regression"]["d"] = 2;
  j["delta"] = 0;
  cli::ProblemFile identity = cli::parse_problem(j);
  j["regression"]["basis_matrix"] = {{2, 0, 0}, {0, 3, 0}, {0, 0, 4}};
  cli::ProblemFile scaled = cli::parse_problem(j);

  const auto res_i = cli::run_pipeline(identity, cli::Stage::Solve);
  const auto res_s = cli::run_pipeline(scaled, cli::Stage::Solve);
  REQUIRE(res_i.exit_code == 0);
  REQUIRE(res_s.exit_code == 0);

  const Eigen::VectorXd yi = res_i.solve->y_star.values;
  const Eigen::VectorXd ys = res_s.solve->y_star.values;
  REQUIRE(yi.size() == ys.size());
  CHECK((yi - ys).cwiseAbs().maxCoeff() < 1e-6);

  const double factor = std::pow(24.0, 2.0 / 3.0);
  CHECK(res_s.solve->rho_delta ==
        Approx(factor * res_i.solve->rho_delta).epsilon(1e-6));
}

TEST_CASE("scaled interval data file runs end to end", "[cli]") {
  const fs::path data(POLYDES_DATA_DIR);
  const cli::ProblemFile problem =
      cli::load_problem((data / "scaled_interval.json").string());
  const auto res = cli::run_pipeline(problem, cli::Stage::Pipeline);
  REQUIRE(res.exit_code == cli::kExitOk);
  REQUIRE(res.report.has_value());
  CHECK(res.report->passed);

  // D-optimal quadratic design on [0, 2]: endpoints and midpoint, equal
  // weights (affine image of the classical [-1, 1] solution).
  REQUIRE(res.design->points.size() == 3);
  std::vector<double> atoms;
  for (const auto& x : res.design->points) atoms.push_back(x[0]);
  std::sort(atoms.begin(), atoms.end());
  CHECK(atoms[0] == Approx(0.0).margin(1e-4));
  CHECK(atoms[1] == Approx(1.0).margin(1e-4));
  CHECK(atoms[2] == Approx(2.0).margin(1e-4));
  for (Eigen::Index i = 0; i < res.design->weights.size(); ++i) {
    CHECK(res.design->weights[i] == Approx(1.0 / 3.0).margin(1e-4));
  }
}
