#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "polydes/designsolve.hpp"

using namespace polydes;
using Catch::Approx;

namespace {

semialg::SemiAlgebraicSet interval() { return semialg::preset("interval"); }

}  // namespace

TEST_CASE("quintic design on the interval matches the Gauss-Lobatto optimum",
          "[designsolve]") {
  // The degree-5 D-optimal design on [-1, 1] puts weight 1/6 on +-1 and on
  // the four stationary points of the degree-5 Legendre polynomial.
  const auto support = oracles::lobatto_support(5);
  REQUIRE(support.size() == 6);
  std::vector<Eigen::VectorXd> pts;
  for (double t : support) {
    Eigen::VectorXd x(1);
    x << t;
    pts.push_back(x);
  }
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(6, 1.0 / 6.0);
  const auto y_oracle = moments::MomentSequence::from_design(pts, w, 10);

  designsolve::RelaxationConfig cfg;
  cfg.d = 5;
  cfg.delta = 0;
  cfg.criterion = criteria::Criterion::D;
  auto rs = designsolve::solve_design(interval(), cfg);
  REQUIRE(rs.status == conic::SolveStatus::Optimal);
  CHECK((rs.y_star.values - y_oracle.values).cwiseAbs().maxCoeff() < 1e-5);

  criteria::InformationMatrix m;
  m.entries = criteria::information_matrix(y_oracle, rs.relaxation.basis, 5).entries;
  CHECK(rs.rho_delta == Approx(criteria::phi(m, criteria::Criterion::D)).margin(1e-7));
}

TEST_CASE("quadratic designs on the interval for all criteria", "[designsolve]") {
  designsolve::RelaxationConfig cfg;
  cfg.d = 2;
  cfg.delta = 1;

  SECTION("D: equal thirds on {-1, 0, 1}") {
    cfg.criterion = criteria::Criterion::D;
    auto rs = designsolve::solve_design(interval(), cfg);
    REQUIRE(rs.status == conic::SolveStatus::Optimal);
    CHECK(rs.y_star.value({1}) == Approx(0.0).margin(1e-5));
    CHECK(rs.y_star.value({2}) == Approx(2.0 / 3.0).margin(1e-5));
    CHECK(rs.y_star.value({3}) == Approx(0.0).margin(1e-5));
    CHECK(rs.y_star.value({4}) == Approx(2.0 / 3.0).margin(1e-5));
    CHECK(rs.rho_delta == Approx(std::cbrt(4.0 / 27.0)).margin(1e-6));
    // c = 0 for the log-det form, so the conic objective is logdet(M).
    CHECK(std::exp(rs.conic.primal_obj / 3.0) ==
          Approx(rs.rho_delta).margin(1e-9));
  }
  SECTION("A: weights (1/4, 1/2, 1/4) on {-1, 0, 1}") {
    cfg.criterion = criteria::Criterion::A;
    auto rs = designsolve::solve_design(interval(), cfg);
    REQUIRE(rs.status == conic::SolveStatus::Optimal);
    CHECK(rs.y_star.value({2}) == Approx(0.5).margin(1e-5));
    CHECK(rs.y_star.value({4}) == Approx(0.5).margin(1e-5));
    CHECK(rs.rho_delta == Approx(3.0 / 8.0).margin(1e-6));
    CHECK(rs.conic.primal_obj == Approx(-8.0).margin(1e-5));
  }
  SECTION("E: weights (1/5, 3/5, 1/5) on {-1, 0, 1}") {
    cfg.criterion = criteria::Criterion::E;
    auto rs = designsolve::solve_design(interval(), cfg);
    REQUIRE(rs.status == conic::SolveStatus::Optimal);
    CHECK(rs.y_star.value({2}) == Approx(0.4).margin(1e-5));
    CHECK(rs.y_star.value({4}) == Approx(0.4).margin(1e-5));
    CHECK(rs.rho_delta == Approx(0.2).margin(1e-6));
    CHECK(rs.conic.primal_obj == Approx(0.2).margin(1e-7));
  }
}

TEST_CASE("sphere design reduces to the uniform diagonal", "[designsolve]") {
  const auto sphere = semialg::preset("sphere3d");
  designsolve::RelaxationConfig cfg;
  cfg.d = 1;
  cfg.criterion = criteria::Criterion::D;

  for (int delta : {0, 1}) {
    cfg.delta = delta;
    auto rs = designsolve::solve_design(sphere, cfg);
    REQUIRE(rs.status == conic::SolveStatus::Optimal);
    CHECK(rs.y_star.value({2, 0, 0}) == Approx(1.0 / 3.0).margin(1e-6));
    CHECK(rs.y_star.value({0, 2, 0}) == Approx(1.0 / 3.0).margin(1e-6));
    CHECK(rs.y_star.value({0, 0, 2}) == Approx(1.0 / 3.0).margin(1e-6));
    CHECK(rs.y_star.value({1, 1, 0}) == Approx(0.0).margin(1e-6));
    CHECK(rs.rho_delta ==
          Approx(std::pow(1.0 / 27.0, 0.25)).margin(1e-6));
  }
}

TEST_CASE("singleton variety forces the Dirac moment sequence", "[designsolve]") {
  semialg::SemiAlgebraicSet set;
  set.n = 1;
  const auto x = polybasis::Polynomial::variable(1, 0);
  const auto one = polybasis::Polynomial::constant(1, 1.0);
  set.inequalities = {x, -x, one - x * x};
  designsolve::RelaxationConfig cfg;
  cfg.d = 1;
  cfg.delta = 1;
  cfg.criterion = criteria::Criterion::E;
  auto rs = designsolve::solve_design(set, cfg);
  REQUIRE(rs.status == conic::SolveStatus::Optimal);
  CHECK(rs.y_star.value({0}) == Approx(1.0).margin(1e-8));
  CHECK(rs.y_star.value({1}) == Approx(0.0).margin(1e-8));
  CHECK(rs.y_star.value({2}) == Approx(0.0).margin(1e-8));
  // Criterion acts on the quotient: the restricted matrix is the scalar 1.
  CHECK(rs.rho_delta == Approx(1.0).margin(1e-7));
  CHECK(rs.relaxation.blocks[0].Q.size() > 0);
}

TEST_CASE("fixed moments pin the stated entries", "[designsolve]") {
  designsolve::RelaxationConfig cfg;
  cfg.d = 1;
  cfg.delta = 1;
  cfg.criterion = criteria::Criterion::D;
  cfg.fixed_moments = {{{2}, 0.5}};
  auto rs = designsolve::solve_design(interval(), cfg);
  REQUIRE(rs.status == conic::SolveStatus::Optimal);
  CHECK(rs.y_star.value({2}) == Approx(0.5).margin(1e-8));
  CHECK(rs.y_star.value({1}) == Approx(0.0).margin(1e-6));
  CHECK(rs.rho_delta == Approx(std::sqrt(0.5)).margin(1e-6));

  auto fixed_rows = 0;
  for (const auto& r : rs.relaxation.rows) {
    if (r.kind == designsolve::RowInfo::Kind::Fixed) ++fixed_rows;
  }
  CHECK(fixed_rows == 1);
}

TEST_CASE("incompatible fixed moments are reported infeasible", "[designsolve]") {
  designsolve::RelaxationConfig cfg;
  cfg.d = 1;
  cfg.delta = 1;
  cfg.criterion = criteria::Criterion::D;
  cfg.fixed_moments = {{{2, 0, 0}, 2.0}};
  auto rs = designsolve::solve_design(semialg::preset("sphere3d"), cfg);
  CHECK(rs.status == conic::SolveStatus::Infeasible);
}

TEST_CASE("hierarchy values are nonincreasing in delta", "[designsolve]") {
  designsolve::RelaxationConfig cfg;
  cfg.d = 3;
  cfg.criterion = criteria::Criterion::D;
  auto sweep = designsolve::hierarchy_sweep(interval(), cfg, 0, 2);
  REQUIRE(sweep.size() == 3);
  for (const auto& e : sweep) {
    CHECK(e.status == conic::SolveStatus::Optimal);
    CHECK(e.rho > 0.0);
  }
  CHECK(sweep[1].rho <= sweep[0].rho + 1e-7);
  CHECK(sweep[2].rho <= sweep[1].rho + 1e-7);
}

TEST_CASE("moments of a design on the unit ball stay bounded by the mass",
          "[designsolve]") {
  designsolve::RelaxationConfig cfg;
  cfg.d = 2;
  cfg.delta = 1;
  cfg.criterion = criteria::Criterion::D;
  auto rs = designsolve::solve_design(semialg::preset("wynn_polygon"), cfg);
  REQUIRE(rs.status == conic::SolveStatus::Optimal);
  CHECK(rs.y_lifted.values.cwiseAbs().maxCoeff() <= 1.0 + 1e-6);
  CHECK(rs.y_lifted.values[0] == Approx(1.0).margin(1e-9));
}

TEST_CASE("relaxation order must cover the inequality degrees", "[designsolve]") {
  designsolve::RelaxationConfig cfg;
  cfg.d = 1;
  cfg.delta = 0;
  CHECK_THROWS_AS(designsolve::build_relaxation(semialg::preset("folium"), cfg),
                  DimensionMismatch);
}
