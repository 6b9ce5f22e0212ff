#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "polydes/polybasis.hpp"

using namespace polydes;
using namespace polydes::polybasis;

namespace {

Eigen::VectorXd random_point(int n, std::mt19937_64& rng, double radius = 1.0) {
  std::uniform_real_distribution<double> u(-radius, radius);
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = u(rng);
  return x;
}

}  // namespace

TEST_CASE("basis_size counts monomials") {
  CHECK(basis_size(1, 5) == 6);
  CHECK(basis_size(3, 1) == 4);
  CHECK(basis_size(3, 2) == 10);
  CHECK(basis_size(2, 8) == 45);
  CHECK(basis_size(2, 0) == 1);
  CHECK_THROWS_AS(basis_size(40, 40), BinomialOverflow);
  CHECK_THROWS_AS(basis_size(0, 3), DimensionMismatch);
}

TEST_CASE("enumerate_monomials graded order") {
  SECTION("two variables, degree 2") {
    const auto& b = enumerate_monomials(2, 2);
    REQUIRE(b.size() == 6);
    CHECK(b.order[0].exponents == Exponents{0, 0});
    CHECK(b.order[1].exponents == Exponents{1, 0});
    CHECK(b.order[2].exponents == Exponents{0, 1});
    CHECK(b.order[3].exponents == Exponents{2, 0});
    CHECK(b.order[4].exponents == Exponents{1, 1});
    CHECK(b.order[5].exponents == Exponents{0, 2});
  }
  SECTION("univariate degree 3") {
    const auto& b = enumerate_monomials(1, 3);
    REQUIRE(b.size() == 4);
    for (int k = 0; k < 4; ++k) CHECK(b.order[k].exponents == Exponents{k});
  }
  SECTION("three variables, degree 1") {
    const auto& b = enumerate_monomials(3, 1);
    REQUIRE(b.size() == 4);
    CHECK(b.order[0].exponents == Exponents{0, 0, 0});
    CHECK(b.order[1].exponents == Exponents{1, 0, 0});
    CHECK(b.order[2].exponents == Exponents{0, 1, 0});
    CHECK(b.order[3].exponents == Exponents{0, 0, 1});
  }
  SECTION("strictly increasing, no duplicates, full count") {
    for (int n = 1; n <= 4; ++n) {
      for (int d = 0; d <= 5; ++d) {
        const auto& b = enumerate_monomials(n, d);
        REQUIRE(b.size() == basis_size(n, d));
        CHECK(b.order.front().degree() == 0);
        for (int k = 1; k < b.size(); ++k) {
          CHECK(graded_lex_less(b.order[k - 1], b.order[k]));
        }
        for (int k = 0; k < b.size(); ++k) CHECK(b.index_of(b.order[k]) == k);
      }
    }
  }
}

TEST_CASE("eval_monomial_vector") {
  SECTION("fixed points") {
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
    Eigen::VectorXd v = eval_monomial_vector(zero, 2);
    REQUIRE(v.size() == 6);
    CHECK(v[0] == 1.0);
    CHECK(v.tail(5).cwiseAbs().maxCoeff() == 0.0);

    Eigen::VectorXd ones = Eigen::VectorXd::Ones(2);
    CHECK(eval_monomial_vector(ones, 2).isApprox(Eigen::VectorXd::Ones(6)));

    Eigen::VectorXd x(2);
    x << 2.0, 3.0;
    Eigen::VectorXd w = eval_monomial_vector(x, 1);
    CHECK(w[0] == 1.0);
    CHECK(w[1] == 2.0);
    CHECK(w[2] == 3.0);
  }
  SECTION("multiplicative across indices") {
    std::mt19937_64 rng(7);
    const int n = 3, d = 4;
    const auto& b = enumerate_monomials(n, d);
    for (int trial = 0; trial < 5; ++trial) {
      Eigen::VectorXd x = random_point(n, rng);
      Eigen::VectorXd v = eval_monomial_vector(x, d);
      for (int i = 0; i < b.size(); ++i) {
        for (int j = i; j < b.size(); ++j) {
          MultiIndex sum = b.order[i] + b.order[j];
          if (sum.degree() > d) continue;
          const double prod = v[i] * v[j];
          const double direct = v[b.index_of(sum)];
          CHECK_THAT(prod, Catch::Matchers::WithinRel(direct, 1e-12) ||
                               Catch::Matchers::WithinAbs(direct, 1e-14));
        }
      }
    }
  }
}

TEST_CASE("polynomial arithmetic and evaluation") {
  // g = 1 - x1^2 - x2^2
  Polynomial g = Polynomial::constant(2, 1.0) -
                 Polynomial::monomial({2, 0}) -
                 Polynomial::monomial({0, 2});
  CHECK(g.degree() == 2);
  CHECK(g.terms.size() == 3);

  std::mt19937_64 rng(11);
  SECTION("evaluation equals term sum over the monomial vector") {
    for (int trial = 0; trial < 10; ++trial) {
      Eigen::VectorXd x = random_point(2, rng);
      Eigen::VectorXd v = eval_monomial_vector(x, g.degree());
      const auto& b = enumerate_monomials(2, g.degree());
      double direct = 0.0;
      for (const auto& [a, c] : g.terms) direct += c * v[b.index_of(a)];
      CHECK_THAT(g.eval(x), Catch::Matchers::WithinAbs(direct, 1e-14));
    }
  }
  SECTION("product matches pointwise multiplication") {
    Polynomial h = Polynomial::variable(2, 0) * 3.0 +
                   Polynomial::monomial({1, 1}, -2.0) +
                   Polynomial::constant(2, 0.5);
    Polynomial prod = g * h;
    CHECK(prod.degree() == 4);
    for (int trial = 0; trial < 10; ++trial) {
      Eigen::VectorXd x = random_point(2, rng);
      CHECK_THAT(prod.eval(x),
                 Catch::Matchers::WithinAbs(g.eval(x) * h.eval(x), 1e-12));
    }
  }
  SECTION("zero coefficients are never stored") {
    Polynomial z = g - g;
    CHECK(z.terms.empty());
    CHECK(z.degree() == 0);
    Polynomial cancel = Polynomial::monomial({1, 0}, 2.0);
    cancel.add_term({1, 0}, -2.0);
    CHECK(cancel.terms.empty());
  }
}

TEST_CASE("regression basis") {
  SECTION("identity basis returns the monomial vector") {
    RegressionBasis id = RegressionBasis::identity(1, 2);
    Eigen::VectorXd x(1);
    x << 0.3;
    CHECK(regression_vector(id, x, 2).isApprox(eval_monomial_vector(x, 2)));
    CHECK(id.is_identity());
  }
  SECTION("single-row constant regressor") {
    Eigen::MatrixXd A(1, 3);
    A << 1, 0, 0;
    RegressionBasis b = RegressionBasis::from_matrix(A);
    Eigen::VectorXd x(1);
    x << -0.7;
    Eigen::VectorXd f = regression_vector(b, x, 2);
    REQUIRE(f.size() == 1);
    CHECK(f[0] == 1.0);
  }
  SECTION("random matrix matches direct product") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1);
    Eigen::MatrixXd A(2, 3);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 3; ++j) A(i, j) = u(rng);
    RegressionBasis b = RegressionBasis::from_matrix(A);
    Eigen::VectorXd x(1);
    x << 0.5;
    Eigen::VectorXd v(3);
    v << 1.0, 0.5, 0.25;
    Eigen::VectorXd expect = A * v;
    CHECK(regression_vector(b, x, 2).isApprox(expect, 1e-14));
  }
  SECTION("rank-deficient rows are rejected") {
    Eigen::MatrixXd A(2, 3);
    A << 1, 2, 3, 2, 4, 6;
    CHECK_THROWS_AS(RegressionBasis::from_matrix(A), SingularMatrix);
  }
  SECTION("dimension mismatch is reported") {
    RegressionBasis id = RegressionBasis::identity(1, 2);
    Eigen::VectorXd x(1);
    x << 0.1;
    CHECK_THROWS_AS(regression_vector(id, x, 3), DimensionMismatch);
  }
}
