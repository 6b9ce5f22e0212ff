#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "polydes/errors.hpp"

namespace polydes::polybasis {

using Exponents = std::vector<int>;

/// Multi-index alpha in N^n with |alpha| = sum of exponents.
struct MultiIndex {
  Exponents exponents;

  MultiIndex() = default;
  explicit MultiIndex(Exponents e) : exponents(std::move(e)) {}

  int n() const { return static_cast<int>(exponents.size()); }

  int degree() const {
    int s = 0;
    for (int e : exponents) s += e;
    return s;
  }

  bool operator==(const MultiIndex& o) const { return exponents == o.exponents; }

  MultiIndex operator+(const MultiIndex& o) const {
    MultiIndex r = *this;
    for (size_t i = 0; i < exponents.size(); ++i) r.exponents[i] += o.exponents[i];
    return r;
  }

  std::string str() const {
    std::string s = "(";
    for (size_t i = 0; i < exponents.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(exponents[i]);
    }
    return s + ")";
  }
};

/// Graded order: total degree first, ties broken so that within a degree
/// block x_1 carries the highest precedence (exponent tuples descending).
inline bool graded_lex_less(const Exponents& a, const Exponents& b) {
  int da = 0, db = 0;
  for (int e : a) da += e;
  for (int e : b) db += e;
  if (da != db) return da < db;
  return a > b;
}

inline bool graded_lex_less(const MultiIndex& a, const MultiIndex& b) {
  return graded_lex_less(a.exponents, b.exponents);
}

struct GradedLexLess {
  bool operator()(const Exponents& a, const Exponents& b) const {
    return graded_lex_less(a, b);
  }
};

struct ExponentsHash {
  size_t operator()(const Exponents& e) const noexcept {
    size_t h = 1469598103934665603ull;
    for (int v : e) {
      h ^= static_cast<size_t>(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
    return h;
  }
};

/// C(n+d, n), guarded against overflow.
inline std::int64_t basis_size(int n, int d) {
  if (n < 1 || d < 0) throw DimensionMismatch("basis_size requires n >= 1, d >= 0");
  const std::int64_t limit = (std::int64_t{1} << 53);
  std::int64_t r = 1;
  for (int i = 1; i <= n; ++i) {
    // r' = r * (d + i) / i is exact at every step.
    if (r > limit / (d + i)) throw BinomialOverflow("binomial C(n+d,n) exceeds 2^53");
    r = r * (d + i) / i;
  }
  return r;
}

/// All monomials of degree <= d in n variables, in graded order.
struct MonomialBasis {
  int n = 0;
  int d = 0;
  std::vector<MultiIndex> order;

  int size() const { return static_cast<int>(order.size()); }

  /// Position of alpha in the graded order, or -1 when |alpha| > d.
  int index_of(const Exponents& alpha) const {
    auto it = lookup_.find(alpha);
    return it == lookup_.end() ? -1 : it->second;
  }
  int index_of(const MultiIndex& alpha) const { return index_of(alpha.exponents); }

  void build_lookup() {
    lookup_.clear();
    lookup_.reserve(order.size());
    for (size_t i = 0; i < order.size(); ++i) {
      lookup_.emplace(order[i].exponents, static_cast<int>(i));
    }
  }

private:
  std::unordered_map<Exponents, int, ExponentsHash> lookup_;
};

namespace detail {

inline void enumerate_block(int n, int deg, Exponents& cur, int pos,
                            std::vector<MultiIndex>& out) {
  if (pos == n - 1) {
    cur[pos] = deg;
    out.emplace_back(cur);
    return;
  }
  for (int e = deg; e >= 0; --e) {
    cur[pos] = e;
    enumerate_block(n, deg - e, cur, pos + 1, out);
  }
  cur[pos] = 0;
}

}  // namespace detail

inline const MonomialBasis& enumerate_monomials(int n, int d) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, MonomialBasis> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(n, d);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  const std::int64_t count = basis_size(n, d);
  MonomialBasis b;
  b.n = n;
  b.d = d;
  b.order.reserve(static_cast<size_t>(count));
  Exponents cur(n, 0);
  for (int deg = 0; deg <= d; ++deg) detail::enumerate_block(n, deg, cur, 0, b.order);
  b.build_lookup();
  return cache.emplace(key, std::move(b)).first->second;
}

/// x^alpha with integer exponents.
inline double monomial_value(const Eigen::VectorXd& x, const Exponents& alpha) {
  double v = 1.0;
  for (size_t i = 0; i < alpha.size(); ++i) {
    double p = 1.0, base = x[static_cast<Eigen::Index>(i)];
    for (int e = alpha[i]; e > 0; --e) p *= base;
    v *= p;
  }
  return v;
}

/// v_d(x): all monomial values of degree <= d in graded order.
inline Eigen::VectorXd eval_monomial_vector(const Eigen::VectorXd& x, int d) {
  const int n = static_cast<int>(x.size());
  const MonomialBasis& b = enumerate_monomials(n, d);
  // Power table avoids repeated pow loops across the basis.
  Eigen::MatrixXd powers(n, d + 1);
  for (int i = 0; i < n; ++i) {
    powers(i, 0) = 1.0;
    for (int e = 1; e <= d; ++e) powers(i, e) = powers(i, e - 1) * x[i];
  }
  Eigen::VectorXd v(b.size());
  for (int k = 0; k < b.size(); ++k) {
    double p = 1.0;
    const Exponents& a = b.order[k].exponents;
    for (int i = 0; i < n; ++i) p *= powers(i, a[i]);
    v[k] = p;
  }
  return v;
}

/// Sparse polynomial over R[x_1..x_n] with canonically ordered terms.
struct Polynomial {
  int n = 0;
  std::map<Exponents, double, GradedLexLess> terms;

  Polynomial() = default;
  explicit Polynomial(int n_vars) : n(n_vars) {}

  static Polynomial constant(int n, double c) {
    Polynomial p(n);
    if (c != 0.0) p.terms.emplace(Exponents(n, 0), c);
    return p;
  }

  static Polynomial monomial(Exponents alpha, double c = 1.0) {
    Polynomial p(static_cast<int>(alpha.size()));
    if (c != 0.0) p.terms.emplace(std::move(alpha), c);
    return p;
  }

  /// x_i as a polynomial in n variables.
  static Polynomial variable(int n, int i) {
    Exponents a(n, 0);
    a[i] = 1;
    return monomial(std::move(a));
  }

  int degree() const {
    int d = 0;
    for (const auto& [a, c] : terms) {
      int da = 0;
      for (int e : a) da += e;
      d = std::max(d, da);
    }
    return d;
  }

  double coeff(const Exponents& alpha) const {
    auto it = terms.find(alpha);
    return it == terms.end() ? 0.0 : it->second;
  }

  void add_term(const Exponents& alpha, double c) {
    if (c == 0.0) return;
    auto [it, fresh] = terms.emplace(alpha, c);
    if (!fresh) {
      it->second += c;
      if (it->second == 0.0) terms.erase(it);
    }
  }

  double eval(const Eigen::VectorXd& x) const {
    double v = 0.0;
    for (const auto& [a, c] : terms) v += c * monomial_value(x, a);
    return v;
  }

  Polynomial operator+(const Polynomial& o) const {
    Polynomial r = *this;
    for (const auto& [a, c] : o.terms) r.add_term(a, c);
    return r;
  }

  Polynomial operator-(const Polynomial& o) const {
    Polynomial r = *this;
    for (const auto& [a, c] : o.terms) r.add_term(a, -c);
    return r;
  }

  Polynomial operator*(double s) const {
    Polynomial r(n);
    if (s == 0.0) return r;
    for (const auto& [a, c] : terms) r.terms.emplace(a, c * s);
    return r;
  }

  Polynomial operator-() const { return *this * -1.0; }

  /// Term-by-term convolution.
  Polynomial operator*(const Polynomial& o) const {
    Polynomial r(n);
    for (const auto& [a, ca] : terms) {
      for (const auto& [b, cb] : o.terms) {
        Exponents s(a);
        for (size_t i = 0; i < s.size(); ++i) s[i] += b[i];
        r.add_term(s, ca * cb);
      }
    }
    return r;
  }

  bool operator==(const Polynomial& o) const { return n == o.n && terms == o.terms; }
};

/// Row basis F(x) = A v_d(x) for the regression functions.
struct RegressionBasis {
  Eigen::MatrixXd matrix_A;

  int p() const { return static_cast<int>(matrix_A.rows()); }

  static RegressionBasis identity(int n, int d) {
    RegressionBasis b;
    const auto s = basis_size(n, d);
    b.matrix_A = Eigen::MatrixXd::Identity(s, s);
    return b;
  }

  static RegressionBasis from_matrix(Eigen::MatrixXd A) {
    if (A.rows() < 1) throw DimensionMismatch("regression basis needs p >= 1 rows");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A.transpose());
    qr.setThreshold(1e-10);
    if (qr.rank() < A.rows()) {
      throw SingularMatrix("regression basis matrix is not of full row rank");
    }
    RegressionBasis b;
    b.matrix_A = std::move(A);
    return b;
  }

  bool is_identity() const {
    return matrix_A.rows() == matrix_A.cols() &&
           matrix_A.isIdentity(0.0);
  }
};

inline Eigen::VectorXd regression_vector(const RegressionBasis& basis,
                                         const Eigen::VectorXd& x, int d) {
  const Eigen::VectorXd v = eval_monomial_vector(x, d);
  if (basis.matrix_A.cols() != v.size()) {
    throw DimensionMismatch("regression basis has " +
                            std::to_string(basis.matrix_A.cols()) +
                            " columns, basis vector has " + std::to_string(v.size()));
  }
  return basis.matrix_A * v;
}

}  // namespace polydes::polybasis
