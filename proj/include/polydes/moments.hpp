#pragma once

#include <Eigen/Dense>
#include <map>
#include <mutex>
#include <vector>

#include "polydes/errors.hpp"
#include "polydes/polybasis.hpp"

namespace polydes::moments {

using polybasis::Exponents;
using polybasis::MonomialBasis;
using polybasis::MultiIndex;
using polybasis::Polynomial;

/// Truncated moment sequence y = (y_alpha), |alpha| <= order, stored dense
/// over the graded basis.
struct MomentSequence {
  int n = 0;
  int order = 0;
  Eigen::VectorXd values;

  static MomentSequence zero(int n, int order) {
    MomentSequence y;
    y.n = n;
    y.order = order;
    y.values = Eigen::VectorXd::Zero(polybasis::basis_size(n, order));
    return y;
  }

  /// Moments of the atomic measure sum_i w_i delta_{x_i}.
  static MomentSequence from_design(const std::vector<Eigen::VectorXd>& points,
                                    const Eigen::VectorXd& weights, int order) {
    if (points.empty() || static_cast<int>(points.size()) != weights.size()) {
      throw DimensionMismatch("points/weights size mismatch");
    }
    MomentSequence y = zero(static_cast<int>(points[0].size()), order);
    for (size_t i = 0; i < points.size(); ++i) {
      y.values += weights[static_cast<int>(i)] *
                  polybasis::eval_monomial_vector(points[i], order);
    }
    return y;
  }

  const MonomialBasis& basis() const { return polybasis::enumerate_monomials(n, order); }

  double value(const Exponents& alpha) const {
    const int idx = basis().index_of(alpha);
    if (idx < 0) throw DegreeOverflow("moment index exceeds sequence order");
    return values[idx];
  }

  MomentSequence truncated(int new_order) const {
    if (new_order > order) throw DegreeOverflow("cannot truncate upward");
    MomentSequence y = zero(n, new_order);
    y.values = values.head(y.values.size());
    return y;
  }
};

/// L_y(f) = sum_alpha f_alpha y_alpha.
inline double riesz(const MomentSequence& y, const Polynomial& f) {
  if (f.degree() > y.order) throw DegreeOverflow("riesz: deg f exceeds order of y");
  const MonomialBasis& b = y.basis();
  double v = 0.0;
  for (const auto& [a, c] : f.terms) v += c * y.values[b.index_of(a)];
  return v;
}

/// Symmetric matrix indexed by the degree-k monomial basis.
struct MomentMatrix {
  int n = 0;
  int k = 0;
  Eigen::MatrixXd entries;

  const MonomialBasis& basis() const { return polybasis::enumerate_monomials(n, k); }
};

/// M_k(y) with entries y_{alpha+beta}.
inline MomentMatrix moment_matrix(const MomentSequence& y, int k) {
  if (2 * k > y.order) throw DegreeOverflow("moment_matrix: 2k exceeds order of y");
  const MonomialBasis& bk = polybasis::enumerate_monomials(y.n, k);
  const MonomialBasis& by = y.basis();
  MomentMatrix m;
  m.n = y.n;
  m.k = k;
  m.entries.resize(bk.size(), bk.size());
  for (int i = 0; i < bk.size(); ++i) {
    for (int j = i; j < bk.size(); ++j) {
      const double v = y.values[by.index_of(bk.order[i] + bk.order[j])];
      m.entries(i, j) = v;
      m.entries(j, i) = v;
    }
  }
  return m;
}

/// M_k(g y) with entries L_y(g x^alpha x^beta).
inline MomentMatrix localizing_matrix(const MomentSequence& y, const Polynomial& g,
                                      int k) {
  if (2 * k + g.degree() > y.order) {
    throw DegreeOverflow("localizing_matrix: 2k + deg g exceeds order of y");
  }
  const MonomialBasis& bk = polybasis::enumerate_monomials(y.n, k);
  const MonomialBasis& by = y.basis();
  MomentMatrix m;
  m.n = y.n;
  m.k = k;
  m.entries.resize(bk.size(), bk.size());
  for (int i = 0; i < bk.size(); ++i) {
    for (int j = i; j < bk.size(); ++j) {
      const MultiIndex ab = bk.order[i] + bk.order[j];
      double v = 0.0;
      for (const auto& [gamma, c] : g.terms) {
        v += c * y.values[by.index_of(ab + MultiIndex(gamma))];
      }
      m.entries(i, j) = v;
      m.entries(j, i) = v;
    }
  }
  return m;
}

/// Symmetric matrices {B_alpha}, |alpha| <= 2d, with sum_alpha B_alpha x^alpha
/// = v_d(x) v_d(x)^T, indexed by the graded order of degree 2d. Cached per (n, d).
inline const std::vector<Eigen::MatrixXd>& basis_matrices(int n, int d) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::vector<Eigen::MatrixXd>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(n, d);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  const MonomialBasis& bd = polybasis::enumerate_monomials(n, d);
  const MonomialBasis& b2d = polybasis::enumerate_monomials(n, 2 * d);
  std::vector<Eigen::MatrixXd> mats(
      b2d.size(), Eigen::MatrixXd::Zero(bd.size(), bd.size()));
  for (int i = 0; i < bd.size(); ++i) {
    for (int j = 0; j < bd.size(); ++j) {
      mats[b2d.index_of(bd.order[i] + bd.order[j])](i, j) += 1.0;
    }
  }
  return cache.emplace(key, std::move(mats)).first->second;
}

}  // namespace polydes::moments
