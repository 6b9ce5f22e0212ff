#pragma once

// Atomic-measure recovery from optimal moment sequences. The main path
// lifts the design moments to a higher order while minimizing a generic
// norm-like objective, waits for the moment-matrix ranks to flatten, and
// extracts atoms with the shift-operator / Schur-decomposition method.
// Two Christoffel-polynomial variants recover the support from the zero
// set of the dual polynomial instead of the lifted moments.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "polydes/conic.hpp"
#include "polydes/criteria.hpp"
#include "polydes/designsolve.hpp"
#include "polydes/errors.hpp"
#include "polydes/moments.hpp"
#include "polydes/polybasis.hpp"
#include "polydes/semialg.hpp"

namespace polydes::recovery {

enum class Method { Nie, ChristoffelMin, ChristoffelTrace };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::Nie: return "nie";
    case Method::ChristoffelMin: return "christoffel-min";
    default: return "christoffel-trace";
  }
}

inline Method method_from_string(const std::string& s) {
  if (s == "nie") return Method::Nie;
  if (s == "christoffel-min") return Method::ChristoffelMin;
  if (s == "christoffel-trace") return Method::ChristoffelTrace;
  throw ParseError("unknown recovery method: " + s);
}

struct RecoveryConfig {
  int r = 1;                      // initial lift increment
  int r_cap = 5;                  // escalation bound
  Method method = Method::Nie;
  std::optional<polybasis::Polynomial> objective;  // overrides the generic lift norm
  double rank_tol = 1e-6;
  double membership_tol = 1e-6;
  std::uint64_t seed = 0;
};

struct Design {
  std::vector<Eigen::VectorXd> points;  // lexicographically sorted
  Eigen::VectorXd weights;
  int rank_high = 0, rank_low = 0;      // ranks of M_{d+r} and M_{d+r-v}
  bool flat = false;
  int r_used = 0;
  Method method = Method::Nie;
  double extraction_residual = 0.0;     // shift-operator commutation defect
  double moment_residual = 0.0;         // match of the design to y_star, sup norm
  double lift_objective = 0.0;
  std::string message;
};

struct Lift {
  conic::ConicProgram program;
  int n = 0, k = 0;
  int num_moments = 0;
  std::vector<designsolve::BlockInfo> blocks;
  std::vector<designsolve::RowInfo> rows;
  conic::ConicSolution sol;
  moments::MomentSequence y;  // order 2k
  bool accepted = false;
  std::string message;
};

namespace detail {

inline void finish_lift(Lift& lift, const semialg::SemiAlgebraicSet& set,
                        const conic::SolveOptions& opts) {
  const auto pairs = semialg::equality_pairs(set);
  designsolve::append_moment_structure(lift.program, set, lift.k, pairs,
                                       lift.blocks, lift.rows);
  lift.sol = conic::solve(lift.program, opts);
  lift.y = moments::MomentSequence::zero(lift.n, 2 * lift.k);
  if (lift.sol.z.size() >= lift.num_moments) {
    lift.y.values = lift.sol.z.head(lift.num_moments);
  }
  // Tight relaxations park the optimum on the boundary of the PSD cone, so
  // the lift often lacks a strictly feasible point and the solver stalls
  // short of full optimality. A primal-accurate iterate is good enough for
  // rank inspection and extraction.
  lift.accepted = lift.sol.status == conic::SolveStatus::Optimal ||
                  (lift.sol.primal_res <= 1e-7 && lift.sol.gap <= 1e-6);
  lift.message = conic::to_string(lift.sol.status) + ": " + lift.sol.message;
}

inline void add_lift_norm_objective(conic::ConicProgram& prog, int n, int k) {
  const auto& b2k = polybasis::enumerate_monomials(n, 2 * k);
  const auto& bk = polybasis::enumerate_monomials(n, k);
  for (const auto& alpha : bk.order) {
    prog.c[b2k.index_of(alpha + alpha)] -= 1.0;
  }
}

}  // namespace detail

/// Minimal-norm completion: minimize L(f) over moment sequences of order
/// 2(d + r) that agree with y_star up to degree 2d and describe a measure
/// on the set. Default f is |v_{d+r}(x)|^2.
inline Lift nie_lift(const semialg::SemiAlgebraicSet& set,
                     const moments::MomentSequence& y_star, int d, int r,
                     const std::optional<polybasis::Polynomial>& f = std::nullopt,
                     const conic::SolveOptions& opts = {}) {
  if (r < 1) throw DimensionMismatch("lift increment must be at least 1");
  Lift lift;
  lift.n = set.n;
  lift.k = d + r;
  lift.num_moments = static_cast<int>(polybasis::basis_size(set.n, 2 * lift.k));
  lift.program.init(lift.num_moments);
  const auto& b2k = polybasis::enumerate_monomials(set.n, 2 * lift.k);
  if (f) {
    if (f->degree() > 2 * lift.k) {
      throw DegreeOverflow("lift objective degree exceeds the relaxation order");
    }
    for (const auto& [alpha, coef] : f->terms) {
      lift.program.c[b2k.index_of(alpha)] -= coef;
    }
  } else {
    detail::add_lift_norm_objective(lift.program, set.n, lift.k);
  }
  const auto& b2d = polybasis::enumerate_monomials(set.n, 2 * d);
  for (int i = 0; i < b2d.size(); ++i) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(lift.program.num_vars);
    row[b2k.index_of(b2d.order[static_cast<size_t>(i)])] = 1.0;
    lift.program.add_equality(row, y_star.values[i]);
    lift.rows.push_back({designsolve::RowInfo::Kind::Fixed,
                         b2d.order[static_cast<size_t>(i)].exponents, -1});
  }
  detail::finish_lift(lift, set, opts);
  return lift;
}

/// Support recovery through the dual polynomial p*. The objective form
/// minimizes L(p*) over all probability sequences on the set, so the
/// optimum face consists of measures on the zero set of p*. The
/// constraint form instead minimizes the lift norm subject to L(p*) = 0
/// while matching the design moments, selecting the tightest completion
/// supported on that zero set.
inline Lift christoffel_lift(const semialg::SemiAlgebraicSet& set,
                             const moments::MomentSequence& y_star,
                             const polybasis::Polynomial& p_star, int d, int r,
                             Method method, const conic::SolveOptions& opts = {}) {
  if (r < 1) throw DimensionMismatch("lift increment must be at least 1");
  Lift lift;
  lift.n = set.n;
  lift.k = d + r;
  lift.num_moments = static_cast<int>(polybasis::basis_size(set.n, 2 * lift.k));
  lift.program.init(lift.num_moments);
  const auto& b2k = polybasis::enumerate_monomials(set.n, 2 * lift.k);

  if (method == Method::ChristoffelMin) {
    Eigen::VectorXd mass = Eigen::VectorXd::Zero(lift.program.num_vars);
    mass[0] = 1.0;
    lift.program.add_equality(mass, 1.0);
    lift.rows.push_back({designsolve::RowInfo::Kind::Mass,
                         polybasis::Exponents(static_cast<size_t>(set.n), 0), -1});
    for (const auto& [alpha, coef] : p_star.terms) {
      lift.program.c[b2k.index_of(alpha)] -= coef;
    }
  } else if (method == Method::ChristoffelTrace) {
    detail::add_lift_norm_objective(lift.program, set.n, lift.k);
    const auto& b2d = polybasis::enumerate_monomials(set.n, 2 * d);
    for (int i = 0; i < b2d.size(); ++i) {
      Eigen::VectorXd row = Eigen::VectorXd::Zero(lift.program.num_vars);
      row[b2k.index_of(b2d.order[static_cast<size_t>(i)])] = 1.0;
      lift.program.add_equality(row, y_star.values[i]);
      lift.rows.push_back({designsolve::RowInfo::Kind::Fixed,
                           b2d.order[static_cast<size_t>(i)].exponents, -1});
    }
    // L(p*) = 0 pins the lift to the zero set of p*. With the moments
    // matched the row is a linear combination of the rows above, so it
    // acts as a consistency check: it is satisfiable only when y_star is
    // (numerically) optimal and the program turns infeasible otherwise.
    Eigen::VectorXd row = Eigen::VectorXd::Zero(lift.program.num_vars);
    for (const auto& [alpha, coef] : p_star.terms) {
      row[b2k.index_of(alpha)] += coef;
    }
    lift.program.add_equality(row, 0.0);
    lift.rows.push_back({designsolve::RowInfo::Kind::Fixed,
                         polybasis::Exponents(static_cast<size_t>(set.n), 0), -1});
  } else {
    throw UnsupportedCriterion("christoffel_lift expects a Christoffel method");
  }
  detail::finish_lift(lift, set, opts);
  return lift;
}

/// Numerical ranks of M_k(y) and M_{k-v}(y).
inline std::pair<int, int> rank_flat(const moments::MomentSequence& y, int k, int v,
                                     double rank_tol) {
  auto rank_of = [rank_tol](const Eigen::MatrixXd& M) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M, Eigen::EigenvaluesOnly);
    const double top = std::max(eig.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
    int r = 0;
    for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
      if (eig.eigenvalues()[i] > rank_tol * top) ++r;
    }
    return r;
  };
  const int high = rank_of(moments::moment_matrix(y, k).entries);
  const int low = rank_of(moments::moment_matrix(y, std::max(k - v, 0)).entries);
  return {high, low};
}

struct Extraction {
  std::vector<Eigen::VectorXd> points;
  double residual = 0.0;
  int rank = 0;
};

/// Shift-operator extraction of the support of an (approximately) rank-ell
/// atomic moment matrix M_k(y). Pivot rows are restricted to degree
/// <= k - shift_room so that all coordinate shifts stay inside the basis.
inline Extraction extract_atoms(const moments::MomentSequence& y, int k,
                                int shift_room, double rank_tol,
                                std::uint64_t seed) {
  const int n = y.n;
  const auto& bk = polybasis::enumerate_monomials(n, k);
  const Eigen::MatrixXd M = moments::moment_matrix(y, k).entries;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
  const Eigen::VectorXd ev = eig.eigenvalues();  // ascending
  const double top = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  int rank = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] > rank_tol * top) ++rank;
  }
  if (rank == 0) throw NoAtomsExtracted("moment matrix is numerically zero");
  Eigen::MatrixXd V(M.rows(), rank);
  for (int j = 0; j < rank; ++j) {
    const Eigen::Index src = ev.size() - 1 - j;
    V.col(j) = eig.eigenvectors().col(src) * std::sqrt(std::max(ev[src], 0.0));
  }

  const int pivot_deg = k - std::max(shift_room, 1);
  std::vector<int> allowed;
  for (int i = 0; i < bk.size(); ++i) {
    if (bk.order[static_cast<size_t>(i)].degree() <= pivot_deg) allowed.push_back(i);
  }
  if (static_cast<int>(allowed.size()) < rank) {
    throw ExtractionUnstable("not enough low-degree rows to pivot on");
  }
  Eigen::MatrixXd W(rank, static_cast<Eigen::Index>(allowed.size()));
  for (size_t j = 0; j < allowed.size(); ++j) {
    W.col(static_cast<Eigen::Index>(j)) = V.row(allowed[j]).transpose();
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(W);
  if (qr.rank() < rank) {
    throw ExtractionUnstable("pivot search found a rank-deficient basis");
  }
  const auto perm = qr.colsPermutation().indices();
  std::vector<int> pivots(static_cast<size_t>(rank));
  for (int j = 0; j < rank; ++j) pivots[static_cast<size_t>(j)] = allowed[perm[j]];

  Eigen::MatrixXd VB(rank, rank);
  for (int j = 0; j < rank; ++j) VB.row(j) = V.row(pivots[static_cast<size_t>(j)]);
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(VB);
  if (!lu.isInvertible()) {
    throw ExtractionUnstable("pivot block is singular");
  }

  std::vector<Eigen::MatrixXd> N(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd Vshift(rank, rank);
    for (int j = 0; j < rank; ++j) {
      polybasis::Exponents e = bk.order[static_cast<size_t>(pivots[static_cast<size_t>(j)])].exponents;
      e[static_cast<size_t>(i)] += 1;
      Vshift.row(j) = V.row(bk.index_of(e));
    }
    N[static_cast<size_t>(i)] = lu.solve(Vshift);
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.1, 1.0);
  Eigen::VectorXd c(n);
  for (int i = 0; i < n; ++i) c[i] = unif(rng);
  c /= c.sum();
  Eigen::MatrixXd Nmix = Eigen::MatrixXd::Zero(rank, rank);
  for (int i = 0; i < n; ++i) Nmix += c[i] * N[static_cast<size_t>(i)];

  Eigen::RealSchur<Eigen::MatrixXd> schur(Nmix);
  if (schur.info() != Eigen::Success) {
    throw ExtractionUnstable("Schur decomposition failed");
  }
  const Eigen::MatrixXd& Qs = schur.matrixU();
  const Eigen::MatrixXd& T = schur.matrixT();
  for (int j = 0; j + 1 < rank; ++j) {
    if (std::abs(T(j + 1, j)) > 1e-7 * std::max(1.0, T.cwiseAbs().maxCoeff())) {
      throw ExtractionUnstable("joint eigenvalues drifted off the real axis");
    }
  }

  Extraction out;
  out.rank = rank;
  std::vector<Eigen::VectorXd> raw;
  for (int j = 0; j < rank; ++j) {
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) {
      x[i] = Qs.col(j).dot(N[static_cast<size_t>(i)] * Qs.col(j));
    }
    raw.push_back(std::move(x));
  }
  double residual = 0.0;
  for (int j = 0; j < rank; ++j) {
    const double mix = c.dot(raw[static_cast<size_t>(j)]);
    residual = std::max(residual,
                        (Nmix * Qs.col(j) - mix * Qs.col(j)).cwiseAbs().maxCoeff());
  }
  out.residual = residual;
  if (residual > 1e-4) {
    throw ExtractionUnstable("shift operators do not commute on the atoms");
  }

  // Merge duplicates and sort for reproducible output.
  for (const auto& x : raw) {
    bool seen = false;
    for (const auto& p : out.points) {
      if ((p - x).cwiseAbs().maxCoeff() < 1e-5) {
        seen = true;
        break;
      }
    }
    if (!seen) out.points.push_back(x);
  }
  std::sort(out.points.begin(), out.points.end(),
            [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
              for (Eigen::Index i = 0; i < a.size(); ++i) {
                if (a[i] != b[i]) return a[i] < b[i];
              }
              return false;
            });
  return out;
}

/// Least-squares weights reproducing the degree-2d moments on given atoms.
inline Eigen::VectorXd compute_weights(const moments::MomentSequence& y_star, int d,
                                       const std::vector<Eigen::VectorXd>& points) {
  if (points.empty()) throw NoAtomsExtracted("no atoms to weight");
  const auto& b2d = polybasis::enumerate_monomials(y_star.n, 2 * d);
  Eigen::MatrixXd Vm(b2d.size(), static_cast<Eigen::Index>(points.size()));
  for (size_t j = 0; j < points.size(); ++j) {
    Vm.col(static_cast<Eigen::Index>(j)) =
        polybasis::eval_monomial_vector(points[j], 2 * d);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Vm, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv[sv.size() - 1] <= 0.0 || sv[0] / sv[sv.size() - 1] > 1e12) {
    throw IllConditionedVandermonde("atom Vandermonde condition number over 1e12");
  }
  Eigen::VectorXd w = svd.solve(y_star.values.head(b2d.size()));
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w[i] < -1e-9) {
      throw NegativeWeight("weight " + std::to_string(i) + " is " +
                           std::to_string(w[i]));
    }
    w[i] = std::max(w[i], 0.0);
  }
  const double total = w.sum();
  if (total <= 0.0) throw NegativeWeight("all weights vanish");
  return w / total;
}

/// Full pipeline step: escalate the lift order until the moment matrix
/// flattens, extract the atoms, filter them against the design space and
/// attach weights.
inline Design recover_design(const designsolve::SolveResult& rs,
                             RecoveryConfig cfg = {},
                             const conic::SolveOptions& opts = {}) {
  const auto& set = rs.relaxation.set;
  const int d = rs.relaxation.d;
  const int v = std::max(1, set.max_half_degree());
  Design out;
  out.method = cfg.method;

  polybasis::Polynomial p_star(set.n);
  if (cfg.method != Method::Nie) {
    p_star = criteria::dual_polynomial(rs.y_star, rs.relaxation.basis,
                                       rs.relaxation.criterion, d);
  }

  std::string last_message;
  for (int r = std::max(cfg.r, 1); r <= cfg.r_cap; ++r) {
    Lift lift = cfg.method == Method::Nie
                    ? nie_lift(set, rs.y_star, d, r, cfg.objective, opts)
                    : christoffel_lift(set, rs.y_star, p_star, d, r, cfg.method,
                                       opts);
    if (!lift.accepted) {
      last_message = "lift at r=" + std::to_string(r) + " not solved: " + lift.message;
      continue;
    }
    const auto ranks = rank_flat(lift.y, lift.k, v, cfg.rank_tol);
    const bool flat = ranks.first == ranks.second;
    if (!flat && r < cfg.r_cap) {
      last_message = "ranks (" + std::to_string(ranks.first) + ", " +
                     std::to_string(ranks.second) + ") not flat at r=" +
                     std::to_string(r);
      continue;
    }
    try {
      Extraction ex = extract_atoms(lift.y, lift.k, v, cfg.rank_tol, cfg.seed);
      std::vector<Eigen::VectorXd> kept;
      for (const auto& x : ex.points) {
        if (semialg::membership(set, x, cfg.membership_tol)) kept.push_back(x);
      }
      if (kept.empty()) {
        throw NoAtomsExtracted("all extracted atoms violate the design space");
      }
      out.points = std::move(kept);
      out.weights = compute_weights(rs.y_star, d, out.points);
      out.rank_high = ranks.first;
      out.rank_low = ranks.second;
      out.flat = flat;
      out.r_used = r;
      out.extraction_residual = ex.residual;
      out.lift_objective = lift.sol.primal_obj;
      const auto y_check =
          moments::MomentSequence::from_design(out.points, out.weights, 2 * d);
      out.moment_residual =
          (y_check.values - rs.y_star.values).cwiseAbs().maxCoeff();
      if (cfg.method == Method::Nie && out.moment_residual > 1e-3 &&
          r < cfg.r_cap) {
        last_message = "recovered design misses the moments at r=" +
                       std::to_string(r) + " (residual " +
                       std::to_string(out.moment_residual) + ")";
        continue;
      }
      out.message = lift.message;
      return out;
    } catch (const Error& e) {
      last_message = std::string(e.what()) + " at r=" + std::to_string(r);
      if (r == cfg.r_cap) throw;
    }
  }
  throw NoAtomsExtracted("no flat lift up to r=" + std::to_string(cfg.r_cap) +
                         "; last: " + last_message);
}

}  // namespace polydes::recovery
