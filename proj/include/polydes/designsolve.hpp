#pragma once

// Moment relaxation of the optimal-design problem: maximize phi_q of the
// information matrix over truncated moment sequences constrained by the
// moment and localizing PSD blocks of the design space, then hand the
// resulting conic program to the embedded solver.
//
// Inequality pairs {g, -g} (varieties such as spheres) are rewritten as
// linear equality rows L(g x^beta) = 0; the pair's localizing blocks are
// dropped and every remaining block is compressed onto the orthogonal
// complement of its forced kernel so that the program regains a strictly
// feasible interior point.

#include <Eigen/Dense>
#include <algorithm>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "polydes/conic.hpp"
#include "polydes/criteria.hpp"
#include "polydes/errors.hpp"
#include "polydes/moments.hpp"
#include "polydes/polybasis.hpp"
#include "polydes/semialg.hpp"

namespace polydes::designsolve {

using polybasis::Exponents;

struct RelaxationConfig {
  int d = 1;
  int delta = 1;
  criteria::Criterion criterion = criteria::Criterion::D;
  polybasis::RegressionBasis basis;  // empty matrix: identity basis of degree d
  std::vector<std::pair<Exponents, double>> fixed_moments;
};

struct BlockInfo {
  enum class Kind { Criterion, Moment, Localizing };
  Kind kind = Kind::Moment;
  int ineq = -1;      // source inequality for localizing blocks
  int order = 0;      // moment order of the unreduced block
  Eigen::MatrixXd Q;  // kernel-complement basis; empty when unreduced
};

struct RowInfo {
  enum class Kind { Mass, Fixed, Variety };
  Kind kind = Kind::Mass;
  Exponents alpha;  // fixed-moment index, or monomial shift of a variety row
  int pair = -1;    // equality-pair id for variety rows
};

struct Relaxation {
  conic::ConicProgram program;
  semialg::SemiAlgebraicSet set;  // archimedean-certified copy
  int n = 0, d = 0, delta = 0;
  criteria::Criterion criterion = criteria::Criterion::D;
  polybasis::RegressionBasis basis;
  int num_moments = 0;  // leading variables are y in graded order, degree 2(d+delta)
  conic::CriterionBlocks crit;
  std::vector<BlockInfo> blocks;  // aligned with program.blocks
  std::vector<RowInfo> rows;      // aligned with program equality rows
  std::vector<std::pair<int, int>> pairs;
};

namespace detail {

/// Coefficient vectors of h * x^gamma over the monomial basis of `order`,
/// for every |gamma| <= order - deg(h). These span the forced kernel of a
/// moment matrix of that order once L(h x^beta) = 0 rows are in place.
inline std::vector<Eigen::VectorXd> variety_kernel(const polybasis::Polynomial& h,
                                                   int order) {
  std::vector<Eigen::VectorXd> out;
  const int free_deg = order - h.degree();
  if (free_deg < 0) return out;
  const auto& bo = polybasis::enumerate_monomials(h.n, order);
  const auto& bg = polybasis::enumerate_monomials(h.n, free_deg);
  for (const auto& gamma : bg.order) {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(bo.size());
    for (const auto& [kappa, c] : h.terms) {
      u[bo.index_of(gamma + polybasis::MultiIndex(kappa))] = c;
    }
    out.push_back(std::move(u));
  }
  return out;
}

/// Orthonormal basis of the complement of span(U); empty when U is empty or
/// spans nothing.
inline Eigen::MatrixXd kernel_complement(const std::vector<Eigen::VectorXd>& U,
                                         int dim) {
  if (U.empty()) return Eigen::MatrixXd();
  Eigen::MatrixXd M(dim, static_cast<Eigen::Index>(U.size()));
  for (size_t j = 0; j < U.size(); ++j) M.col(static_cast<Eigen::Index>(j)) = U[j];
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullU);
  const auto& sv = svd.singularValues();
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > 1e-10 * sv[0]) ++rank;
  }
  if (rank == 0) return Eigen::MatrixXd();
  return svd.matrixU().rightCols(dim - rank);
}

/// Congruence transform Q^T S(z) Q of an affine block.
inline conic::AffineBlock reduce_block(const conic::AffineBlock& blk,
                                       const Eigen::MatrixXd& Q) {
  conic::AffineBlock out = conic::AffineBlock::zero(
      static_cast<int>(Q.cols()), static_cast<int>(blk.coeff.size()));
  out.constant = Q.transpose() * blk.constant * Q;
  for (size_t i = 0; i < blk.coeff.size(); ++i) {
    if (blk.coeff[i].empty()) continue;
    Eigen::MatrixXd F = blk.coefficient_matrix(static_cast<int>(i));
    Eigen::MatrixXd Fr = Q.transpose() * F * Q;
    for (int r = 0; r < Fr.rows(); ++r) {
      for (int c = r; c < Fr.cols(); ++c) {
        if (Fr(r, c) != 0.0) out.add(static_cast<int>(i), r, c, Fr(r, c));
      }
    }
  }
  return out;
}

inline std::vector<Eigen::VectorXd> pair_kernels(
    const semialg::SemiAlgebraicSet& set,
    const std::vector<std::pair<int, int>>& pairs, int order) {
  std::vector<Eigen::VectorXd> U;
  for (const auto& pr : pairs) {
    auto vs = variety_kernel(set.inequalities[static_cast<size_t>(pr.first)], order);
    U.insert(U.end(), vs.begin(), vs.end());
  }
  return U;
}

}  // namespace detail

/// Appends the moment block M_k(y), localizing blocks for all inequalities
/// not absorbed into equality pairs, and the variety equality rows. The
/// first `basis_size(n, 2k)` program variables must be the moments y.
inline void append_moment_structure(conic::ConicProgram& prog,
                                    const semialg::SemiAlgebraicSet& set, int k,
                                    const std::vector<std::pair<int, int>>& pairs,
                                    std::vector<BlockInfo>& blocks,
                                    std::vector<RowInfo>& rows) {
  const int n = set.n;
  const auto& b2k = polybasis::enumerate_monomials(n, 2 * k);
  const auto& bk = polybasis::enumerate_monomials(n, k);
  std::set<int> dropped;
  for (const auto& pr : pairs) {
    dropped.insert(pr.first);
    dropped.insert(pr.second);
  }

  {
    conic::AffineBlock mom = conic::AffineBlock::zero(bk.size(), prog.num_vars);
    for (int i = 0; i < bk.size(); ++i) {
      for (int j = i; j < bk.size(); ++j) {
        mom.add(b2k.index_of(bk.order[static_cast<size_t>(i)] +
                             bk.order[static_cast<size_t>(j)]),
                i, j, 1.0);
      }
    }
    Eigen::MatrixXd Q = detail::kernel_complement(
        detail::pair_kernels(set, pairs, k), bk.size());
    if (Q.size() > 0) mom = detail::reduce_block(mom, Q);
    prog.blocks.push_back(std::move(mom));
    blocks.push_back({BlockInfo::Kind::Moment, -1, k, std::move(Q)});
  }

  for (size_t j = 0; j < set.inequalities.size(); ++j) {
    if (dropped.count(static_cast<int>(j))) continue;
    const auto& g = set.inequalities[j];
    const int kj = k - set.half_degree(static_cast<int>(j));
    if (kj < 0) {
      throw DimensionMismatch("relaxation order too small for inequality " +
                              std::to_string(j) + "; increase delta");
    }
    const auto& bkj = polybasis::enumerate_monomials(n, kj);
    conic::AffineBlock loc = conic::AffineBlock::zero(bkj.size(), prog.num_vars);
    for (int r = 0; r < bkj.size(); ++r) {
      for (int c = r; c < bkj.size(); ++c) {
        const polybasis::MultiIndex ab = bkj.order[static_cast<size_t>(r)] +
                                         bkj.order[static_cast<size_t>(c)];
        for (const auto& [kappa, coef] : g.terms) {
          loc.add(b2k.index_of(ab + polybasis::MultiIndex(kappa)), r, c, coef);
        }
      }
    }
    Eigen::MatrixXd Q = detail::kernel_complement(
        detail::pair_kernels(set, pairs, kj), bkj.size());
    if (Q.size() > 0) loc = detail::reduce_block(loc, Q);
    prog.blocks.push_back(std::move(loc));
    blocks.push_back(
        {BlockInfo::Kind::Localizing, static_cast<int>(j), kj, std::move(Q)});
  }

  for (size_t pi = 0; pi < pairs.size(); ++pi) {
    const auto& h = set.inequalities[static_cast<size_t>(pairs[pi].first)];
    const int free_deg = 2 * k - h.degree();
    if (free_deg < 0) continue;
    const auto& bf = polybasis::enumerate_monomials(n, free_deg);
    for (const auto& beta : bf.order) {
      Eigen::VectorXd row = Eigen::VectorXd::Zero(prog.num_vars);
      for (const auto& [kappa, coef] : h.terms) {
        row[b2k.index_of(beta + polybasis::MultiIndex(kappa))] += coef;
      }
      prog.add_equality(row, 0.0);
      rows.push_back({RowInfo::Kind::Variety, beta.exponents, static_cast<int>(pi)});
    }
  }
}

inline Relaxation build_relaxation(const semialg::SemiAlgebraicSet& input,
                                   const RelaxationConfig& cfg) {
  if (cfg.d < 1) throw DimensionMismatch("regression degree must be at least 1");
  if (cfg.delta < 0) throw DimensionMismatch("relaxation shift must be nonnegative");
  Relaxation rel;
  rel.set = semialg::validate_archimedean(input);
  rel.n = rel.set.n;
  rel.d = cfg.d;
  rel.delta = cfg.delta;
  rel.criterion = cfg.criterion;
  const int sd = static_cast<int>(polybasis::basis_size(rel.n, cfg.d));
  rel.basis = cfg.basis.matrix_A.size()
                  ? cfg.basis
                  : polybasis::RegressionBasis::identity(rel.n, cfg.d);
  if (rel.basis.matrix_A.cols() != sd) {
    throw DimensionMismatch("regression basis has " +
                            std::to_string(rel.basis.matrix_A.cols()) +
                            " columns, expected " + std::to_string(sd));
  }
  const int k = cfg.d + cfg.delta;
  rel.num_moments = static_cast<int>(polybasis::basis_size(rel.n, 2 * k));
  rel.program.init(rel.num_moments);
  rel.pairs = semialg::equality_pairs(rel.set);

  // Information-matrix map M(y) = A M_d(y) A^T.
  const int p = rel.basis.p();
  const auto& b2k = polybasis::enumerate_monomials(rel.n, 2 * k);
  const auto& bd = polybasis::enumerate_monomials(rel.n, cfg.d);
  conic::AffineBlock m_block = conic::AffineBlock::zero(p, rel.num_moments);
  if (rel.basis.is_identity()) {
    for (int i = 0; i < bd.size(); ++i) {
      for (int j = i; j < bd.size(); ++j) {
        m_block.add(b2k.index_of(bd.order[static_cast<size_t>(i)] +
                                 bd.order[static_cast<size_t>(j)]),
                    i, j, 1.0);
      }
    }
  } else {
    const auto& B = moments::basis_matrices(rel.n, cfg.d);
    for (size_t g = 0; g < B.size(); ++g) {
      const Eigen::MatrixXd F =
          rel.basis.matrix_A * B[g] * rel.basis.matrix_A.transpose();
      for (int r = 0; r < p; ++r) {
        for (int c = r; c < p; ++c) {
          if (F(r, c) != 0.0) m_block.add(static_cast<int>(g), r, c, F(r, c));
        }
      }
    }
  }
  // On a variety whose defining polynomial has degree <= d the regression
  // monomials are linearly dependent; restrict the criterion to the quotient.
  Eigen::MatrixXd Qcrit;
  if (!rel.pairs.empty() && rel.basis.is_identity()) {
    Qcrit = detail::kernel_complement(
        detail::pair_kernels(rel.set, rel.pairs, cfg.d), p);
    if (Qcrit.size() > 0) m_block = detail::reduce_block(m_block, Qcrit);
  }
  rel.crit = conic::reformulate_criterion(rel.program, cfg.criterion, m_block);
  rel.blocks.push_back({BlockInfo::Kind::Criterion, -1, cfg.d, Qcrit});

  Eigen::VectorXd mass = Eigen::VectorXd::Zero(rel.program.num_vars);
  mass[0] = 1.0;
  rel.program.add_equality(mass, 1.0);
  rel.rows.push_back({RowInfo::Kind::Mass, Exponents(static_cast<size_t>(rel.n), 0), -1});

  for (const auto& [alpha, value] : cfg.fixed_moments) {
    if (static_cast<int>(alpha.size()) != rel.n) {
      throw DimensionMismatch("fixed moment index has wrong dimension");
    }
    const int idx = b2k.index_of(alpha);
    if (idx < 0) throw DegreeOverflow("fixed moment exceeds relaxation order");
    Eigen::VectorXd row = Eigen::VectorXd::Zero(rel.program.num_vars);
    row[idx] = 1.0;
    rel.program.add_equality(row, value);
    rel.rows.push_back({RowInfo::Kind::Fixed, alpha, -1});
  }

  append_moment_structure(rel.program, rel.set, k, rel.pairs, rel.blocks, rel.rows);
  return rel;
}

struct SolveResult {
  Relaxation relaxation;
  conic::ConicSolution conic;
  moments::MomentSequence y_lifted;  // order 2(d + delta)
  moments::MomentSequence y_star;    // truncation to order 2d
  Eigen::MatrixXd info_matrix;       // M(y_star) under the full map
  double rho_delta = 0.0;
  conic::SolveStatus status = conic::SolveStatus::NumericalTrouble;
};

inline SolveResult solve_design(const semialg::SemiAlgebraicSet& set,
                                const RelaxationConfig& cfg,
                                const conic::SolveOptions& opts = {}) {
  SolveResult out;
  out.relaxation = build_relaxation(set, cfg);
  out.conic = conic::solve(out.relaxation.program, opts);
  out.status = out.conic.status;
  const int k = cfg.d + cfg.delta;
  out.y_lifted = moments::MomentSequence::zero(out.relaxation.n, 2 * k);
  if (out.conic.z.size() >= out.relaxation.num_moments) {
    out.y_lifted.values = out.conic.z.head(out.relaxation.num_moments);
  }
  out.y_star = out.y_lifted.truncated(2 * cfg.d);
  out.info_matrix =
      criteria::information_matrix(out.y_star, out.relaxation.basis, cfg.d).entries;
  const Eigen::MatrixXd& Q = out.relaxation.blocks[0].Q;
  criteria::InformationMatrix m;
  m.entries = Q.size() > 0
                  ? Eigen::MatrixXd(Q.transpose() * out.info_matrix * Q)
                  : out.info_matrix;
  out.rho_delta = criteria::phi(m, cfg.criterion);
  return out;
}

struct SweepEntry {
  int delta = 0;
  double rho = 0.0;
  conic::SolveStatus status = conic::SolveStatus::NumericalTrouble;
};

/// Solves the relaxation for each delta in [delta_lo, delta_hi]; the
/// reported values are nonincreasing for well-solved instances.
inline std::vector<SweepEntry> hierarchy_sweep(const semialg::SemiAlgebraicSet& set,
                                               RelaxationConfig cfg, int delta_lo,
                                               int delta_hi,
                                               const conic::SolveOptions& opts = {}) {
  std::vector<SweepEntry> out;
  for (int delta = delta_lo; delta <= delta_hi; ++delta) {
    cfg.delta = delta;
    auto rs = solve_design(set, cfg, opts);
    out.push_back({delta, rs.rho_delta, rs.status});
  }
  return out;
}

}  // namespace polydes::designsolve
