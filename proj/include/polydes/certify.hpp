#pragma once

// Numeric verification of the equivalence theorem for a solved design:
// the dual polynomial p* must be nonnegative on the design space, its
// Riesz pairing with the optimal moments must vanish, and it must vanish
// at every recovered atom. Nonnegativity is certified on two levels:
// dense sampling with local descent refinement (always available) and a
// weighted-sums-of-squares decomposition rebuilt from the solver duals.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "polydes/criteria.hpp"
#include "polydes/designsolve.hpp"
#include "polydes/errors.hpp"
#include "polydes/moments.hpp"
#include "polydes/polybasis.hpp"
#include "polydes/recovery.hpp"
#include "polydes/semialg.hpp"

namespace polydes::certify {

struct Tolerances {
  double neg = 1e-6;    // slack for min p* over the samples
  double riesz = 1e-6;  // |L_{y*}(p*)|
  double atom = 1e-5;   // |p*| at recovered atoms
};

struct CertificateReport {
  double lambda_star = 0.0;  // phi_q of the information matrix
  double min_pstar_on_samples = 0.0;
  Eigen::VectorXd argmin;
  double riesz_pstar = 0.0;
  std::vector<double> atom_values;
  bool passed = false;
  int sample_count = 0;
  Tolerances tolerances;
  bool multiplicity_warning = false;  // clustered least eigenvalue under E
  std::string evidence = "sampling";
};

namespace detail {

inline polybasis::Polynomial partial(const polybasis::Polynomial& p, int i) {
  polybasis::Polynomial out(p.n);
  for (const auto& [alpha, coef] : p.terms) {
    if (alpha[static_cast<size_t>(i)] == 0) continue;
    polybasis::Exponents a = alpha;
    const double k = a[static_cast<size_t>(i)];
    a[static_cast<size_t>(i)] -= 1;
    out.add_term(std::move(a), coef * k);
  }
  return out;
}

struct DualInfo {
  polybasis::Polynomial p;
  bool available = false;
};

/// p* for diagnostics. Healthy moments go through criteria; an indefinite
/// yet invertible information matrix (a broken candidate y) falls back to
/// the spectral absolute value |M|, so the Christoffel form still blows up
/// near the defective eigenvalues and the Riesz pairing picks up the sign
/// defect. Only a non-invertible matrix leaves p* undefined.
inline DualInfo diagnostic_dual(const moments::MomentSequence& y,
                                const polybasis::RegressionBasis& basis,
                                criteria::Criterion c, int d) {
  DualInfo out{polybasis::Polynomial(y.n), false};
  try {
    out.p = criteria::dual_polynomial(y, basis, c, d);
    out.available = true;
    return out;
  } catch (const SingularMatrix&) {
  }
  const Eigen::MatrixXd M = criteria::information_matrix(y, basis, d).entries;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const double lmax = ev.cwiseAbs().maxCoeff();
  if (lmax <= 0.0 || ev.cwiseAbs().minCoeff() <= 1e-12 * lmax) return out;
  Eigen::VectorXd powered(ev.size());
  double level = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    powered[i] = c == criteria::Criterion::A ? 1.0 / (ev[i] * ev[i])
                                             : 1.0 / std::abs(ev[i]);
    level += c == criteria::Criterion::A ? 1.0 / ev[i] : 1.0;
  }
  const Eigen::MatrixXd K =
      eig.eigenvectors() * powered.asDiagonal() * eig.eigenvectors().transpose();
  const Eigen::MatrixXd pulled = basis.matrix_A.transpose() * K * basis.matrix_A;
  const auto& B = moments::basis_matrices(y.n, d);
  const auto& b2d = polybasis::enumerate_monomials(y.n, 2 * d);
  out.p.add_term(polybasis::Exponents(static_cast<size_t>(y.n), 0), level);
  for (int a = 0; a < b2d.size(); ++a) {
    out.p.add_term(b2d.order[static_cast<size_t>(a)].exponents,
                   -(B[static_cast<size_t>(a)].cwiseProduct(pulled)).sum());
  }
  out.available = true;
  return out;
}

/// Pull a point violating an equality pair back onto the variety with a
/// few Newton steps along the constraint gradient.
inline bool project_to_variety(const semialg::SemiAlgebraicSet& set,
                               const std::vector<std::pair<int, int>>& pairs,
                               std::vector<std::vector<polybasis::Polynomial>>& grads,
                               Eigen::VectorXd& x) {
  for (size_t p = 0; p < pairs.size(); ++p) {
    const auto& h = set.inequalities[static_cast<size_t>(pairs[p].first)];
    for (int it = 0; it < 8; ++it) {
      const double val = h.eval(x);
      if (std::abs(val) < 1e-12) break;
      Eigen::VectorXd g(set.n);
      for (int i = 0; i < set.n; ++i) g[i] = grads[p][static_cast<size_t>(i)].eval(x);
      const double gn = g.squaredNorm();
      if (gn < 1e-16) return false;
      x -= (val / gn) * g;
    }
    if (std::abs(h.eval(x)) > 1e-9) return false;
  }
  return true;
}

}  // namespace detail

/// Sampling-level certificate: evaluates p* on deterministic samples of
/// the design space and at the recovered atoms, then tightens the minimum
/// by projected descent from the most negative samples and from the atoms.
/// Failures are report contents, never exceptions.
inline CertificateReport check_design(const moments::MomentSequence& y_star,
                                      const recovery::Design& design,
                                      const semialg::SemiAlgebraicSet& set,
                                      const polybasis::RegressionBasis& basis,
                                      criteria::Criterion c, int samples = 2048,
                                      std::uint64_t seed = 1,
                                      Tolerances tol = {}) {
  const int d = y_star.order / 2;
  CertificateReport rep;
  rep.tolerances = tol;
  const criteria::InformationMatrix M = criteria::information_matrix(y_star, basis, d);
  rep.lambda_star = criteria::phi(M, c);
  if (c == criteria::Criterion::E) {
    rep.multiplicity_warning = criteria::eopt_certificate(M).multiplicity > 1;
  }

  const detail::DualInfo dual = detail::diagnostic_dual(y_star, basis, c, d);
  if (!dual.available) {
    rep.evidence = "information matrix not invertible; p* undefined";
    rep.min_pstar_on_samples = -std::numeric_limits<double>::infinity();
    rep.passed = false;
    return rep;
  }
  const polybasis::Polynomial& pstar = dual.p;
  rep.riesz_pstar = 0.0;
  for (const auto& [alpha, coef] : pstar.terms) {
    rep.riesz_pstar += coef * y_star.value(alpha);
  }

  const auto pts = semialg::sample_points(set, samples, seed);
  rep.sample_count = static_cast<int>(pts.size());
  std::vector<std::pair<double, int>> ranked;
  ranked.reserve(pts.size());
  rep.min_pstar_on_samples = std::numeric_limits<double>::infinity();
  rep.argmin = Eigen::VectorXd::Zero(set.n);
  auto consider = [&](double v, const Eigen::VectorXd& x) {
    if (v < rep.min_pstar_on_samples) {
      rep.min_pstar_on_samples = v;
      rep.argmin = x;
    }
  };
  for (size_t i = 0; i < pts.size(); ++i) {
    const double v = pstar.eval(pts[i]);
    ranked.emplace_back(v, static_cast<int>(i));
    consider(v, pts[i]);
  }
  for (const auto& x : design.points) {
    rep.atom_values.push_back(pstar.eval(x));
    consider(rep.atom_values.back(), x);
  }

  // Local refinement: descend p* from the worst samples and from the
  // atoms (the minimum sits on the zero set, so atoms are natural seeds).
  std::vector<polybasis::Polynomial> grad;
  for (int i = 0; i < set.n; ++i) grad.push_back(detail::partial(pstar, i));
  const auto pairs = semialg::equality_pairs(set);
  std::vector<std::vector<polybasis::Polynomial>> hgrads;
  for (const auto& pr : pairs) {
    std::vector<polybasis::Polynomial> gh;
    for (int i = 0; i < set.n; ++i) {
      gh.push_back(detail::partial(set.inequalities[static_cast<size_t>(pr.first)], i));
    }
    hgrads.push_back(std::move(gh));
  }
  std::vector<Eigen::VectorXd> starts;
  std::sort(ranked.begin(), ranked.end());
  for (size_t i = 0; i < ranked.size() && i < 20; ++i) {
    starts.push_back(pts[static_cast<size_t>(ranked[i].second)]);
  }
  for (const auto& x : design.points) starts.push_back(x);

  for (Eigen::VectorXd x : starts) {
    double best = pstar.eval(x);
    for (int it = 0; it < 40; ++it) {
      Eigen::VectorXd g(set.n);
      for (int i = 0; i < set.n; ++i) g[i] = grad[static_cast<size_t>(i)].eval(x);
      const double gn = g.norm();
      if (gn < 1e-12) break;
      bool moved = false;
      for (double step = 0.1; step > 1e-12; step *= 0.5) {
        Eigen::VectorXd trial = x - (step / gn) * g;
        if (!detail::project_to_variety(set, pairs, hgrads, trial)) continue;
        if (!semialg::membership(set, trial, 1e-9)) continue;
        const double v = pstar.eval(trial);
        if (v < best - 1e-15) {
          x = trial;
          best = v;
          moved = true;
          break;
        }
      }
      if (!moved) break;
    }
    consider(best, x);
  }

  double worst_atom = 0.0;
  for (double v : rep.atom_values) worst_atom = std::max(worst_atom, std::abs(v));
  rep.passed = rep.min_pstar_on_samples >= -tol.neg &&
               std::abs(rep.riesz_pstar) <= tol.riesz && worst_atom <= tol.atom;
  return rep;
}

/// Weighted-SOS decomposition of p* recovered from the solver duals. At a
/// KKT point the stationarity rows contracted with the moment vector of a
/// Dirac at x give, for every x,
///
///   level + shift(x) + sum_p h_p(x) w_p(x) - F(x)^T crit F(x)
///     = v^T q0 v + sum_j g_j(x) v^T qj v,
///
/// where level is the mass-row dual, shift collects fixed-moment duals,
/// w_p are the variety-row dual polynomials, crit is the principal dual
/// of the criterion block (M^{q-1} up to scaling) and q0, qj are the
/// moment and localizing duals lifted back through the kernel reduction.
/// The left side equals p* when no fixed moments are present.
struct SosCertificate {
  Eigen::MatrixXd q0;               // Gram over v_{d+delta}
  std::vector<Eigen::MatrixXd> qj;  // per inequality; 0x0 when absent
  std::vector<int> qj_order;        // localizing basis order per inequality
  Eigen::MatrixXd crit_kernel;      // lifted principal criterion dual
  double level = 0.0;               // negated mass-row dual
  polybasis::Polynomial shift;      // negated fixed-moment dual terms
  std::vector<polybasis::Polynomial> variety_multipliers;  // per pair
  double residual = 0.0;            // max relative identity defect
  double min_gram_eig = 0.0;        // most negative eigenvalue across Grams
};

inline SosCertificate sos_certificate(const designsolve::SolveResult& rs,
                                      double tol = 1e-5,
                                      std::uint64_t seed = 23) {
  const auto& rel = rs.relaxation;
  const auto& set = rel.set;
  const int n = rel.n;
  SosCertificate cert;
  cert.shift = polybasis::Polynomial(n);
  cert.qj.assign(set.inequalities.size(), Eigen::MatrixXd());
  cert.qj_order.assign(set.inequalities.size(), 0);
  cert.variety_multipliers.assign(rel.pairs.size(), polybasis::Polynomial(n));

  auto lift = [](const Eigen::MatrixXd& lam, const Eigen::MatrixXd& Q) {
    return Q.size() ? Eigen::MatrixXd(Q * lam * Q.transpose()) : lam;
  };

  for (size_t k = 0; k < rel.blocks.size(); ++k) {
    const auto& info = rel.blocks[k];
    const Eigen::MatrixXd& lam = rs.conic.duals[k];
    switch (info.kind) {
      case designsolve::BlockInfo::Kind::Criterion: {
        Eigen::MatrixXd principal = lam;
        if (rel.criterion == criteria::Criterion::A) {
          const Eigen::Index half = lam.rows() / 2;
          principal = lam.topLeftCorner(half, half).eval();
        }
        cert.crit_kernel = lift(principal, info.Q);
        break;
      }
      case designsolve::BlockInfo::Kind::Moment:
        cert.q0 = lift(lam, info.Q);
        break;
      case designsolve::BlockInfo::Kind::Localizing:
        cert.qj[static_cast<size_t>(info.ineq)] = lift(lam, info.Q);
        cert.qj_order[static_cast<size_t>(info.ineq)] = info.order;
        break;
    }
  }

  for (size_t r = 0; r < rel.rows.size(); ++r) {
    const auto& row = rel.rows[r];
    const double nu = rs.conic.eq_duals[static_cast<Eigen::Index>(r)];
    switch (row.kind) {
      case designsolve::RowInfo::Kind::Mass:
        cert.level = -nu;
        break;
      case designsolve::RowInfo::Kind::Fixed:
        cert.shift.add_term(row.alpha, -nu);
        break;
      case designsolve::RowInfo::Kind::Variety:
        cert.variety_multipliers[static_cast<size_t>(row.pair)].add_term(row.alpha,
                                                                         -nu);
        break;
    }
  }

  // The identity is polynomial, so generic off-set points are valid
  // checkpoints and also exercise the variety terms.
  const double R = set.ball_radius ? *set.ball_radius : 1.0;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> box(-R, R);
  const int k_moment = rel.d + rel.delta;
  double scale = 1.0;
  double defect = 0.0;
  double min_eig = 0.0;
  auto gram_min = [](const Eigen::MatrixXd& G) {
    if (!G.size()) return 0.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
        0.5 * (G + G.transpose()), Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
  };
  min_eig = std::min(gram_min(cert.q0), gram_min(cert.crit_kernel));
  for (const auto& G : cert.qj) min_eig = std::min(min_eig, gram_min(G));

  for (int t = 0; t < 50; ++t) {
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x[i] = box(rng);
    double lhs = cert.level + cert.shift.eval(x);
    for (size_t p = 0; p < rel.pairs.size(); ++p) {
      lhs += set.inequalities[static_cast<size_t>(rel.pairs[p].first)].eval(x) *
             cert.variety_multipliers[p].eval(x);
    }
    const Eigen::VectorXd f = polybasis::regression_vector(rel.basis, x, rel.d);
    lhs -= f.dot(cert.crit_kernel * f);
    const Eigen::VectorXd v = polybasis::eval_monomial_vector(x, k_moment);
    double rhs = v.dot(cert.q0 * v);
    for (size_t j = 0; j < cert.qj.size(); ++j) {
      if (!cert.qj[j].size()) continue;
      const Eigen::VectorXd vv =
          polybasis::eval_monomial_vector(x, cert.qj_order[j]);
      rhs += set.inequalities[j].eval(x) * vv.dot(cert.qj[j] * vv);
    }
    scale = std::max(scale, std::abs(lhs));
    defect = std::max(defect, std::abs(lhs - rhs));
  }
  cert.residual = defect / scale;
  cert.min_gram_eig = min_eig;
  if (cert.residual > tol) {
    throw CertificateResidualTooLarge(
        "weighted-SOS identity defect " + std::to_string(cert.residual) +
        " exceeds " + std::to_string(tol));
  }
  if (min_eig < -1e-8) {
    throw CertificateResidualTooLarge("dual Gram block has eigenvalue " +
                                      std::to_string(min_eig));
  }
  return cert;
}

/// Plot-ready evaluation of p* over the bounding box of the design space.
struct LevelSetGrid {
  int n = 0;
  int resolution = 0;
  std::vector<Eigen::VectorXd> points;
  std::vector<double> pstar;
  std::vector<bool> inside;
};

inline LevelSetGrid levelset_grid(const moments::MomentSequence& y_star,
                                  const semialg::SemiAlgebraicSet& set,
                                  const polybasis::RegressionBasis& basis,
                                  criteria::Criterion c, int resolution) {
  if (set.n > 3) {
    throw UnsupportedDimension("level-set grids cover n <= 3 only");
  }
  if (resolution < 2) throw DimensionMismatch("resolution must be at least 2");
  if (!set.ball_radius) {
    throw MissingCompactnessCertificate("levelset_grid requires a validated set");
  }
  const int d = y_star.order / 2;
  const polybasis::Polynomial pstar = criteria::dual_polynomial(y_star, basis, c, d);
  const double R = *set.ball_radius;
  LevelSetGrid grid;
  grid.n = set.n;
  grid.resolution = resolution;
  std::vector<int> idx(static_cast<size_t>(set.n), 0);
  const std::int64_t total = static_cast<std::int64_t>(
      std::pow(static_cast<double>(resolution), set.n) + 0.5);
  grid.points.reserve(static_cast<size_t>(total));
  for (std::int64_t t = 0; t < total; ++t) {
    Eigen::VectorXd x(set.n);
    std::int64_t rem = t;
    for (int i = set.n - 1; i >= 0; --i) {
      const int q = static_cast<int>(rem % resolution);
      rem /= resolution;
      x[i] = -R + 2.0 * R * q / (resolution - 1);
    }
    grid.pstar.push_back(pstar.eval(x));
    grid.inside.push_back(semialg::membership(set, x, 1e-9));
    grid.points.push_back(std::move(x));
  }
  return grid;
}

inline void write_levelset_csv(const LevelSetGrid& grid, std::ostream& os) {
  for (int i = 0; i < grid.n; ++i) os << "x" << (i + 1) << ",";
  os << "pstar,inside\n";
  os.precision(12);
  for (size_t t = 0; t < grid.points.size(); ++t) {
    for (int i = 0; i < grid.n; ++i) os << grid.points[t][i] << ",";
    os << grid.pstar[t] << "," << (grid.inside[t] ? 1 : 0) << "\n";
  }
}

}  // namespace polydes::certify
