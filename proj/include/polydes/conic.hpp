#pragma once

// Dense primal-dual interior point solver for small conic programs:
//
//   maximize    c.z + tau * logdet(S_0(z))
//   subject to  S_k(z) = C_k + sum_i z_i F_{k,i}  PSD for every block k,
//               A z = b,
//
// with free variables z and tau in {0, 1}. Nesterov-Todd scaling, Mehrotra
// predictor-corrector, infeasible start. The log-det term is handled by
// shifting the central-path target of block 0 from mu*I to (tau + mu)*I,
// so its multiplier converges to S_0^{-1} instead of 0.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "polydes/criteria.hpp"
#include "polydes/errors.hpp"

namespace polydes::conic {

/// Affine symmetric-matrix map z -> C + sum_i z_i F_i. Coefficients are
/// stored as upper-triangle triplets per variable; an entry (r, c, v) with
/// r != c contributes v to both (r, c) and (c, r).
struct AffineBlock {
  int dim = 0;
  Eigen::MatrixXd constant;
  struct Entry {
    int row, col;
    double value;
  };
  std::vector<std::vector<Entry>> coeff;  // indexed by variable

  static AffineBlock zero(int dim, int num_vars) {
    AffineBlock b;
    b.dim = dim;
    b.constant = Eigen::MatrixXd::Zero(dim, dim);
    b.coeff.resize(num_vars);
    return b;
  }

  void add(int var, int row, int col, double value) {
    if (value == 0.0) return;
    if (row > col) std::swap(row, col);
    coeff[static_cast<size_t>(var)].push_back({row, col, value});
  }

  Eigen::MatrixXd eval(const Eigen::VectorXd& z) const {
    Eigen::MatrixXd S = constant;
    for (size_t i = 0; i < coeff.size(); ++i) {
      const double zi = z[static_cast<Eigen::Index>(i)];
      if (zi == 0.0) continue;
      for (const Entry& e : coeff[i]) {
        S(e.row, e.col) += zi * e.value;
        if (e.row != e.col) S(e.col, e.row) += zi * e.value;
      }
    }
    return S;
  }

  /// <X, F_i> for symmetric X.
  double pair(int var, const Eigen::MatrixXd& X) const {
    double v = 0.0;
    for (const Entry& e : coeff[static_cast<size_t>(var)]) {
      v += e.value * (e.row == e.col ? X(e.row, e.col) : 2.0 * X(e.row, e.col));
    }
    return v;
  }

  /// F_i as a dense symmetric matrix.
  Eigen::MatrixXd coefficient_matrix(int var) const {
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(dim, dim);
    for (const Entry& e : coeff[static_cast<size_t>(var)]) {
      F(e.row, e.col) += e.value;
      if (e.row != e.col) F(e.col, e.row) += e.value;
    }
    return F;
  }
};

struct ConicProgram {
  int num_vars = 0;
  Eigen::VectorXd c;    // maximized linear part
  int tau = 0;          // 1 adds logdet(S_0(z)) to the objective
  std::vector<AffineBlock> blocks;
  Eigen::MatrixXd A;    // equality rows
  Eigen::VectorXd b;

  void init(int n) {
    num_vars = n;
    c = Eigen::VectorXd::Zero(n);
    A.resize(0, n);
    b.resize(0);
  }

  int add_variable(double cost = 0.0) {
    const int idx = num_vars++;
    c.conservativeResize(num_vars);
    c[idx] = cost;
    A.conservativeResize(A.rows(), num_vars);
    if (A.rows() > 0) A.col(idx).setZero();
    for (auto& blk : blocks) blk.coeff.resize(static_cast<size_t>(num_vars));
    return idx;
  }

  void add_equality(const Eigen::VectorXd& row, double rhs) {
    const Eigen::Index m = A.rows();
    A.conservativeResize(m + 1, num_vars);
    A.row(m) = row.transpose();
    b.conservativeResize(m + 1);
    b[m] = rhs;
  }
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, MaxIter, NumericalTrouble };

inline std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::Unbounded: return "Unbounded";
    case SolveStatus::MaxIter: return "MaxIter";
    default: return "NumericalTrouble";
  }
}

struct SolveOptions {
  double feas_tol = 1e-8;
  double gap_tol = 1e-8;
  int max_iter = 200;
  double step_frac = 0.98;
  std::uint64_t seed = 0;  // interface completeness; the method is deterministic
  bool verbose = false;
};

struct ConicSolution {
  Eigen::VectorXd z;
  std::vector<Eigen::MatrixXd> duals;  // PSD multipliers, one per block
  Eigen::VectorXd eq_duals;            // nu with c + sum_k F_k^*(duals_k) + A^T nu = 0
  SolveStatus status = SolveStatus::NumericalTrouble;
  double gap = std::numeric_limits<double>::infinity();       // relative duality gap
  double primal_res = std::numeric_limits<double>::infinity();
  double dual_res = std::numeric_limits<double>::infinity();
  double primal_obj = -std::numeric_limits<double>::infinity();  // c.z + tau logdet S_0
  int iterations = 0;
  std::string message;
};

namespace detail {

struct Scaling {
  Eigen::MatrixXd R, RinvT, Winv;  // W = R R^T, Winv = RinvT * RinvT^T... see below
  Eigen::MatrixXd Ls, Lz;
  Eigen::VectorXd sigma;           // scaled-space diagonal lambda
};

/// Nesterov-Todd scaling of the pair (S, Z): R with R^T Z R = R^{-1} S R^{-T}
/// = diag(sigma).
inline bool psd_cholesky(const Eigen::MatrixXd& M, Eigen::MatrixXd& L) {
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() == Eigen::Success) {
    L = llt.matrixL();
    return true;
  }
  // Iterates hug the boundary near convergence; a hair of diagonal
  // regularization keeps the scaling usable for the last few steps.
  const double base = std::max(1.0, M.trace() / static_cast<double>(M.rows()));
  for (double shift : {1e-14, 1e-12, 1e-10}) {
    Eigen::LLT<Eigen::MatrixXd> retry(
        M + shift * base * Eigen::MatrixXd::Identity(M.rows(), M.cols()));
    if (retry.info() == Eigen::Success) {
      L = retry.matrixL();
      return true;
    }
  }
  return false;
}

inline bool nt_scaling(const Eigen::MatrixXd& S, const Eigen::MatrixXd& Z,
                       Scaling& out) {
  if (!psd_cholesky(S, out.Ls) || !psd_cholesky(Z, out.Lz)) return false;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(out.Lz.transpose() * out.Ls,
                                        Eigen::ComputeFullU | Eigen::ComputeFullV);
  out.sigma = svd.singularValues();
  if (out.sigma.minCoeff() <= 0.0) return false;
  const Eigen::VectorXd inv_sqrt = out.sigma.cwiseSqrt().cwiseInverse();
  out.R = out.Ls * svd.matrixV() * inv_sqrt.asDiagonal();
  out.RinvT = out.Lz * svd.matrixU() * inv_sqrt.asDiagonal();
  out.Winv = out.RinvT * out.RinvT.transpose();
  return true;
}

/// Largest step a in [0, cap] with X + a*D staying PSD, given X = L L^T.
inline double max_psd_step(const Eigen::MatrixXd& L, const Eigen::MatrixXd& D,
                           double cap) {
  const Eigen::MatrixXd T =
      L.triangularView<Eigen::Lower>().solve(
          L.triangularView<Eigen::Lower>().solve(D).transpose()).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
      0.5 * (T + T.transpose()), Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues().minCoeff();
  if (lmin >= 0.0) return cap;
  return std::min(cap, 1.0 / (-lmin));
}

}  // namespace detail

class Solver {
public:
  Solver(const ConicProgram& prog, SolveOptions opts) : prog_(prog), opts_(opts) {}

  ConicSolution solve() {
    setup();
    if (!consistent_) {
      result_.status = SolveStatus::Infeasible;
      result_.message = "equality rows are inconsistent";
      finalize(zv_, nu_, s_, lam_);
      return result_;
    }
    const int K = static_cast<int>(prog_.blocks.size());
    std::vector<detail::Scaling> sc(K);
    double best_score = std::numeric_limits<double>::infinity();
    Best best;
    SolveStatus end_status = SolveStatus::MaxIter;
    std::string end_message = "iteration limit reached";

    for (int iter = 0; iter <= opts_.max_iter; ++iter) {
      // Residuals.
      std::vector<Eigen::MatrixXd> rp(K);
      for (int k = 0; k < K; ++k) rp[k] = prog_.blocks[k].eval(zv_) - s_[k];
      Eigen::VectorXd ra = Aeq_ * zv_ - beq_;
      Eigen::VectorXd rd = chat_ - Aeq_.transpose() * nu_;
      for (int k = 0; k < K; ++k) {
        for (int i : active_[k]) rd[i] -= prog_.blocks[k].pair(i, lam_[k]);
      }

      const double pres = std::max(block_norm(rp) / (1.0 + data_norm_),
                                   ra.size() ? ra.cwiseAbs().maxCoeff() /
                                                   (1.0 + b_norm_)
                                             : 0.0);
      const double dres = rd.cwiseAbs().maxCoeff() / (1.0 + c_norm_);

      // Objective values and gap.
      double logdet_s0 = 0.0, logdet_lam0 = 0.0;
      if (prog_.tau == 1) {
        logdet_s0 = sym_logdet(s_[0]);
        logdet_lam0 = sym_logdet(lam_[0]);
      }
      const double pobj = chat_.dot(zv_) - prog_.tau * logdet_s0;
      double gapval = 0.0;
      for (int k = 0; k < K; ++k) gapval += s_[k].cwiseProduct(lam_[k]).sum();
      if (prog_.tau == 1) {
        gapval -= logdet_s0 + logdet_lam0 + static_cast<double>(prog_.blocks[0].dim);
      }
      const double relgap = std::abs(gapval) / std::max(1.0, std::abs(pobj));

      const double score = std::max({pres, dres, relgap});
      if (score < best_score) {
        best_score = score;
        best = {zv_, nu_, s_, lam_, pres, dres, relgap, pobj, iter};
      }
      if (opts_.verbose) {
        std::fprintf(stderr, "it %3d  pres %9.2e dres %9.2e relgap %9.2e pobj % .9e\n",
                     iter, pres, dres, relgap, pobj);
      }

      if (pres <= opts_.feas_tol && dres <= opts_.feas_tol && relgap <= opts_.gap_tol) {
        result_.status = SolveStatus::Optimal;
        result_.iterations = iter;
        finalize(zv_, nu_, s_, lam_);
        return result_;
      }
      if (detect_infeasible(rd)) {
        result_.status = SolveStatus::Infeasible;
        result_.iterations = iter;
        result_.message = "Farkas-type dual improving ray found";
        finalize(zv_, nu_, s_, lam_);
        return result_;
      }
      if (pres <= 1e-6 && -pobj > 1e10 * std::max(1.0, std::abs(pobj0_))) {
        result_.status = SolveStatus::Unbounded;
        result_.iterations = iter;
        result_.message = "objective diverges along a feasible ray";
        finalize(zv_, nu_, s_, lam_);
        return result_;
      }
      if (iter == opts_.max_iter) break;

      // Scaling and Newton machinery.
      bool ok = true;
      for (int k = 0; k < K; ++k) ok = ok && detail::nt_scaling(s_[k], lam_[k], sc[k]);
      if (!ok || !build_kkt(sc)) {
        end_status = SolveStatus::NumericalTrouble;
        end_message = "scaling or KKT factorization failed";
        break;
      }

      double mu = 0.0;
      for (int k = 0; k < K; ++k) {
        mu += s_[k].cwiseProduct(lam_[k]).sum() - tau_of(k) * prog_.blocks[k].dim;
      }
      mu /= total_dim_;
      mu = std::max(mu, 0.0);

      // Predictor: aim at the exact optimality targets.
      Direction aff;
      std::vector<Eigen::MatrixXd> d_aff(K);
      for (int k = 0; k < K; ++k) {
        const Eigen::VectorXd dvec =
            tau_of(k) * Eigen::VectorXd::Ones(prog_.blocks[k].dim) -
            sc[k].sigma.cwiseProduct(sc[k].sigma);
        d_aff[k] = dvec.asDiagonal();
      }
      if (!newton(sc, rp, ra, rd, d_aff, 1.0, aff)) {
        end_status = SolveStatus::NumericalTrouble;
        end_message = "Newton solve failed";
        break;
      }
      const double alpha_aff = max_step(sc, aff);
      const double sig = std::pow(std::min(1.0, std::max(0.0, 1.0 - alpha_aff)), 3.0);

      // Corrector: recentre and add the second-order cross term.
      Direction dir;
      std::vector<Eigen::MatrixXd> d_cmb(K);
      for (int k = 0; k < K; ++k) {
        const int m = prog_.blocks[k].dim;
        const Eigen::MatrixXd V1 =
            sc[k].RinvT.transpose() * aff.ds[k] * sc[k].RinvT;
        const Eigen::MatrixXd V2 = sc[k].R.transpose() * aff.dlam[k] * sc[k].R;
        const Eigen::MatrixXd cross = 0.5 * (V1 * V2 + V2 * V1);
        d_cmb[k] = (tau_of(k) + sig * mu) * Eigen::MatrixXd::Identity(m, m) - cross;
        d_cmb[k] -= Eigen::MatrixXd(
            sc[k].sigma.cwiseProduct(sc[k].sigma).asDiagonal());
      }
      if (!newton(sc, rp, ra, rd, d_cmb, 1.0 - sig, dir)) {
        end_status = SolveStatus::NumericalTrouble;
        end_message = "Newton solve failed";
        break;
      }
      double alpha = opts_.step_frac * max_step(sc, dir);
      alpha = std::min(1.0, alpha);
      if (alpha < 1e-10) {
        end_status = SolveStatus::NumericalTrouble;
        end_message = "step length collapsed";
        break;
      }
      zv_ += alpha * dir.dz;
      nu_ += alpha * dir.dnu;
      for (int k = 0; k < K; ++k) {
        s_[k] += alpha * dir.ds[k];
        lam_[k] += alpha * dir.dlam[k];
        s_[k] = 0.5 * (s_[k] + s_[k].transpose()).eval();
        lam_[k] = 0.5 * (lam_[k] + lam_[k].transpose()).eval();
      }
      result_.iterations = iter + 1;
    }

    result_.status = end_status;
    result_.message = end_message;
    if (best_score < std::numeric_limits<double>::infinity()) {
      result_.message += "; best iterate: pres " + std::to_string(best.pres) +
                         " dres " + std::to_string(best.dres) + " relgap " +
                         std::to_string(best.relgap);
      finalize(best.z, best.nu, best.s, best.lam);
    } else {
      finalize(zv_, nu_, s_, lam_);
    }
    return result_;
  }

private:
  struct Direction {
    Eigen::VectorXd dz, dnu;
    std::vector<Eigen::MatrixXd> ds, dlam;
  };
  struct Best {
    Eigen::VectorXd z, nu;
    std::vector<Eigen::MatrixXd> s, lam;
    double pres = 0, dres = 0, relgap = 0, pobj = 0;
    int iter = 0;
  };

  double tau_of(int k) const { return (k == 0 && prog_.tau == 1) ? 1.0 : 0.0; }

  static double sym_logdet(const Eigen::MatrixXd& M) {
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    double v = 0.0;
    for (int i = 0; i < M.rows(); ++i) v += std::log(llt.matrixLLT()(i, i));
    return 2.0 * v;
  }

  double block_norm(const std::vector<Eigen::MatrixXd>& mats) const {
    double v = 0.0;
    for (const auto& m : mats) v = std::max(v, m.cwiseAbs().maxCoeff());
    return v;
  }

  void setup() {
    const int N = prog_.num_vars;
    chat_ = -prog_.c;
    c_norm_ = N ? chat_.cwiseAbs().maxCoeff() : 0.0;
    data_norm_ = 0.0;
    total_dim_ = 0;
    active_.resize(prog_.blocks.size());
    for (size_t k = 0; k < prog_.blocks.size(); ++k) {
      data_norm_ = std::max(data_norm_, prog_.blocks[k].constant.cwiseAbs().maxCoeff());
      total_dim_ += prog_.blocks[k].dim;
      active_[k].clear();
      for (int i = 0; i < N; ++i) {
        if (!prog_.blocks[k].coeff[static_cast<size_t>(i)].empty()) {
          active_[k].push_back(i);
        }
      }
    }

    // Keep the earliest maximal independent subset of equality rows.
    consistent_ = true;
    kept_rows_.clear();
    b_norm_ = prog_.b.size() ? prog_.b.cwiseAbs().maxCoeff() : 0.0;
    const Eigen::Index M = prog_.A.rows();
    if (M > 0) {
      Eigen::MatrixXd Q(prog_.A.cols(), M);
      Eigen::Index r = 0;
      for (Eigen::Index i = 0; i < M; ++i) {
        Eigen::VectorXd v = prog_.A.row(i).transpose();
        const double scale = std::max(1.0, v.norm());
        Eigen::VectorXd w = v;
        for (Eigen::Index j = 0; j < r; ++j) w -= Q.col(j).dot(w) * Q.col(j);
        for (Eigen::Index j = 0; j < r; ++j) w -= Q.col(j).dot(w) * Q.col(j);
        if (w.norm() > 1e-12 * scale) {
          Q.col(r++) = w / w.norm();
          kept_rows_.push_back(i);
        } else {
          // Dependent row: check b for consistency against the kept rows.
          Eigen::MatrixXd Ak(kept_rows_.size(), prog_.A.cols());
          Eigen::VectorXd bk(kept_rows_.size());
          for (size_t t = 0; t < kept_rows_.size(); ++t) {
            Ak.row(static_cast<Eigen::Index>(t)) = prog_.A.row(kept_rows_[t]);
            bk[static_cast<Eigen::Index>(t)] = prog_.b[kept_rows_[t]];
          }
          Eigen::VectorXd coef =
              Ak.transpose().colPivHouseholderQr().solve(v);
          if (std::abs(coef.dot(bk) - prog_.b[i]) > 1e-7 * std::max(1.0, b_norm_)) {
            consistent_ = false;
          }
        }
      }
      Aeq_.resize(static_cast<Eigen::Index>(kept_rows_.size()), prog_.A.cols());
      beq_.resize(static_cast<Eigen::Index>(kept_rows_.size()));
      for (size_t t = 0; t < kept_rows_.size(); ++t) {
        Aeq_.row(static_cast<Eigen::Index>(t)) = prog_.A.row(kept_rows_[t]);
        beq_[static_cast<Eigen::Index>(t)] = prog_.b[kept_rows_[t]];
      }
    } else {
      Aeq_.resize(0, N);
      beq_.resize(0);
    }

    zv_ = beq_.size()
              ? Eigen::VectorXd(Aeq_.completeOrthogonalDecomposition().solve(beq_))
              : Eigen::VectorXd::Zero(N);
    nu_ = Eigen::VectorXd::Zero(Aeq_.rows());
    s_.clear();
    lam_.clear();
    for (const auto& blk : prog_.blocks) {
      s_.push_back(Eigen::MatrixXd::Identity(blk.dim, blk.dim));
      lam_.push_back(Eigen::MatrixXd::Identity(blk.dim, blk.dim));
    }
    pobj0_ = chat_.dot(zv_);
  }

  bool detect_infeasible(const Eigen::VectorXd& rd) {
    // Certificate of primal infeasibility: Lambda PSD, nu with
    // F^*(Lambda) + A^T nu = 0 and sum <Lambda_k, C_k> - b.nu < 0.
    double theta = nu_.size() ? nu_.cwiseAbs().maxCoeff() : 0.0;
    for (const auto& l : lam_) theta = std::max(theta, l.cwiseAbs().maxCoeff());
    if (theta < 1e4) return false;
    // F^*(Lambda) + A^T nu = chat - rd.
    const double ray_res = (chat_ - rd).cwiseAbs().maxCoeff();
    double val = -beq_.dot(nu_);
    for (size_t k = 0; k < prog_.blocks.size(); ++k) {
      val += prog_.blocks[k].constant.cwiseProduct(lam_[k]).sum();
    }
    return val < 0.0 && ray_res <= 1e-7 * (-val);
  }

  bool build_kkt(const std::vector<detail::Scaling>& sc) {
    const int N = prog_.num_vars;
    H_.setZero(N, N);
    for (size_t k = 0; k < prog_.blocks.size(); ++k) {
      const auto& blk = prog_.blocks[k];
      const Eigen::MatrixXd& Winv = sc[k].Winv;
      for (int j : active_[k]) {
        // G_j = Winv * F_j * Winv, exploiting the sparsity of F_j.
        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(blk.dim, blk.dim);
        for (const auto& e : blk.coeff[static_cast<size_t>(j)]) {
          T.row(e.row) += e.value * Winv.row(e.col);
          if (e.row != e.col) T.row(e.col) += e.value * Winv.row(e.row);
        }
        const Eigen::MatrixXd G = Winv * T;
        for (int i : active_[k]) {
          if (i > j) continue;
          const double v = blk.pair(i, G);
          H_(i, j) += v;
          if (i != j) H_(j, i) += v;
        }
      }
    }
    hllt_.compute(H_);
    if (hllt_.info() != Eigen::Success) {
      const double ridge = 1e-12 * std::max(1.0, H_.trace() / N);
      H_ += ridge * Eigen::MatrixXd::Identity(N, N);
      hllt_.compute(H_);
      if (hllt_.info() != Eigen::Success) return false;
    }
    if (Aeq_.rows() > 0) {
      HinvAt_ = hllt_.solve(Aeq_.transpose());
      schur_ = Aeq_ * HinvAt_;
      sllt_.compute(0.5 * (schur_ + schur_.transpose()));
      if (sllt_.info() != Eigen::Success) return false;
    }
    return true;
  }

  /// Solve the Newton system for given residual weights and scaled-space
  /// complementarity targets D_k (eta scales the feasibility residuals).
  bool newton(const std::vector<detail::Scaling>& sc,
              const std::vector<Eigen::MatrixXd>& rp, const Eigen::VectorXd& ra,
              const Eigen::VectorXd& rd, const std::vector<Eigen::MatrixXd>& D,
              double eta, Direction& out) {
    const int K = static_cast<int>(prog_.blocks.size());
    const int N = prog_.num_vars;
    std::vector<Eigen::MatrixXd> Dtil(K), lifted(K), wrp(K);
    for (int k = 0; k < K; ++k) {
      const Eigen::VectorXd& sig = sc[k].sigma;
      Dtil[k].resizeLike(D[k]);
      for (int a = 0; a < D[k].rows(); ++a) {
        for (int b2 = 0; b2 < D[k].cols(); ++b2) {
          Dtil[k](a, b2) = 2.0 * D[k](a, b2) / (sig[a] + sig[b2]);
        }
      }
      lifted[k] = sc[k].RinvT * Dtil[k] * sc[k].RinvT.transpose();
      wrp[k] = sc[k].Winv * (eta * rp[k]) * sc[k].Winv;
    }
    Eigen::VectorXd rhs1 = -eta * rd;
    for (int k = 0; k < K; ++k) {
      for (int i : active_[k]) {
        rhs1[i] += prog_.blocks[k].pair(i, lifted[k]) -
                   prog_.blocks[k].pair(i, wrp[k]);
      }
    }
    // Reduced KKT system: H dz - Aeq^T dnu = rhs1, Aeq dz = rhs2. The
    // normal equations square the conditioning near the optimum, so the
    // factored solve is followed by two passes of iterative refinement.
    const Eigen::VectorXd rhs2 = -eta * ra;
    auto kkt_solve = [&](const Eigen::VectorXd& q1, const Eigen::VectorXd& q2,
                         Eigen::VectorXd& dz, Eigen::VectorXd& dnu) {
      const Eigen::VectorXd y0 = hllt_.solve(q1);
      if (Aeq_.rows() > 0) {
        dnu = sllt_.solve(q2 - Aeq_ * y0);
        dz = y0 + HinvAt_ * dnu;
      } else {
        dnu = Eigen::VectorXd::Zero(0);
        dz = y0;
      }
    };
    kkt_solve(rhs1, rhs2, out.dz, out.dnu);
    if (!out.dz.allFinite()) return false;
    for (int pass = 0; pass < 2; ++pass) {
      Eigen::VectorXd q1 = rhs1 - H_ * out.dz;
      Eigen::VectorXd q2(0);
      if (Aeq_.rows() > 0) {
        q1 += Aeq_.transpose() * out.dnu;
        q2 = rhs2 - Aeq_ * out.dz;
      }
      Eigen::VectorXd ddz, ddnu;
      kkt_solve(q1, q2, ddz, ddnu);
      if (!ddz.allFinite()) break;
      out.dz += ddz;
      out.dnu += ddnu;
    }
    out.ds.resize(K);
    out.dlam.resize(K);
    for (int k = 0; k < K; ++k) {
      Eigen::MatrixXd dsk = eta * rp[k];
      const auto& blk = prog_.blocks[k];
      for (int i : active_[k]) {
        const double zi = out.dz[i];
        if (zi == 0.0) continue;
        for (const auto& e : blk.coeff[static_cast<size_t>(i)]) {
          dsk(e.row, e.col) += zi * e.value;
          if (e.row != e.col) dsk(e.col, e.row) += zi * e.value;
        }
      }
      out.ds[k] = 0.5 * (dsk + dsk.transpose()).eval();
      const Eigen::MatrixXd inner =
          Dtil[k] - sc[k].RinvT.transpose() * out.ds[k] * sc[k].RinvT;
      out.dlam[k] =
          sc[k].RinvT * (0.5 * (inner + inner.transpose())) * sc[k].RinvT.transpose();
      if (!out.ds[k].allFinite() || !out.dlam[k].allFinite()) return false;
    }
    return true;
  }

  double max_step(const std::vector<detail::Scaling>& sc, const Direction& dir) {
    double alpha = 1.0 / opts_.step_frac;  // allow full step after the 0.98 factor
    for (size_t k = 0; k < prog_.blocks.size(); ++k) {
      alpha = detail::max_psd_step(sc[k].Ls, dir.ds[k], alpha);
      alpha = detail::max_psd_step(sc[k].Lz, dir.dlam[k], alpha);
    }
    return alpha;
  }

  void finalize(const Eigen::VectorXd& z, const Eigen::VectorXd& nu,
                const std::vector<Eigen::MatrixXd>& s,
                const std::vector<Eigen::MatrixXd>& lam) {
    result_.z = z;
    result_.duals = lam;
    result_.eq_duals = Eigen::VectorXd::Zero(prog_.A.rows());
    for (size_t t = 0; t < kept_rows_.size(); ++t) {
      result_.eq_duals[kept_rows_[t]] = nu[static_cast<Eigen::Index>(t)];
    }
    // Recompute the reported residuals at the chosen iterate.
    const int K = static_cast<int>(prog_.blocks.size());
    double pres = Aeq_.rows() ? (Aeq_ * z - beq_).cwiseAbs().maxCoeff() / (1.0 + b_norm_)
                              : 0.0;
    double gapval = 0.0;
    for (int k = 0; k < K; ++k) {
      pres = std::max(pres, (prog_.blocks[k].eval(z) - s[k]).cwiseAbs().maxCoeff() /
                                (1.0 + data_norm_));
      gapval += s[k].cwiseProduct(lam[k]).sum();
    }
    Eigen::VectorXd rd = chat_ - Aeq_.transpose() * nu;
    for (int k = 0; k < K; ++k) {
      for (int i : active_[k]) rd[i] -= prog_.blocks[k].pair(i, lam[k]);
    }
    double logdet_s0 = 0.0;
    if (prog_.tau == 1) {
      logdet_s0 = sym_logdet(s[0]);
      gapval -= logdet_s0 + sym_logdet(lam[0]) + static_cast<double>(prog_.blocks[0].dim);
    }
    const double pobj = chat_.dot(z) - prog_.tau * logdet_s0;
    result_.primal_res = pres;
    result_.dual_res = prog_.num_vars ? rd.cwiseAbs().maxCoeff() / (1.0 + c_norm_) : 0.0;
    result_.gap = std::abs(gapval) / std::max(1.0, std::abs(pobj));
    result_.primal_obj = -pobj;
  }

  const ConicProgram& prog_;
  SolveOptions opts_;
  ConicSolution result_;

  Eigen::VectorXd chat_, zv_, nu_, beq_;
  Eigen::MatrixXd Aeq_, H_, HinvAt_, schur_;
  Eigen::LLT<Eigen::MatrixXd> hllt_;
  Eigen::LLT<Eigen::MatrixXd> sllt_;
  std::vector<Eigen::MatrixXd> s_, lam_;
  std::vector<std::vector<int>> active_;
  std::vector<Eigen::Index> kept_rows_;
  double c_norm_ = 0, b_norm_ = 0, data_norm_ = 0, pobj0_ = 0;
  int total_dim_ = 0;
  bool consistent_ = true;
};

inline ConicSolution solve(const ConicProgram& prog, const SolveOptions& opts = {}) {
  Solver solver(prog, opts);
  return solver.solve();
}

/// Rewrites phi_q maximization over an affine p x p information-matrix map
/// into solver form: D installs the map as the log-det block (must be the
/// first block added), A appends the Schur-complement trace epigraph, E
/// appends the spectral lower-bound block.
struct CriterionBlocks {
  int block_index = 0;
  std::vector<int> aux_vars;
};

inline CriterionBlocks reformulate_criterion(ConicProgram& prog,
                                             criteria::Criterion crit,
                                             const AffineBlock& m_block) {
  CriterionBlocks out;
  const int p = m_block.dim;
  switch (crit) {
    case criteria::Criterion::D: {
      if (!prog.blocks.empty()) {
        throw UnsupportedCriterion("log-det block must be the first block");
      }
      out.block_index = 0;
      prog.tau = 1;
      prog.blocks.push_back(m_block);
      prog.blocks.back().coeff.resize(static_cast<size_t>(prog.num_vars));
      return out;
    }
    case criteria::Criterion::A: {
      AffineBlock schur = AffineBlock::zero(2 * p, prog.num_vars);
      schur.constant.topLeftCorner(p, p) = m_block.constant;
      schur.constant.topRightCorner(p, p) = Eigen::MatrixXd::Identity(p, p);
      schur.constant.bottomLeftCorner(p, p) = Eigen::MatrixXd::Identity(p, p);
      for (int i = 0; i < prog.num_vars; ++i) {
        for (const auto& e : m_block.coeff[static_cast<size_t>(i)]) {
          schur.add(i, e.row, e.col, e.value);
        }
      }
      for (int a = 0; a < p; ++a) {
        for (int b2 = a; b2 < p; ++b2) {
          const int v = prog.add_variable(a == b2 ? -1.0 : 0.0);
          out.aux_vars.push_back(v);
          schur.coeff.resize(static_cast<size_t>(prog.num_vars));
          schur.add(v, p + a, p + b2, 1.0);
        }
      }
      out.block_index = static_cast<int>(prog.blocks.size());
      prog.blocks.push_back(std::move(schur));
      return out;
    }
    default: {
      const int t = prog.add_variable(1.0);
      out.aux_vars.push_back(t);
      AffineBlock spectral = m_block;
      spectral.coeff.resize(static_cast<size_t>(prog.num_vars));
      for (int a = 0; a < p; ++a) spectral.add(t, a, a, -1.0);
      out.block_index = static_cast<int>(prog.blocks.size());
      prog.blocks.push_back(std::move(spectral));
      return out;
    }
  }
}

/// Sparse SDPA-format dump of the linear part (the log-det term, if any, is
/// noted in a comment; equalities are exported as paired inequalities in a
/// diagonal block).
inline void write_sdpa(const ConicProgram& prog, const std::string& path) {
  std::ofstream f(path);
  f << "\"exported conic program";
  if (prog.tau == 1) f << "; objective additionally carries +logdet(block 1)";
  f << "\"\n";
  const bool has_eq = prog.b.size() > 0;
  const int nblocks = static_cast<int>(prog.blocks.size()) + (has_eq ? 1 : 0);
  f << prog.num_vars << " = mDIM\n" << nblocks << " = nBLOCK\n";
  for (size_t k = 0; k < prog.blocks.size(); ++k) {
    f << prog.blocks[k].dim << (k + 1 < prog.blocks.size() || has_eq ? " " : "");
  }
  if (has_eq) f << -2 * static_cast<int>(prog.b.size());
  f << " = bLOCKsTRUCT\n";
  // SDPA minimizes c.x with X(x) = sum x_i F_i - F_0, so negate the objective.
  for (int i = 0; i < prog.num_vars; ++i) f << -prog.c[i] << (i + 1 < prog.num_vars ? " " : "");
  f << "\n";
  auto emit = [&f](int var, int blk, int r, int c2, double v) {
    if (v != 0.0) f << var << " " << blk << " " << r + 1 << " " << c2 + 1 << " " << v << "\n";
  };
  for (size_t k = 0; k < prog.blocks.size(); ++k) {
    const auto& blk = prog.blocks[k];
    for (int r = 0; r < blk.dim; ++r) {
      for (int c2 = r; c2 < blk.dim; ++c2) {
        emit(0, static_cast<int>(k) + 1, r, c2, -blk.constant(r, c2));
      }
    }
    for (int i = 0; i < prog.num_vars; ++i) {
      for (const auto& e : blk.coeff[static_cast<size_t>(i)]) {
        emit(i + 1, static_cast<int>(k) + 1, e.row, e.col, e.value);
      }
    }
  }
  if (has_eq) {
    const int eb = static_cast<int>(prog.blocks.size()) + 1;
    for (Eigen::Index r = 0; r < prog.A.rows(); ++r) {
      emit(0, eb, 2 * static_cast<int>(r), 2 * static_cast<int>(r), prog.b[r]);
      emit(0, eb, 2 * static_cast<int>(r) + 1, 2 * static_cast<int>(r) + 1, -prog.b[r]);
      for (int i = 0; i < prog.num_vars; ++i) {
        emit(i + 1, eb, 2 * static_cast<int>(r), 2 * static_cast<int>(r), prog.A(r, i));
        emit(i + 1, eb, 2 * static_cast<int>(r) + 1, 2 * static_cast<int>(r) + 1,
             -prog.A(r, i));
      }
    }
  }
}

}  // namespace polydes::conic
