#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "polydes/errors.hpp"
#include "polydes/moments.hpp"
#include "polydes/polybasis.hpp"

namespace polydes::criteria {

using moments::MomentSequence;
using polybasis::Polynomial;
using polybasis::RegressionBasis;

/// Kiefer phi_q family: D is q = 0, A is q = -1, E is q = -infinity.
enum class Criterion { D, A, E };

inline Criterion criterion_from_string(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (s == "D") return Criterion::D;
  if (s == "A") return Criterion::A;
  if (s == "E") return Criterion::E;
  throw UnsupportedCriterion("criterion must be one of D, A, E; got '" + s + "'");
}

inline std::string to_string(Criterion c) {
  switch (c) {
    case Criterion::D: return "D";
    case Criterion::A: return "A";
    default: return "E";
  }
}

/// M = A M_d(y) A^T, the p x p information matrix of the design behind y.
struct InformationMatrix {
  Eigen::MatrixXd entries;
  int p() const { return static_cast<int>(entries.rows()); }
};

inline InformationMatrix information_matrix(const MomentSequence& y,
                                            const RegressionBasis& basis, int d) {
  const Eigen::MatrixXd md = moments::moment_matrix(y, d).entries;
  if (basis.matrix_A.cols() != md.rows()) {
    throw DimensionMismatch("regression basis does not match s(d)");
  }
  InformationMatrix m;
  m.entries = basis.matrix_A * md * basis.matrix_A.transpose();
  m.entries = 0.5 * (m.entries + m.entries.transpose()).eval();
  return m;
}

namespace detail {

inline void require_symmetric(const Eigen::MatrixXd& M) {
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw NonSymmetricInput("matrix is not symmetric");
  }
}

}  // namespace detail

/// Symmetric power M^q via eigendecomposition. Eigenvalues below
/// 1e-12 * lambda_max raise SingularMatrix.
inline Eigen::MatrixXd matrix_power_sym(const Eigen::MatrixXd& M, double q) {
  detail::require_symmetric(M);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const double lmax = ev.cwiseAbs().maxCoeff();
  Eigen::VectorXd powered(ev.size());
  for (int i = 0; i < ev.size(); ++i) {
    if (ev[i] <= 1e-12 * lmax) throw SingularMatrix("matrix power of singular matrix");
    powered[i] = std::pow(ev[i], q);
  }
  return eig.eigenvectors() * powered.asDiagonal() * eig.eigenvectors().transpose();
}

/// phi_q(M): D -> det(M)^{1/p}, A -> p / trace(M^{-1}), E -> lambda_min.
/// Singular PSD inputs evaluate to 0 for all three.
inline double phi(const InformationMatrix& M, Criterion c) {
  detail::require_symmetric(M.entries);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M.entries);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const int p = M.p();
  const double lmax = std::max(ev.maxCoeff(), 0.0);
  const bool singular = ev.minCoeff() <= 1e-12 * lmax;
  switch (c) {
    case Criterion::D: {
      if (singular) return 0.0;
      double logdet = 0.0;
      for (int i = 0; i < p; ++i) logdet += std::log(ev[i]);
      return std::exp(logdet / p);
    }
    case Criterion::A: {
      if (singular) return 0.0;
      double tr_inv = 0.0;
      for (int i = 0; i < p; ++i) tr_inv += 1.0 / ev[i];
      return p / tr_inv;
    }
    default:
      return std::max(ev.minCoeff(), 0.0);
  }
}

/// Least eigenvalue, its unit eigenvector and multiplicity (eigenvalues
/// within 1e-8 of the least one).
struct EOptCertificate {
  double eigenvalue = 0.0;
  Eigen::VectorXd u;
  int multiplicity = 1;
};

inline EOptCertificate eopt_certificate(const InformationMatrix& M) {
  detail::require_symmetric(M.entries);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M.entries);
  EOptCertificate cert;
  cert.eigenvalue = eig.eigenvalues()[0];
  cert.u = eig.eigenvectors().col(0);
  cert.multiplicity = 0;
  for (int i = 0; i < eig.eigenvalues().size(); ++i) {
    if (eig.eigenvalues()[i] - cert.eigenvalue < 1e-8) ++cert.multiplicity;
  }
  // Deterministic sign: first significant component positive.
  for (int i = 0; i < cert.u.size(); ++i) {
    if (std::abs(cert.u[i]) > 1e-8) {
      if (cert.u[i] < 0.0) cert.u = -cert.u;
      break;
    }
  }
  return cert;
}

/// Gradient of phi_q. D: (1/p) det(M)^{1/p} M^{-1}. A: p (trace(M^{-1}) M)^{-2}.
/// E: u u^T for the least eigenvector u; a near-multiple least eigenvalue
/// (gap < 1e-8) sets *multiplicity_warning and returns one subgradient.
inline Eigen::MatrixXd grad_phi(const InformationMatrix& M, Criterion c,
                                bool* multiplicity_warning = nullptr) {
  if (multiplicity_warning) *multiplicity_warning = false;
  const int p = M.p();
  switch (c) {
    case Criterion::D: {
      const Eigen::MatrixXd inv = matrix_power_sym(M.entries, -1.0);
      return (phi(M, Criterion::D) / p) * inv;
    }
    case Criterion::A: {
      const Eigen::MatrixXd inv = matrix_power_sym(M.entries, -1.0);
      const double tr_inv = inv.trace();
      return (p / (tr_inv * tr_inv)) * (inv * inv);
    }
    default: {
      EOptCertificate cert = eopt_certificate(M);
      if (cert.multiplicity > 1 && multiplicity_warning) *multiplicity_warning = true;
      return cert.u * cert.u.transpose();
    }
  }
}

/// Kernel K with p_d*(x) = F(x)^T K F(x): K = M^{q-1} for D and A, and the
/// least-eigenvector projector for E.
struct ChristoffelPolynomial {
  Eigen::MatrixXd kernel;
  int degree = 0;
};

inline ChristoffelPolynomial christoffel(const MomentSequence& y,
                                         const RegressionBasis& basis, int d,
                                         Criterion c) {
  const InformationMatrix M = information_matrix(y, basis, d);
  ChristoffelPolynomial K;
  K.degree = 2 * d;
  switch (c) {
    case Criterion::D: K.kernel = matrix_power_sym(M.entries, -1.0); break;
    case Criterion::A: K.kernel = matrix_power_sym(M.entries, -2.0); break;
    default: {
      EOptCertificate cert = eopt_certificate(M);
      K.kernel = cert.u * cert.u.transpose();
    }
  }
  return K;
}

inline double christoffel_value(const ChristoffelPolynomial& K,
                                const RegressionBasis& basis,
                                const Eigen::VectorXd& x) {
  const Eigen::VectorXd f = polybasis::regression_vector(basis, x, K.degree / 2);
  return f.dot(K.kernel * f);
}

/// Constant part of p*: trace(M^q), specialized per criterion.
inline double dual_polynomial_level(const MomentSequence& y,
                                    const RegressionBasis& basis, int d, Criterion c) {
  const InformationMatrix M = information_matrix(y, basis, d);
  switch (c) {
    case Criterion::D: return static_cast<double>(M.p());
    case Criterion::A: return matrix_power_sym(M.entries, -1.0).trace();
    default: return eopt_certificate(M).eigenvalue;
  }
}

/// p*(x) = trace(M^q) - p_d*(x); for E this is lambda_min - (u^T F(x))^2.
inline double dual_polynomial_value(const MomentSequence& y,
                                    const RegressionBasis& basis, Criterion c,
                                    const Eigen::VectorXd& x, int d) {
  const ChristoffelPolynomial K = christoffel(y, basis, d, c);
  return dual_polynomial_level(y, basis, d, c) - christoffel_value(K, basis, x);
}

/// p* as an explicit polynomial of degree 2d (for Riesz pairings and
/// recovery objectives).
inline Polynomial dual_polynomial(const MomentSequence& y,
                                  const RegressionBasis& basis, Criterion c, int d) {
  const ChristoffelPolynomial K = christoffel(y, basis, d, c);
  const Eigen::MatrixXd pulled =
      basis.matrix_A.transpose() * K.kernel * basis.matrix_A;
  const auto& B = moments::basis_matrices(y.n, d);
  const auto& b2d = polybasis::enumerate_monomials(y.n, 2 * d);
  Polynomial p(y.n);
  p.add_term(polybasis::Exponents(y.n, 0), dual_polynomial_level(y, basis, d, c));
  for (int a = 0; a < b2d.size(); ++a) {
    const double coeff = (B[a].cwiseProduct(pulled)).sum();
    p.add_term(b2d.order[a].exponents, -coeff);
  }
  return p;
}

}  // namespace polydes::criteria
