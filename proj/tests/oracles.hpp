#pragma once

// Independent numerical oracles used by the test suites. These deliberately
// avoid the library's own code paths wherever the quantity being checked has
// a classical alternative computation.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace oracles {

/// Coefficients (ascending powers) of the Legendre polynomial P_d via the
/// Bonnet recurrence, exact in double for small d.
inline std::vector<double> legendre_coeffs(int d) {
  std::vector<std::vector<double>> P(d + 1);
  P[0] = {1.0};
  if (d >= 1) P[1] = {0.0, 1.0};
  for (int k = 2; k <= d; ++k) {
    std::vector<double> cur(k + 1, 0.0);
    for (size_t i = 0; i < P[k - 1].size(); ++i) {
      cur[i + 1] += (2.0 * k - 1.0) / k * P[k - 1][i];
    }
    for (size_t i = 0; i < P[k - 2].size(); ++i) {
      cur[i] -= (k - 1.0) / k * P[k - 2][i];
    }
    P[k] = std::move(cur);
  }
  return P[d];
}

/// Real roots of a polynomial (ascending coefficients) via the companion
/// matrix eigenvalues, sorted ascending.
inline std::vector<double> companion_roots(std::vector<double> coeffs) {
  while (!coeffs.empty() && coeffs.back() == 0.0) coeffs.pop_back();
  const int deg = static_cast<int>(coeffs.size()) - 1;
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(deg, deg);
  for (int i = 0; i < deg; ++i) C(i, deg - 1) = -coeffs[i] / coeffs[deg];
  for (int i = 1; i < deg; ++i) C(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> eig(C);
  std::vector<double> roots;
  for (int i = 0; i < deg; ++i) {
    if (std::abs(eig.eigenvalues()[i].imag()) < 1e-9) {
      roots.push_back(eig.eigenvalues()[i].real());
    }
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

/// Support of the classical univariate D-optimal design of degree d:
/// the roots of (1 - t^2) P'_d(t).
inline std::vector<double> lobatto_support(int d) {
  std::vector<double> p = legendre_coeffs(d);
  std::vector<double> dp(p.size() - 1);
  for (size_t i = 1; i < p.size(); ++i) dp[i - 1] = p[i] * static_cast<double>(i);
  // (1 - t^2) * P'_d(t)
  std::vector<double> full(dp.size() + 2, 0.0);
  for (size_t i = 0; i < dp.size(); ++i) {
    full[i] += dp[i];
    full[i + 2] -= dp[i];
  }
  return companion_roots(full);
}

inline Eigen::MatrixXd random_spd(int p, std::mt19937_64& rng, double shift = 0.5) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd B(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) B(i, j) = g(rng);
  return B * B.transpose() + shift * Eigen::MatrixXd::Identity(p, p);
}

/// Central finite-difference gradient of f over symmetric matrices:
/// entry (i, j) is d f / d M_ij holding M_ji = M_ij.
inline Eigen::MatrixXd fd_gradient(const std::function<double(const Eigen::MatrixXd&)>& f,
                                   const Eigen::MatrixXd& M, double h = 1e-5) {
  const int p = static_cast<int>(M.rows());
  Eigen::MatrixXd G(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = i; j < p; ++j) {
      Eigen::MatrixXd E = Eigen::MatrixXd::Zero(p, p);
      E(i, j) = 1.0;
      E(j, i) = 1.0;
      const double fp = f(M + h * E);
      const double fm = f(M - h * E);
      const double dir = (fp - fm) / (2.0 * h);
      // dir = <G, E> = 2 G_ij off the diagonal, G_ii on it.
      G(i, j) = (i == j) ? dir : 0.5 * dir;
      G(j, i) = G(i, j);
    }
  }
  return G;
}

/// phi values computed directly from eigenvalues, independent of the library.
inline double phi_d_direct(const Eigen::MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
  double logdet = 0.0;
  for (int i = 0; i < eig.eigenvalues().size(); ++i) logdet += std::log(eig.eigenvalues()[i]);
  return std::exp(logdet / static_cast<double>(M.rows()));
}

inline double phi_a_direct(const Eigen::MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
  double tr = 0.0;
  for (int i = 0; i < eig.eigenvalues().size(); ++i) tr += 1.0 / eig.eigenvalues()[i];
  return static_cast<double>(M.rows()) / tr;
}

inline double phi_e_direct(const Eigen::MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
  return eig.eigenvalues().minCoeff();
}

}  // namespace oracles
