#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "polydes/errors.hpp"
#include "polydes/polybasis.hpp"

namespace polydes::semialg {

using polybasis::Exponents;
using polybasis::Polynomial;

/// X = {x in R^n : g_j(x) >= 0 for all j}, closed and basic semi-algebraic.
/// A constraint of the exact form R^2 - sum x_i^2 >= 0 certifies compactness.
struct SemiAlgebraicSet {
  int n = 0;
  std::vector<Polynomial> inequalities;
  std::optional<double> ball_radius;

  int degree(int j) const { return inequalities[j].degree(); }
  int half_degree(int j) const { return (degree(j) + 1) / 2; }
  int max_half_degree() const {
    int v = 0;
    for (size_t j = 0; j < inequalities.size(); ++j) {
      v = std::max(v, half_degree(static_cast<int>(j)));
    }
    return v;
  }
};

namespace detail {

/// Radius R when g == R^2 - sum x_i^2, otherwise nullopt.
inline std::optional<double> ball_form_radius(const Polynomial& g, int n) {
  double r2 = 0.0;
  int squares = 0;
  for (const auto& [a, c] : g.terms) {
    int deg = 0, nonzero = -1;
    for (int i = 0; i < n; ++i) {
      deg += a[i];
      if (a[i] > 0) nonzero = i;
    }
    if (deg == 0) {
      r2 = c;
    } else if (deg == 2 && a[nonzero] == 2) {
      if (std::abs(c + 1.0) > 1e-12) return std::nullopt;
      ++squares;
    } else {
      return std::nullopt;
    }
  }
  if (squares != n || r2 <= 0.0) return std::nullopt;
  return std::sqrt(r2);
}

}  // namespace detail

/// Ensures the constraint list carries a compactness certificate, appending
/// the redundant ball R^2 - |x|^2 >= 0 when a radius hint is supplied.
inline SemiAlgebraicSet validate_archimedean(
    SemiAlgebraicSet set, std::optional<double> radius_hint = std::nullopt) {
  if (set.inequalities.empty()) {
    throw DimensionMismatch("semi-algebraic set needs at least one inequality");
  }
  for (const auto& g : set.inequalities) {
    if (auto r = detail::ball_form_radius(g, set.n)) {
      set.ball_radius = *r;
      return set;
    }
  }
  if (!radius_hint) {
    throw MissingCompactnessCertificate(
        "no constraint of the form R^2 - |x|^2 >= 0 and no radius hint");
  }
  if (*radius_hint <= 0.0) {
    throw DimensionMismatch("radius hint must be positive");
  }
  Polynomial ball = Polynomial::constant(set.n, *radius_hint * *radius_hint);
  for (int i = 0; i < set.n; ++i) {
    Exponents a(set.n, 0);
    a[i] = 2;
    ball.add_term(a, -1.0);
  }
  set.inequalities.push_back(std::move(ball));
  set.ball_radius = *radius_hint;
  return set;
}

inline bool membership(const SemiAlgebraicSet& set, const Eigen::VectorXd& x,
                       double tol = 1e-8) {
  if (x.size() != set.n) throw DimensionMismatch("point dimension != set dimension");
  for (const auto& g : set.inequalities) {
    if (g.eval(x) < -tol) return false;
  }
  return true;
}

/// Indices (i, j) with g_i == -g_j; such a pair encodes g_i == 0 on X.
inline std::vector<std::pair<int, int>> equality_pairs(const SemiAlgebraicSet& set) {
  std::vector<std::pair<int, int>> pairs;
  const int m = static_cast<int>(set.inequalities.size());
  std::vector<bool> used(m, false);
  for (int i = 0; i < m; ++i) {
    if (used[i]) continue;
    for (int j = i + 1; j < m; ++j) {
      if (used[j]) continue;
      const Polynomial sum = set.inequalities[i] + set.inequalities[j];
      double mag = 0.0, ref = 0.0;
      for (const auto& [a, c] : sum.terms) mag = std::max(mag, std::abs(c));
      for (const auto& [a, c] : set.inequalities[i].terms) ref = std::max(ref, std::abs(c));
      if (mag <= 1e-12 * std::max(1.0, ref)) {
        pairs.emplace_back(i, j);
        used[i] = used[j] = true;
        break;
      }
    }
  }
  return pairs;
}

struct SampleStats {
  std::int64_t attempts = 0;
  std::int64_t accepted = 0;
};

/// Deterministic-for-seed points of X. Full-dimensional sets use rejection
/// from the bounding box; a set with an equality pair is sampled by radial
/// root-finding onto the variety.
inline std::vector<Eigen::VectorXd> sample_points(const SemiAlgebraicSet& set,
                                                  int count, std::uint64_t seed,
                                                  SampleStats* stats = nullptr) {
  if (!set.ball_radius) {
    throw MissingCompactnessCertificate("sample_points requires a validated set");
  }
  if (count < 1) throw DimensionMismatch("count must be >= 1");
  const double R = *set.ball_radius;
  const auto pairs = equality_pairs(set);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> box(-R, R);
  std::vector<Eigen::VectorXd> out;
  out.reserve(count);
  SampleStats local;
  SampleStats& st = stats ? *stats : local;

  auto budget_check = [&]() {
    if (st.attempts > 1000000 &&
        st.accepted < 1e-6 * static_cast<double>(st.attempts)) {
      throw SamplingExhausted("acceptance rate below 1e-6");
    }
    if (st.attempts > static_cast<std::int64_t>(4000000) * (1 + count / 64)) {
      throw SamplingExhausted("retry budget exceeded");
    }
  };

  if (pairs.empty()) {
    while (static_cast<int>(out.size()) < count) {
      ++st.attempts;
      budget_check();
      Eigen::VectorXd x(set.n);
      for (int i = 0; i < set.n; ++i) x[i] = box(rng);
      if (membership(set, x, 0.0)) {
        ++st.accepted;
        out.push_back(std::move(x));
      }
    }
    return out;
  }

  if (pairs.size() > 1) {
    throw SamplingExhausted("sampling supports at most one equality pair");
  }
  const Polynomial& h = set.inequalities[pairs[0].first];
  while (static_cast<int>(out.size()) < count) {
    ++st.attempts;
    budget_check();
    Eigen::VectorXd dir(set.n);
    for (int i = 0; i < set.n; ++i) dir[i] = box(rng);
    const double norm = dir.norm();
    if (norm < 1e-9) continue;
    dir /= norm;
    // Scan the ray t*dir for a sign change of h, then bisect.
    const int K = 64;
    double t_lo = 0.0, t_hi = -1.0;
    double f_lo = h.eval(Eigen::VectorXd::Zero(set.n));
    for (int k = 1; k <= K; ++k) {
      const double t = R * static_cast<double>(k) / K;
      const double f = h.eval((t * dir).eval());
      if (f == 0.0) {
        t_lo = t_hi = t;
        break;
      }
      if ((f_lo < 0.0) != (f < 0.0)) {
        t_hi = t;
        break;
      }
      t_lo = t;
      f_lo = f;
    }
    if (t_hi < 0.0) continue;
    for (int it = 0; it < 100 && t_hi > t_lo; ++it) {
      const double mid = 0.5 * (t_lo + t_hi);
      const double f = h.eval((mid * dir).eval());
      if (f == 0.0) {
        t_lo = t_hi = mid;
        break;
      }
      if ((f < 0.0) == (f_lo < 0.0)) {
        t_lo = mid;
        f_lo = f;
      } else {
        t_hi = mid;
      }
    }
    Eigen::VectorXd x = 0.5 * (t_lo + t_hi) * dir;
    if (membership(set, x, 1e-12)) {
      ++st.accepted;
      out.push_back(std::move(x));
    }
  }
  return out;
}

/// Named design spaces used across examples and tests.
inline SemiAlgebraicSet preset(const std::string& name) {
  using polybasis::Polynomial;
  auto var = [](int n, int i) { return Polynomial::variable(n, i); };
  auto sq = [&](int n, int i) {
    Exponents a(n, 0);
    a[i] = 2;
    return Polynomial::monomial(std::move(a));
  };

  SemiAlgebraicSet s;
  if (name == "interval") {
    s.n = 1;
    s.inequalities = {Polynomial::constant(1, 1.0) - sq(1, 0)};
    return validate_archimedean(std::move(s));
  }
  if (name == "wynn_polygon") {
    s.n = 2;
    const double c = std::sqrt(2.0);
    s.inequalities = {
        var(2, 0) + Polynomial::constant(2, c / 4.0),
        var(2, 1) + Polynomial::constant(2, c / 4.0),
        var(2, 1) * (1.0 / 3.0) + Polynomial::constant(2, c / 3.0) - var(2, 0),
        var(2, 0) * (1.0 / 3.0) + Polynomial::constant(2, c / 3.0) - var(2, 1),
    };
    return validate_archimedean(std::move(s), 1.0);
  }
  if (name == "ellipse_ring") {
    s.n = 2;
    s.inequalities = {
        Polynomial::constant(2, 7.3) - sq(2, 0) * 9.0 - sq(2, 1) * 13.0,
        sq(2, 0) * 5.0 + sq(2, 1) * 13.0 - Polynomial::constant(2, 2.0),
    };
    return validate_archimedean(std::move(s), std::sqrt(7.3 / 9.0));
  }
  if (name == "moon") {
    s.n = 2;
    Polynomial x1 = var(2, 0);
    Polynomial inner = (x1 + Polynomial::constant(2, 0.2));
    Polynomial outer = (x1 - Polynomial::constant(2, 0.6));
    s.inequalities = {
        Polynomial::constant(2, 0.36) - inner * inner - sq(2, 1),
        outer * outer + sq(2, 1) - Polynomial::constant(2, 0.16),
    };
    return validate_archimedean(std::move(s), 0.8);
  }
  if (name == "folium") {
    s.n = 2;
    Polynomial x1 = var(2, 0);
    Polynomial norm2 = sq(2, 0) + sq(2, 1);
    Polynomial f = -(x1 * (sq(2, 0) - sq(2, 1) * 2.0)) - norm2 * norm2;
    s.inequalities = {f, Polynomial::constant(2, 1.0) - norm2};
    return validate_archimedean(std::move(s));
  }
  if (name == "sphere3d") {
    s.n = 3;
    Polynomial g = Polynomial::constant(3, 1.0) - sq(3, 0) - sq(3, 1) - sq(3, 2);
    s.inequalities = {g, -g};
    return validate_archimedean(std::move(s));
  }
  throw ParseError("unknown preset '" + name + "'");
}

inline std::vector<std::string> preset_names() {
  return {"interval", "wynn_polygon", "ellipse_ring", "moon", "folium", "sphere3d"};
}

}  // namespace polydes::semialg
