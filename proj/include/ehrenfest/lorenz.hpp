#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "ehrenfest/errors.hpp"

namespace ehrenfest {

/// Parameters of the quadratic force field: sigma and beta must be positive,
/// tau may have either sign. All three are dimensionless.
struct LorenzParams {
  double sigma = 10.0;
  double tau = 28.0;
  double beta = 8.0 / 3.0;

  void validate() const {
    if (!(std::isfinite(sigma) && std::isfinite(tau) && std::isfinite(beta)))
      throw InvalidArgument("LorenzParams: parameters must be finite");
    if (!(sigma > 0.0)) throw InvalidArgument("LorenzParams: sigma must be > 0");
    if (!(beta > 0.0)) throw InvalidArgument("LorenzParams: beta must be > 0");
  }

  bool operator==(const LorenzParams&) const = default;
};

/// A point of the classical momentum-space flow.
struct PhasePoint {
  double p1 = 0.0;
  double p2 = 0.0;
  double p3 = 0.0;

  bool finite() const {
    return std::isfinite(p1) && std::isfinite(p2) && std::isfinite(p3);
  }
  double norm() const { return std::sqrt(p1 * p1 + p2 * p2 + p3 * p3); }

  bool operator==(const PhasePoint&) const = default;
};

inline PhasePoint operator+(PhasePoint a, PhasePoint b) {
  return {a.p1 + b.p1, a.p2 + b.p2, a.p3 + b.p3};
}
inline PhasePoint operator-(PhasePoint a, PhasePoint b) {
  return {a.p1 - b.p1, a.p2 - b.p2, a.p3 - b.p3};
}
inline PhasePoint operator*(double s, PhasePoint a) {
  return {s * a.p1, s * a.p2, s * a.p3};
}
inline PhasePoint& operator+=(PhasePoint& a, PhasePoint b) {
  a.p1 += b.p1;
  a.p2 += b.p2;
  a.p3 += b.p3;
  return a;
}

/// The reflection (p1,p2,p3) -> (-p1,-p2,p3); the vector field is equivariant
/// under it.
inline PhasePoint mirror(PhasePoint p) { return {-p.p1, -p.p2, p.p3}; }

/// Row-major 3x3 matrix. As a Jacobian, row i is the gradient of component i
/// of the vector field.
struct Mat3 {
  std::array<std::array<double, 3>, 3> m{};

  static Mat3 identity() {
    Mat3 r;
    r.m[0][0] = r.m[1][1] = r.m[2][2] = 1.0;
    return r;
  }

  // Summed left to right so the identity trace == -(sigma + 1 + beta) is exact
  // in floating point.
  double trace() const { return m[0][0] + m[1][1] + m[2][2]; }

  double det() const {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
           m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  }

  bool finite() const {
    for (const auto& row : m)
      for (double v : row)
        if (!std::isfinite(v)) return false;
    return true;
  }

  std::array<double, 3> col(int j) const { return {m[0][j], m[1][j], m[2][j]}; }
  void set_col(int j, const std::array<double, 3>& c) {
    m[0][j] = c[0];
    m[1][j] = c[1];
    m[2][j] = c[2];
  }

  bool operator==(const Mat3&) const = default;
};

using JacobianMatrix = Mat3;

inline Mat3 operator*(const Mat3& a, const Mat3& b) {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      r.m[i][j] = a.m[i][0] * b.m[0][j] + a.m[i][1] * b.m[1][j] + a.m[i][2] * b.m[2][j];
  return r;
}

inline PhasePoint operator*(const Mat3& a, PhasePoint p) {
  return {a.m[0][0] * p.p1 + a.m[0][1] * p.p2 + a.m[0][2] * p.p3,
          a.m[1][0] * p.p1 + a.m[1][1] * p.p2 + a.m[1][2] * p.p3,
          a.m[2][0] * p.p1 + a.m[2][1] * p.p2 + a.m[2][2] * p.p3};
}

namespace detail {

// Unchecked evaluation; callers validate inputs and watch for non-finite
// states.
inline PhasePoint rhs(const PhasePoint& p, const LorenzParams& prm) noexcept {
  return {prm.sigma * (p.p2 - p.p1),
          p.p1 * (prm.tau - p.p3) - p.p2,
          p.p1 * p.p2 - prm.beta * p.p3};
}

inline Mat3 jacobian(const PhasePoint& p, const LorenzParams& prm) noexcept {
  Mat3 j;
  j.m[0] = {-prm.sigma, prm.sigma, 0.0};
  j.m[1] = {prm.tau - p.p3, -1.0, -p.p1};
  j.m[2] = {p.p2, p.p1, -prm.beta};
  return j;
}

}  // namespace detail

/// Vector field of the momentum flow:
///   (sigma (p2 - p1), p1 (tau - p3) - p2, p1 p2 - beta p3).
inline PhasePoint lorenz_rhs(const PhasePoint& p, const LorenzParams& prm) {
  prm.validate();
  if (!p.finite()) throw InvalidState("lorenz_rhs: non-finite phase point");
  return detail::rhs(p, prm);
}

/// Jacobian of lorenz_rhs. Its trace is -(sigma + 1 + beta) at every point.
inline Mat3 lorenz_jacobian(const PhasePoint& p, const LorenzParams& prm) {
  prm.validate();
  if (!p.finite()) throw InvalidState("lorenz_jacobian: non-finite phase point");
  return detail::jacobian(p, prm);
}

/// Equilibria of the field: the origin always; for tau > 1 additionally
/// C+- = (+-s, +-s, tau - 1) with s = sqrt(beta (tau - 1)).
inline std::vector<PhasePoint> fixed_points(const LorenzParams& prm) {
  prm.validate();
  std::vector<PhasePoint> pts{{0.0, 0.0, 0.0}};
  if (prm.tau > 1.0) {
    const double z = prm.tau - 1.0;
    const double s = std::sqrt(prm.beta * z);
    pts.push_back({s, s, z});
    pts.push_back({-s, -s, z});
  }
  return pts;
}

/// I(p) = p1^2 - 2 sigma p3. Along trajectories dI/dt = -2 sigma I exactly
/// when beta = 2 sigma, so I decays as exp(-2 sigma t) in that regime.
inline double kus_invariant(const PhasePoint& p, const LorenzParams& prm) {
  return p.p1 * p.p1 - 2.0 * prm.sigma * p.p3;
}

}  // namespace ehrenfest
