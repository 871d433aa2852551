#pragma once

// Shared test utilities: deterministic point generation and the independent
// oracles (finite differences, matrix exponential, two-trajectory divergence)
// that the library results are checked against.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "ehrenfest/integrate.hpp"
#include "ehrenfest/lorenz.hpp"

namespace testutil {

using ehrenfest::IntegratorConfig;
using ehrenfest::LorenzParams;
using ehrenfest::Mat3;
using ehrenfest::PhasePoint;

inline double urand(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double urange(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * urand(g);
}

inline PhasePoint random_point(std::mt19937_64& g, double lo, double hi) {
  return {urange(g, lo, hi), urange(g, lo, hi), urange(g, lo, hi)};
}

// Central-difference Jacobian of the public right-hand side.
inline Mat3 fd_jacobian(const PhasePoint& p, const LorenzParams& prm, double h = 1e-6) {
  Mat3 j;
  for (int k = 0; k < 3; ++k) {
    PhasePoint hi = p, lo = p;
    (k == 0 ? hi.p1 : k == 1 ? hi.p2 : hi.p3) += h;
    (k == 0 ? lo.p1 : k == 1 ? lo.p2 : lo.p3) -= h;
    const PhasePoint fh = ehrenfest::lorenz_rhs(hi, prm);
    const PhasePoint fl = ehrenfest::lorenz_rhs(lo, prm);
    j.m[0][k] = (fh.p1 - fl.p1) / (2.0 * h);
    j.m[1][k] = (fh.p2 - fl.p2) / (2.0 * h);
    j.m[2][k] = (fh.p3 - fl.p3) / (2.0 * h);
  }
  return j;
}

inline Mat3 mat_scale(const Mat3& a, double s) {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.m[i][j] = s * a.m[i][j];
  return r;
}

inline Mat3 mat_add(const Mat3& a, const Mat3& b) {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.m[i][j] = a.m[i][j] + b.m[i][j];
  return r;
}

inline double mat_max_abs(const Mat3& a) {
  double m = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m = std::max(m, std::abs(a.m[i][j]));
  return m;
}

inline double mat_max_diff(const Mat3& a, const Mat3& b) {
  double m = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m = std::max(m, std::abs(a.m[i][j] - b.m[i][j]));
  return m;
}

// Matrix exponential by scaling-and-squaring on the Taylor series; accurate
// to near machine precision for the moderate matrices used in tests.
inline Mat3 expm(const Mat3& a) {
  double nrm = 3.0 * mat_max_abs(a);  // cheap upper bound on the induced norm
  int s = 0;
  while (nrm > 0.5 && s < 60) {
    nrm *= 0.5;
    ++s;
  }
  const Mat3 b = mat_scale(a, std::ldexp(1.0, -s));
  Mat3 e = Mat3::identity();
  Mat3 term = Mat3::identity();
  for (int k = 1; k <= 60; ++k) {
    term = mat_scale(term * b, 1.0 / k);
    e = mat_add(e, term);
    if (mat_max_abs(term) < 1e-22) break;
  }
  for (int i = 0; i < s; ++i) e = e * e;
  return e;
}

// Independent largest-exponent estimate: two nearby trajectories, periodic
// renormalization of their separation. Shares no code with the tangent-map
// spectrum beyond the integrator itself.
inline double benettin_lambda_max(const PhasePoint& p0, const LorenzParams& prm,
                                  const IntegratorConfig& cfg, double transient,
                                  double total, double tau, double d0) {
  PhasePoint a = ehrenfest::flow_map(p0, prm, transient, cfg);
  PhasePoint b = a;
  b.p1 += d0;
  const std::size_t n = static_cast<std::size_t>((total - transient) / tau + 1e-9);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    a = ehrenfest::flow_map(a, prm, tau, cfg);
    b = ehrenfest::flow_map(b, prm, tau, cfg);
    const PhasePoint d = b - a;
    const double dist = d.norm();
    acc += std::log(dist / d0);
    b = a + (d0 / dist) * d;
  }
  return acc / (static_cast<double>(n) * tau);
}

inline double lsq_slope(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace testutil
