#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ehrenfest/errors.hpp"

namespace ehrenfest {

/// One-dimensional quadrature rule for averages against a standard normal
/// factor: E[f] ~= sum_i weights[i] * f(nodes[i]) with the nodes drawn from
/// the weight exp(-x^2), i.e. a normal of variance 1/2. Weights sum to 1.
struct QuadratureRule {
  std::vector<double> nodes;    // ascending, symmetric about 0
  std::vector<double> weights;  // positive, normalized
};

/// Gauss-Hermite rule of the given order. Nodes are the roots of the degree-n
/// Hermite polynomial (physicists' convention), found by Newton iteration on
/// the orthonormal three-term recurrence; weights are the Christoffel numbers
/// normalized to unit total mass.
inline QuadratureRule gauss_hermite_rule(int order) {
  if (order < 1)
    throw InvalidArgument("gauss_hermite_rule: order must be >= 1");
  const int n = order;
  const double pim4 = 0.7511255444649425;  // pi^(-1/4), value of p_0
  constexpr double eps = 1e-14;
  constexpr int max_iter = 100;

  QuadratureRule rule;
  rule.nodes.assign(static_cast<std::size_t>(n), 0.0);
  rule.weights.assign(static_cast<std::size_t>(n), 0.0);

  // Evaluates p_n and p_{n-1} at z via the orthonormal recurrence
  //   p_{k+1}(z) = z*sqrt(2/(k+1)) p_k(z) - sqrt(k/(k+1)) p_{k-1}(z).
  auto recur = [n, pim4](double z, double& pn, double& pnm1) {
    double p1 = pim4, p2 = 0.0;
    for (int j = 0; j < n; ++j) {
      const double p3 = p2;
      p2 = p1;
      p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
    }
    pn = p1;
    pnm1 = p2;
  };

  const int m = (n + 1) / 2;  // roots >= 0, found from the largest down
  std::vector<double> upper(static_cast<std::size_t>(m), 0.0);
  double z = 0.0;
  for (int i = 0; i < m; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * upper[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * upper[1];
    } else {
      z = 2.0 * z - upper[static_cast<std::size_t>(i - 2)];
    }

    bool converged = false;
    for (int it = 0; it < max_iter; ++it) {
      double pn, pnm1;
      recur(z, pn, pnm1);
      const double deriv = std::sqrt(2.0 * n) * pnm1;  // p_n'(z)
      const double dz = pn / deriv;
      z -= dz;
      if (std::abs(dz) <= eps * std::max(1.0, std::abs(z))) {
        converged = true;
        break;
      }
    }
    if (!converged)
      throw NonConvergence("gauss_hermite_rule: Newton iteration stalled for order " +
                               std::to_string(n),
                           0.0);
    if (n % 2 == 1 && i == m - 1) z = 0.0;  // center the middle root exactly
    upper[static_cast<std::size_t>(i)] = z;

    double pn, pnm1;
    recur(z, pn, pnm1);
    const double deriv = std::sqrt(2.0 * n) * pnm1;
    const double w = 2.0 / (deriv * deriv);  // Christoffel weight, mass sqrt(pi)

    // hi == lo for the middle root of an odd rule; assign -z first so the
    // stored middle node is +0.0, not -0.0.
    const std::size_t hi = static_cast<std::size_t>(n - 1 - i);
    const std::size_t lo = static_cast<std::size_t>(i);
    rule.nodes[lo] = -z;
    rule.nodes[hi] = z;
    rule.weights[lo] = w;
    rule.weights[hi] = w;
  }

  double total = 0.0;
  for (double w : rule.weights) total += w;
  for (double& w : rule.weights) w /= total;
  return rule;
}

}  // namespace ehrenfest
