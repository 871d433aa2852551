#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ehrenfest/errors.hpp"
#include "ehrenfest/integrate.hpp"
#include "ehrenfest/lorenz.hpp"
#include "ehrenfest/parallel.hpp"
#include "ehrenfest/quadrature.hpp"

namespace ehrenfest {

enum class PacketKind { gaussian, dirac, samples };

/// Initial momentum distribution |psi(p)|^2: a product Gaussian with
/// per-component standard deviations, its zero-width (point mass) limit, or
/// an explicit list of equally weighted sample points.
struct WavepacketSpec {
  PacketKind kind = PacketKind::gaussian;
  PhasePoint center{};
  PhasePoint widths{1e-2, 1e-2, 1e-2};
  std::vector<PhasePoint> points{};

  static WavepacketSpec gaussian(const PhasePoint& center, const PhasePoint& widths) {
    WavepacketSpec s;
    s.kind = PacketKind::gaussian;
    s.center = center;
    s.widths = widths;
    s.validate();
    return s;
  }
  static WavepacketSpec isotropic_gaussian(const PhasePoint& center, double width) {
    return gaussian(center, PhasePoint{width, width, width});
  }
  static WavepacketSpec dirac(const PhasePoint& center) {
    WavepacketSpec s;
    s.kind = PacketKind::dirac;
    s.center = center;
    s.validate();
    return s;
  }
  static WavepacketSpec samples(std::vector<PhasePoint> pts) {
    WavepacketSpec s;
    s.kind = PacketKind::samples;
    s.points = std::move(pts);
    s.validate();
    return s;
  }

  void validate() const {
    switch (kind) {
      case PacketKind::gaussian:
        if (!center.finite()) throw InvalidArgument("wavepacket: non-finite center");
        if (!widths.finite() || !(widths.p1 > 0.0 && widths.p2 > 0.0 && widths.p3 > 0.0))
          throw InvalidArgument("wavepacket: widths must be finite and > 0");
        return;
      case PacketKind::dirac:
        if (!center.finite()) throw InvalidArgument("wavepacket: non-finite center");
        return;
      case PacketKind::samples:
        if (points.empty()) throw InvalidArgument("wavepacket: empty sample list");
        for (const auto& p : points)
          if (!p.finite()) throw InvalidArgument("wavepacket: non-finite sample point");
        return;
    }
    throw InvalidArgument("wavepacket: unknown kind");
  }
};

enum class SchemeKind { gauss_hermite, monte_carlo };

/// How a Gaussian packet is discretized: a tensor-product Gauss-Hermite grid
/// (order must be odd so the packet center is itself a node) or seeded
/// Monte Carlo draws.
struct QuadratureScheme {
  SchemeKind kind = SchemeKind::gauss_hermite;
  int order = 9;
  std::size_t n_samples = 4096;
  std::uint64_t seed = 0;

  static QuadratureScheme gauss_hermite(int order) {
    QuadratureScheme s;
    s.kind = SchemeKind::gauss_hermite;
    s.order = order;
    s.validate();
    return s;
  }
  static QuadratureScheme monte_carlo(std::size_t n, std::uint64_t seed) {
    QuadratureScheme s;
    s.kind = SchemeKind::monte_carlo;
    s.n_samples = n;
    s.seed = seed;
    s.validate();
    return s;
  }

  void validate() const {
    if (kind == SchemeKind::gauss_hermite) {
      if (order < 1 || order % 2 == 0)
        throw InvalidArgument("quadrature scheme: gauss-hermite order must be odd and >= 1");
    } else {
      if (n_samples < 1)
        throw InvalidArgument("quadrature scheme: monte-carlo needs n_samples >= 1");
    }
  }

  bool operator==(const QuadratureScheme&) const = default;
};

/// n deterministic draws from |psi(p)|^2: Box-Muller transforms of
/// mt19937_64(seed) for a Gaussian packet, n copies of the center for a Dirac
/// packet, and uniform resampling (with replacement) for a sample list.
inline std::vector<PhasePoint> sample_density(const WavepacketSpec& spec, std::size_t n,
                                              std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw InvalidArgument("sample_density: n must be >= 1");
  std::vector<PhasePoint> out;
  out.reserve(n);
  if (spec.kind == PacketKind::dirac) {
    out.assign(n, spec.center);
    return out;
  }
  std::mt19937_64 eng(seed);
  if (spec.kind == PacketKind::samples) {
    const std::size_t m = spec.points.size();
    for (std::size_t i = 0; i < n; ++i)
      out.push_back(spec.points[static_cast<std::size_t>(eng() % m)]);
    return out;
  }
  const PhasePoint& c = spec.center;
  const PhasePoint& w = spec.widths;
  auto u01 = [&eng] { return static_cast<double>(eng() >> 11) * 0x1.0p-53; };
  constexpr double two_pi = 6.283185307179586476925287;
  for (std::size_t i = 0; i < n; ++i) {
    // Box-Muller; log1p(-u) keeps the argument strictly positive for u in [0,1).
    const double u1 = u01(), u2 = u01(), u3 = u01(), u4 = u01();
    const double r12 = std::sqrt(-2.0 * std::log1p(-u1));
    const double z1 = r12 * std::cos(two_pi * u2);
    const double z2 = r12 * std::sin(two_pi * u2);
    const double z3 = std::sqrt(-2.0 * std::log1p(-u3)) * std::cos(two_pi * u4);
    out.push_back(PhasePoint{c.p1 + w.p1 * z1, c.p2 + w.p2 * z2, c.p3 + w.p3 * z3});
  }
  return out;
}

/// Discretized packet: weighted initial points with unit total weight.
struct EnsembleNodes {
  std::vector<PhasePoint> points;
  std::vector<double> weights;
  bool stochastic = false;  // true when a standard error is meaningful
};

/// Materializes the packet under the scheme. Dirac packets become a single
/// unit-weight node and sample lists become equal-weight nodes regardless of
/// the scheme; Gaussian packets are expanded to the order^3 tensor grid or to
/// n_samples Box-Muller draws from mt19937_64(seed). Node generation is
/// sequential and fully determined by (packet, scheme).
inline EnsembleNodes quadrature_nodes(const WavepacketSpec& packet,
                                      const QuadratureScheme& scheme) {
  packet.validate();
  scheme.validate();
  EnsembleNodes out;
  if (packet.kind == PacketKind::dirac) {
    out.points = {packet.center};
    out.weights = {1.0};
    return out;
  }
  if (packet.kind == PacketKind::samples) {
    out.points = packet.points;
    out.weights.assign(out.points.size(), 1.0 / static_cast<double>(out.points.size()));
    out.stochastic = true;
    return out;
  }

  const PhasePoint& c = packet.center;
  const PhasePoint& w = packet.widths;
  if (scheme.kind == SchemeKind::gauss_hermite) {
    const QuadratureRule rule = gauss_hermite_rule(scheme.order);
    const std::size_t n = rule.nodes.size();
    out.points.reserve(n * n * n);
    out.weights.reserve(n * n * n);
    // The rule integrates against exp(-x^2) (variance 1/2), so the map to a
    // packet of standard deviation w is p = c + sqrt(2) w x.
    const double s = std::sqrt(2.0);
    for (std::size_t ix = 0; ix < n; ++ix)
      for (std::size_t iy = 0; iy < n; ++iy)
        for (std::size_t iz = 0; iz < n; ++iz) {
          out.points.push_back(PhasePoint{c.p1 + s * w.p1 * rule.nodes[ix],
                                          c.p2 + s * w.p2 * rule.nodes[iy],
                                          c.p3 + s * w.p3 * rule.nodes[iz]});
          out.weights.push_back(rule.weights[ix] * rule.weights[iy] * rule.weights[iz]);
        }
    return out;
  }

  out.stochastic = true;
  out.points = sample_density(packet, scheme.n_samples, scheme.seed);
  out.weights.assign(scheme.n_samples, 1.0 / static_cast<double>(scheme.n_samples));
  return out;
}

/// Packet moments of the evolved momentum components at one time.
struct MomentStats {
  double time = 0.0;
  PhasePoint mean{};
  PhasePoint variance{};
  PhasePoint standard_error{};  // zero for deterministic rules
};

namespace detail {

inline void validate_grid(std::span<const double> grid) {
  if (grid.empty()) throw InvalidArgument("time grid must be non-empty");
  if (!(std::isfinite(grid.front()) && grid.front() >= 0.0))
    throw InvalidArgument("time grid must start at t >= 0");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(std::isfinite(grid[i]) && grid[i] > grid[i - 1]))
      throw InvalidArgument("time grid must be finite and strictly increasing");
}

[[noreturn]] inline void rethrow_node_error(std::size_t idx, const PhasePoint& p) {
  const std::string where = " [node " + std::to_string(idx) + " at (" +
                            std::to_string(p.p1) + ", " + std::to_string(p.p2) + ", " +
                            std::to_string(p.p3) + ")]";
  try {
    throw;
  } catch (const NonConvergence& e) {
    throw NonConvergence(e.what() + where, e.time_reached());
  } catch (const ResourceLimit& e) {
    throw ResourceLimit(e.what() + where, e.time_reached());
  } catch (const InvalidState& e) {
    throw InvalidState(e.what() + where);
  }
}

}  // namespace detail

/// States of one trajectory at every grid time, from a single propagation to
/// grid.back(); grid times that coincide with accepted-step endpoints return
/// the stepper state bitwise, interior ones use the dense interpolant.
inline std::vector<PhasePoint> grid_states(const PhasePoint& p0, const LorenzParams& prm,
                                           std::span<const double> grid,
                                           const IntegratorConfig& cfg) {
  detail::validate_grid(grid);
  std::vector<PhasePoint> out(grid.size());
  std::size_t cur = 0;
  if (grid[0] == 0.0) {
    out[0] = p0;
    cur = 1;
  }
  if (cur == grid.size()) {
    detail::validate_inputs(p0, prm, cfg);
    return out;
  }
  const double t_end = grid.back();
  const std::array<double, 1> stops{t_end};
  auto sink = [&](const detail::StepRecord<3>& rec) {
    std::optional<Trajectory::Dense> dns;
    while (cur < grid.size() && grid[cur] <= rec.t1) {
      if (grid[cur] == rec.t1) {
        out[cur] = detail::to_point(rec.y1);
      } else {
        if (!dns) dns = detail::make_dense<3>(rec);
        const double th = (grid[cur] - rec.t0) / rec.h;
        const double om = 1.0 - th;
        out[cur] = dns->r1 + th * (dns->r2 + om * (dns->r3 + th * (dns->r4 + om * dns->r5)));
      }
      ++cur;
    }
  };
  detail::validate_inputs(p0, prm, cfg);
  detail::run_core<3>(detail::LorenzRhs{prm}, detail::to_vec(p0), t_end, cfg, stops, sink);
  return out;
}

/// Mean, variance and (for stochastic rules) standard error of each momentum
/// component over the packet, at every grid time. Every node is propagated
/// once over the full grid; a Dirac packet instead reproduces the flow map of
/// its center at each grid time exactly. Results are bit-identical for any
/// thread budget: the node set, the chunk partition and the pairwise
/// reduction tree are all fixed.
inline std::vector<MomentStats> expectation(const WavepacketSpec& packet,
                                            const QuadratureScheme& scheme,
                                            const LorenzParams& prm,
                                            std::span<const double> grid,
                                            const IntegratorConfig& cfg) {
  prm.validate();
  cfg.validate();
  detail::validate_grid(grid);
  const std::size_t n_t = grid.size();
  std::vector<MomentStats> out(n_t);
  for (std::size_t i = 0; i < n_t; ++i) out[i].time = grid[i];

  if (packet.kind == PacketKind::dirac) {
    packet.validate();
    parallel_chunks(n_t, std::min<std::size_t>(n_t, 64),
                    [&](std::size_t, std::size_t lo, std::size_t hi) {
                      for (std::size_t i = lo; i < hi; ++i)
                        out[i].mean = flow_map(packet.center, prm, grid[i], cfg);
                    });
    return out;
  }

  const EnsembleNodes nodes = quadrature_nodes(packet, scheme);
  const std::size_t n_nodes = nodes.points.size();
  const std::size_t n_chunks = std::min<std::size_t>(n_nodes, 64);

  struct Partial {
    std::array<double, 3> m{};  // sum of w * f_k
    std::array<double, 3> q{};  // sum of w * f_k^2
  };
  std::vector<std::vector<Partial>> partials(n_chunks, std::vector<Partial>(n_t));

  parallel_chunks(n_nodes, n_chunks, [&](std::size_t c, std::size_t lo, std::size_t hi) {
    auto& part = partials[c];
    for (std::size_t i = lo; i < hi; ++i) {
      std::vector<PhasePoint> states;
      try {
        states = grid_states(nodes.points[i], prm, grid, cfg);
      } catch (...) {
        detail::rethrow_node_error(i, nodes.points[i]);
      }
      const double w = nodes.weights[i];
      for (std::size_t t = 0; t < n_t; ++t) {
        const PhasePoint& s = states[t];
        part[t].m[0] += w * s.p1;
        part[t].m[1] += w * s.p2;
        part[t].m[2] += w * s.p3;
        part[t].q[0] += w * s.p1 * s.p1;
        part[t].q[1] += w * s.p2 * s.p2;
        part[t].q[2] += w * s.p3 * s.p3;
      }
    }
  });

  // Fixed pairwise summation tree over the chunk partials.
  for (std::size_t stride = 1; stride < n_chunks; stride *= 2)
    for (std::size_t c = 0; c + stride < n_chunks; c += 2 * stride)
      for (std::size_t t = 0; t < n_t; ++t)
        for (std::size_t k = 0; k < 3; ++k) {
          partials[c][t].m[k] += partials[c + stride][t].m[k];
          partials[c][t].q[k] += partials[c + stride][t].q[k];
        }

  for (std::size_t t = 0; t < n_t; ++t) {
    const auto& m = partials[0][t].m;
    const auto& q = partials[0][t].q;
    std::array<double, 3> var, se;
    for (std::size_t k = 0; k < 3; ++k) {
      var[k] = std::max(0.0, q[k] - m[k] * m[k]);
      se[k] = nodes.stochastic ? std::sqrt(var[k] / static_cast<double>(n_nodes)) : 0.0;
    }
    out[t].mean = {m[0], m[1], m[2]};
    out[t].variance = {var[0], var[1], var[2]};
    out[t].standard_error = {se[0], se[1], se[2]};
  }
  return out;
}

/// Convenience grid 0, dt, 2dt, ..., t_end (the last point is t_end exactly).
inline std::vector<double> uniform_grid(double t_end, double dt) {
  if (!(std::isfinite(t_end) && t_end >= 0.0))
    throw InvalidArgument("uniform_grid: t_end must be >= 0");
  if (!(std::isfinite(dt) && dt > 0.0)) throw InvalidArgument("uniform_grid: dt must be > 0");
  std::vector<double> grid;
  if (t_end == 0.0) return {0.0};
  for (std::size_t i = 0;; ++i) {
    const double t = static_cast<double>(i) * dt;
    if (t >= t_end * (1.0 - 1e-12)) break;
    grid.push_back(t);
  }
  grid.push_back(t_end);
  return grid;
}

}  // namespace ehrenfest
