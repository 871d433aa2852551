#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ehrenfest/ensemble.hpp"
#include "ehrenfest/errors.hpp"
#include "ehrenfest/integrate.hpp"
#include "ehrenfest/lorenz.hpp"
#include "ehrenfest/parallel.hpp"

namespace ehrenfest {

/// Lyapunov spectrum estimate together with the run settings it came from.
struct LyapunovResult {
  std::array<double, 3> exponents{};   // descending
  double ks_entropy_estimate = 0.0;    // sum of the positive exponents
  double transient_discarded = 0.0;
  double total_time = 0.0;
  double renorm_interval = 0.0;

  double lambda_max() const { return exponents[0]; }
  double sum() const { return exponents[0] + exponents[1] + exponents[2]; }
};

namespace detail {

inline double dot3(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

// QR factorization by modified Gram-Schmidt with a positive diagonal:
// overwrites v with Q and returns (r00, r11, r22).
inline std::array<double, 3> mgs_qr(Mat3& v) {
  std::array<double, 3> diag{};
  std::array<std::array<double, 3>, 3> q;
  for (std::size_t j = 0; j < 3; ++j) {
    std::array<double, 3> a = v.col(static_cast<int>(j));
    for (std::size_t i = 0; i < j; ++i) {
      const double rij = dot3(q[i], a);
      for (std::size_t k = 0; k < 3; ++k) a[k] -= rij * q[i][k];
    }
    const double rjj = std::sqrt(dot3(a, a));
    if (!(rjj > 0.0) || !std::isfinite(rjj))
      throw InvalidState("lyapunov_spectrum: tangent frame collapsed");
    for (std::size_t k = 0; k < 3; ++k) a[k] /= rjj;
    q[j] = a;
    diag[j] = rjj;
  }
  for (std::size_t j = 0; j < 3; ++j) v.set_col(static_cast<int>(j), q[j]);
  return diag;
}

}  // namespace detail

/// Benettin-style spectrum: run the flow for `transient`, then propagate an
/// orthonormal tangent frame jointly with the state, re-orthonormalizing
/// every renorm_interval and averaging the logs of the QR diagonal over the
/// remaining total_time - transient (floored to whole intervals).
inline LyapunovResult lyapunov_spectrum(const PhasePoint& p0, const LorenzParams& prm,
                                        double transient, double total_time,
                                        double renorm_interval,
                                        const IntegratorConfig& cfg) {
  prm.validate();
  cfg.validate();
  if (!p0.finite()) throw InvalidState("lyapunov_spectrum: non-finite initial point");
  if (!(std::isfinite(transient) && transient > 0.0))
    throw InvalidArgument("lyapunov_spectrum: transient must be > 0");
  if (!(std::isfinite(total_time) && total_time > transient))
    throw InvalidArgument("lyapunov_spectrum: total_time must exceed transient");
  if (!(std::isfinite(renorm_interval) && renorm_interval > 0.0))
    throw InvalidArgument("lyapunov_spectrum: renorm_interval must be > 0");
  const std::size_t n_intervals =
      static_cast<std::size_t>((total_time - transient) / renorm_interval + 1e-9);
  if (n_intervals < 1)
    throw InvalidArgument("lyapunov_spectrum: renorm_interval exceeds total_time - transient");

  PhasePoint p = flow_map(p0, prm, transient, cfg);
  Mat3 q = Mat3::identity();
  const double span = static_cast<double>(n_intervals) * renorm_interval;

  std::array<double, 3> acc{};
  for (std::size_t i = 0; i < n_intervals; ++i) {
    const TangentResult r = integrate_with_tangent(p, q, prm, renorm_interval, cfg);
    p = r.trajectory.states.back();
    q = r.tangents.back();
    const std::array<double, 3> diag = detail::mgs_qr(q);
    for (std::size_t k = 0; k < 3; ++k) acc[k] += std::log(diag[k]);
  }

  LyapunovResult out;
  out.transient_discarded = transient;
  out.total_time = total_time;
  out.renorm_interval = renorm_interval;
  for (std::size_t k = 0; k < 3; ++k) out.exponents[k] = acc[k] / span;
  std::sort(out.exponents.begin(), out.exponents.end(), std::greater<>());
  for (double l : out.exponents) out.ks_entropy_estimate += std::max(0.0, l);
  return out;
}

/// One deviation-threshold measurement. crossing_time is empty when the
/// packet mean never departed from the center characteristic by more than
/// `threshold` within the configured horizon (the unbounded marker).
struct EhrenfestResult {
  double width = 0.0;  // isotropic packet width; 0 encodes the Dirac limit
  std::optional<double> crossing_time{};
  double threshold = 0.0;
  PhasePoint center{};
};

namespace detail {

// Dense segments of one trajectory restricted to a time window.
struct WindowTrack {
  std::vector<double> t0s, t1s;
  std::vector<Trajectory::Dense> segs;

  PhasePoint eval(double t) const {
    // First segment starting after t, then step back.
    auto it = std::upper_bound(t0s.begin(), t0s.end(), t);
    std::size_t i = static_cast<std::size_t>(it - t0s.begin());
    if (i > 0) --i;
    const double h = t1s[i] - t0s[i];
    const double th = (t - t0s[i]) / h;
    const double om = 1.0 - th;
    const Trajectory::Dense& d = segs[i];
    return d.r1 + th * (d.r2 + om * (d.r3 + th * (d.r4 + om * d.r5)));
  }
};

// Integrates p0 over [0, t_end] keeping only dense segments that intersect
// [w_lo, w_hi]; the step sequence is identical to a plain run to t_end.
inline WindowTrack window_track(const PhasePoint& p0, const LorenzParams& prm,
                                double t_end, double w_lo, double w_hi,
                                const IntegratorConfig& cfg) {
  WindowTrack track;
  const std::array<double, 1> stops{t_end};
  auto sink = [&](const StepRecord<3>& rec) {
    if (rec.t1 < w_lo || rec.t0 > w_hi) return;
    track.t0s.push_back(rec.t0);
    track.t1s.push_back(rec.t1);
    track.segs.push_back(make_dense<3>(rec));
  };
  run_core<3>(LorenzRhs{prm}, to_vec(p0), t_end, cfg, stops, sink);
  if (track.segs.empty())
    throw InvalidState("ehrenfest crossing: empty refinement window");
  return track;
}

// First time the packet mean deviates from the center characteristic by more
// than `threshold` (Euclidean norm) in (0, horizon], or nullopt. Coarse pass
// on a fixed grid to bracket, dense re-resolution of the bracket, bisection
// to 1e-6 in time.
inline std::optional<double> crossing_search(const WavepacketSpec& packet,
                                             const QuadratureScheme& scheme,
                                             double threshold, double horizon,
                                             const LorenzParams& prm,
                                             const IntegratorConfig& cfg) {
  constexpr double grid_dt = 0.002;
  const std::vector<double> grid = uniform_grid(horizon, grid_dt);
  const std::vector<MomentStats> moments = expectation(packet, scheme, prm, grid, cfg);
  const std::vector<PhasePoint> ref = grid_states(packet.center, prm, grid, cfg);

  std::size_t j = grid.size();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if ((moments[i].mean - ref[i]).norm() > threshold) {
      j = i;
      break;
    }
  }
  if (j == grid.size()) return std::nullopt;  // never crossed within the horizon
  if (j == 0) return 0.0;

  // Refinement window, one grid cell of slack on each side.
  const double w_lo = std::max(0.0, grid[j - 1] - grid_dt);
  const double w_hi = std::min(horizon, grid[j] + grid_dt);
  const EnsembleNodes nodes = quadrature_nodes(packet, scheme);
  const std::size_t n_nodes = nodes.points.size();
  std::vector<WindowTrack> tracks(n_nodes);
  parallel_chunks(n_nodes, std::min<std::size_t>(n_nodes, 64),
                  [&](std::size_t, std::size_t lo, std::size_t hi) {
                    for (std::size_t i = lo; i < hi; ++i)
                      tracks[i] =
                          window_track(nodes.points[i], prm, horizon, w_lo, w_hi, cfg);
                  });
  const WindowTrack ref_track =
      window_track(packet.center, prm, horizon, w_lo, w_hi, cfg);

  auto excess = [&](double t) {
    PhasePoint mean{};
    for (std::size_t i = 0; i < n_nodes; ++i)
      mean += nodes.weights[i] * tracks[i].eval(t);
    return (mean - ref_track.eval(t)).norm() - threshold;
  };

  double lo = grid[j - 1], hi = grid[j];
  if (excess(hi) <= 0.0) return hi;  // grid detection is authoritative
  if (excess(lo) > 0.0) return lo;
  while (hi - lo > 1e-6) {
    const double mid = 0.5 * (lo + hi);
    (excess(mid) > 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Ehrenfest time of an isotropic Gaussian packet: first t with
/// ||mean(t) - flow_map(center, t)||_2 > threshold, bisected to 1e-6 on dense
/// output, or the unbounded marker if no crossing occurs before the horizon.
/// width == 0 selects the Dirac limit, whose mean follows the characteristic
/// for all time and therefore never crosses.
inline EhrenfestResult ehrenfest_time(const PhasePoint& center, double width,
                                      double threshold, const LorenzParams& prm,
                                      const QuadratureScheme& scheme, double horizon,
                                      const IntegratorConfig& cfg) {
  prm.validate();
  cfg.validate();
  scheme.validate();
  if (!center.finite()) throw InvalidArgument("ehrenfest_time: non-finite center");
  if (!(std::isfinite(width) && width >= 0.0))
    throw InvalidArgument("ehrenfest_time: width must be >= 0");
  if (!(std::isfinite(threshold) && threshold > 0.0))
    throw InvalidArgument("ehrenfest_time: threshold must be > 0");
  if (!(std::isfinite(horizon) && horizon > 0.0))
    throw InvalidArgument("ehrenfest_time: horizon must be > 0");

  EhrenfestResult out;
  out.width = width;
  out.threshold = threshold;
  out.center = center;
  if (width == 0.0) return out;  // Dirac limit: mean == characteristic
  out.crossing_time = detail::crossing_search(
      WavepacketSpec::isotropic_gaussian(center, width), scheme, threshold, horizon,
      prm, cfg);
  return out;
}

struct EhrenfestScan {
  std::vector<EhrenfestResult> rows;  // widths strictly decreasing
  double fitted_slope = 0.0;          // d t* / d ln(1/width), least squares
  double lambda_reference = 0.0;      // lambda_max at the scan center
};

/// Ehrenfest times across a strictly decreasing width list plus the
/// least-squares slope of the finite crossing times against ln(1/width);
/// unbounded rows are reported but excluded from the fit, and fewer than
/// three finite rows is an error. lambda_reference is computed at the scan
/// center with the default spectrum settings; the slope is expected to track
/// 1/lambda_reference.
inline EhrenfestScan ehrenfest_scan(const PhasePoint& center,
                                    std::span<const double> widths, double threshold,
                                    const LorenzParams& prm,
                                    const QuadratureScheme& scheme, double horizon,
                                    const IntegratorConfig& cfg) {
  if (widths.empty()) throw InvalidArgument("ehrenfest_scan: empty width list");
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (!(std::isfinite(widths[i]) && widths[i] >= 1e-8))
      throw InvalidArgument(
          "ehrenfest_scan: widths must be >= 1e-8 (integrator tolerance floor)");
    if (i > 0 && !(widths[i] < widths[i - 1]))
      throw InvalidArgument("ehrenfest_scan: widths must be strictly decreasing");
  }

  EhrenfestScan out;
  out.rows.reserve(widths.size());
  for (const double w : widths)
    out.rows.push_back(ehrenfest_time(center, w, threshold, prm, scheme, horizon, cfg));

  std::size_t n_fit = 0;
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& row : out.rows) {
    if (!row.crossing_time) continue;
    ++n_fit;
    const double x = std::log(1.0 / row.width);
    sx += x;
    sy += *row.crossing_time;
    sxx += x * x;
    sxy += x * *row.crossing_time;
  }
  if (n_fit < 3)
    throw InsufficientData("ehrenfest_scan: need at least 3 finite rows to fit, got " +
                           std::to_string(n_fit));
  const double nf = static_cast<double>(n_fit);
  out.fitted_slope = (nf * sxy - sx * sy) / (nf * sxx - sx * sx);
  out.lambda_reference =
      lyapunov_spectrum(center, prm, 100.0, 2000.0, 1.0, cfg).lambda_max();
  return out;
}

}  // namespace ehrenfest
