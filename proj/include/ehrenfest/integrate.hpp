#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ehrenfest/errors.hpp"
#include "ehrenfest/lorenz.hpp"

namespace ehrenfest {

enum class Method { fixed_rk4, adaptive_rk54 };

/// Stepper configuration. `step` applies to the fixed method; the tolerances,
/// `min_step` and the PI controller apply to the adaptive 5(4) pair.
struct IntegratorConfig {
  Method method = Method::adaptive_rk54;
  double step = 1e-3;
  double rel_tol = 1e-9;
  double abs_tol = 1e-12;
  std::uint64_t max_steps = 50000000;
  double min_step = 0.0;  // 0 selects 1e-12 * t_end

  void validate() const {
    if (!(std::isfinite(step) && step > 0.0))
      throw InvalidArgument("IntegratorConfig: step must be > 0");
    if (!(std::isfinite(rel_tol) && rel_tol >= 1e-14))
      throw InvalidArgument("IntegratorConfig: rel_tol must be >= 1e-14");
    if (!(std::isfinite(abs_tol) && abs_tol >= 1e-300))
      throw InvalidArgument("IntegratorConfig: abs_tol must be >= 1e-300");
    if (max_steps < 1) throw InvalidArgument("IntegratorConfig: max_steps must be >= 1");
    if (!(std::isfinite(min_step) && min_step >= 0.0))
      throw InvalidArgument("IntegratorConfig: min_step must be >= 0");
  }

  bool operator==(const IntegratorConfig&) const = default;
};

/// Solution of the flow over [0, t_end] with dense output between nodes.
struct Trajectory {
  LorenzParams params;
  PhasePoint initial;
  Method method = Method::adaptive_rk54;
  std::vector<double> times;         // strictly increasing, times[0] == 0
  std::vector<PhasePoint> states;    // same length as times

  // Interpolant for [times[i], times[i+1]], theta = (t - times[i]) / h:
  //   u(theta) = r1 + theta*(r2 + (1-theta)*(r3 + theta*(r4 + (1-theta)*r5)))
  // Quartic for the 5(4) pair; cubic Hermite (r5 = 0) for fixed RK4.
  struct Dense {
    PhasePoint r1, r2, r3, r4, r5;
  };
  std::vector<Dense> dense;          // size == times.size() - 1

  double t_end() const { return times.back(); }

  /// Dense evaluation; returns the stored state bit-exactly at stored nodes.
  PhasePoint eval(double t) const {
    if (times.empty()) throw DomainError("Trajectory::eval: empty trajectory");
    if (!(t >= times.front() && t <= times.back()))
      throw DomainError("Trajectory::eval: t=" + std::to_string(t) +
                        " outside [0, " + std::to_string(times.back()) + "]");
    auto it = std::lower_bound(times.begin(), times.end(), t);
    if (it != times.end() && *it == t)
      return states[static_cast<std::size_t>(it - times.begin())];
    const std::size_t i = static_cast<std::size_t>(it - times.begin()) - 1;
    const double h = times[i + 1] - times[i];
    const double th = (t - times[i]) / h;
    const Dense& d = dense[i];
    const double om = 1.0 - th;
    return d.r1 + th * (d.r2 + om * (d.r3 + th * (d.r4 + om * d.r5)));
  }
};

inline PhasePoint dense_eval(const Trajectory& traj, double t) { return traj.eval(t); }

namespace detail {

// Dormand-Prince 5(4) tableau.
inline constexpr double a21 = 1.0 / 5.0;
inline constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
inline constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
inline constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                        a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
inline constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0,
                        a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                        a65 = -5103.0 / 18656.0;
inline constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0,
                        a75 = -2187.0 / 6784.0, a76 = 11.0 / 84.0;
// y5 - y4 error weights.
inline constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                        e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
// Quartic dense-output weights.
inline constexpr double d1 = -12715105075.0 / 11282082432.0;
inline constexpr double d3 = 87487479700.0 / 32700410799.0;
inline constexpr double d4 = -10690763975.0 / 1880347072.0;
inline constexpr double d5 = 701980252875.0 / 199316789632.0;
inline constexpr double d6 = -1453857185.0 / 822651844.0;
inline constexpr double d7 = 69997945.0 / 29380423.0;

template <int N>
using Vec = std::array<double, N>;

template <int N>
inline Vec<N> axpy(const Vec<N>& y, double h, const Vec<N>& k) {
  Vec<N> r;
  for (int i = 0; i < N; ++i) r[i] = y[i] + h * k[i];
  return r;
}

template <int N>
inline bool finite(const Vec<N>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

/// One accepted step handed to a sink. `k[0]` is the derivative at t0 and
/// `k[6]` the derivative at t1 for both methods; `k[1..5]` are the remaining
/// 5(4) stages (zero for fixed RK4). References are only valid inside the
/// callback.
template <int N>
struct StepRecord {
  double t0, t1, h;
  const Vec<N>& y0;
  const Vec<N>& y1;
  const std::array<Vec<N>, 7>& k;
  bool adaptive;
};

// theta-polynomial coefficients of the step interpolant over components
// [off, off+3) of an N-dimensional record.
template <int N>
inline Trajectory::Dense make_dense(const StepRecord<N>& rec, int off = 0) {
  auto pick = [off](const Vec<N>& v) { return PhasePoint{v[off], v[off + 1], v[off + 2]}; };
  const PhasePoint y0 = pick(rec.y0), y1 = pick(rec.y1);
  const PhasePoint k0 = pick(rec.k[0]), kend = pick(rec.k[6]);
  Trajectory::Dense dns;
  dns.r1 = y0;
  dns.r2 = y1 - y0;
  dns.r3 = rec.h * k0 - dns.r2;
  dns.r4 = dns.r2 - rec.h * kend - dns.r3;
  if (rec.adaptive) {
    const PhasePoint k3 = pick(rec.k[2]), k4 = pick(rec.k[3]), k5 = pick(rec.k[4]),
                     k6 = pick(rec.k[5]);
    dns.r5 = rec.h * (d1 * k0 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * kend);
  } else {
    dns.r5 = PhasePoint{0.0, 0.0, 0.0};
  }
  return dns;
}

template <int N, class Rhs>
double initial_step(Rhs&& rhs, const Vec<N>& y0, const Vec<N>& f0, double t_end,
                    double abs_tol, double rel_tol) {
  Vec<N> sc;
  for (int i = 0; i < N; ++i) sc[i] = abs_tol + rel_tol * std::abs(y0[i]);
  auto rms = [&](const Vec<N>& v) {
    double s = 0.0;
    for (int i = 0; i < N; ++i) {
      const double q = v[i] / sc[i];
      s += q * q;
    }
    return std::sqrt(s / N);
  };
  const double dn0 = rms(y0), dn1 = rms(f0);
  double h0 = (dn0 < 1e-5 || dn1 < 1e-5) ? 1e-6 : 0.01 * (dn0 / dn1);
  h0 = std::min(h0, t_end);
  Vec<N> y1 = axpy<N>(y0, h0, f0);
  Vec<N> f1;
  rhs(y1, f1);
  Vec<N> df;
  for (int i = 0; i < N; ++i) df[i] = f1[i] - f0[i];
  const double dn2 = rms(df) / h0;
  const double dmax = std::max(dn1, dn2);
  const double h1 = (dmax <= 1e-15) ? std::max(1e-6, h0 * 1e-3)
                                    : std::pow(0.01 / dmax, 0.2);
  return std::min({100.0 * h0, h1, t_end});
}

/// Adaptive 5(4) driver. Integrates [0, t_end], landing bit-exactly on every
/// entry of `stops` (strictly increasing, last == t_end). Calls
/// sink(StepRecord) once per accepted step and returns the final state.
template <int N, class Rhs, class Sink>
Vec<N> run_adaptive(Rhs&& rhs, Vec<N> y, double t_end, const IntegratorConfig& cfg,
                    std::span<const double> stops, Sink&& sink) {
  constexpr double safety = 0.9, beta_pi = 0.04, expo1 = 0.2 - 0.75 * beta_pi;
  constexpr double fac_min = 0.2, fac_max = 5.0;  // growth clamp on h

  const double h_floor = cfg.min_step > 0.0 ? cfg.min_step : 1e-12 * t_end;

  std::array<Vec<N>, 7> k;
  rhs(y, k[0]);
  if (!finite<N>(k[0]))
    throw InvalidState("integrate: non-finite derivative at t=0");
  double t = 0.0;
  double h = initial_step<N>(rhs, y, k[0], t_end, cfg.abs_tol, cfg.rel_tol);
  double facold = 1e-4;
  bool rejected = false;
  std::uint64_t steps = 0;
  std::size_t stop_idx = 0;

  while (t < t_end) {
    if (steps++ >= cfg.max_steps)
      throw ResourceLimit("integrate: max_steps=" + std::to_string(cfg.max_steps) +
                              " exhausted at t=" + std::to_string(t),
                          t);
    const double target = stops[stop_idx];
    bool hit = false;
    if (t + 1.01 * h >= target) {  // stretch/clip to land exactly
      h = target - t;
      hit = true;
    }
    if (h < h_floor)
      throw NonConvergence("integrate: step size " + std::to_string(h) +
                               " underflowed min_step at t=" + std::to_string(t),
                           t);

    Vec<N> yt, ynew;
    yt = axpy<N>(y, h * a21, k[0]);
    rhs(yt, k[1]);
    for (int i = 0; i < N; ++i) yt[i] = y[i] + h * (a31 * k[0][i] + a32 * k[1][i]);
    rhs(yt, k[2]);
    for (int i = 0; i < N; ++i)
      yt[i] = y[i] + h * (a41 * k[0][i] + a42 * k[1][i] + a43 * k[2][i]);
    rhs(yt, k[3]);
    for (int i = 0; i < N; ++i)
      yt[i] = y[i] + h * (a51 * k[0][i] + a52 * k[1][i] + a53 * k[2][i] + a54 * k[3][i]);
    rhs(yt, k[4]);
    for (int i = 0; i < N; ++i)
      yt[i] = y[i] + h * (a61 * k[0][i] + a62 * k[1][i] + a63 * k[2][i] +
                          a64 * k[3][i] + a65 * k[4][i]);
    rhs(yt, k[5]);
    for (int i = 0; i < N; ++i)
      ynew[i] = y[i] + h * (a71 * k[0][i] + a73 * k[2][i] + a74 * k[3][i] +
                            a75 * k[4][i] + a76 * k[5][i]);
    rhs(ynew, k[6]);

    double err = 0.0;
    for (int i = 0; i < N; ++i) {
      const double ei = h * (e1 * k[0][i] + e3 * k[2][i] + e4 * k[3][i] +
                             e5 * k[4][i] + e6 * k[5][i] + e7 * k[6][i]);
      const double sc = cfg.abs_tol +
                        cfg.rel_tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      const double q = ei / sc;
      err += q * q;
    }
    err = std::sqrt(err / N);

    const double fac11 = std::pow(err, expo1);
    if (err <= 1.0) {  // accept
      if (!finite<N>(ynew))
        throw InvalidState("integrate: non-finite state at t=" + std::to_string(t + h));
      const double t1 = hit ? target : t + h;
      sink(StepRecord<N>{t, t1, h, y, ynew, k, true});
      y = ynew;
      k[0] = k[6];
      t = t1;
      if (hit && ++stop_idx >= stops.size()) break;

      double fac = fac11 / std::pow(facold, beta_pi);
      fac = std::max(fac_min, std::min(fac_max, fac / safety));
      double hnew = h / fac;
      if (rejected) hnew = std::min(hnew, h);
      facold = std::max(err, 1e-4);
      h = hnew;
      rejected = false;
    } else {
      h = h / std::min(1.0 / fac_min, fac11 / safety);
      rejected = true;
    }
  }
  return y;
}

/// Classical RK4 at fixed step, restarted per stop segment so every entry of
/// `stops` is landed on exactly (the last step of a segment is shortened).
/// Same sink contract as run_adaptive.
template <int N, class Rhs, class Sink>
Vec<N> run_rk4(Rhs&& rhs, Vec<N> y, const IntegratorConfig& cfg,
               std::span<const double> stops, Sink&& sink) {
  const double step = cfg.step;
  std::array<Vec<N>, 7> k{};  // k[0] = f(t0,y0), k[6] = f(t1,y1)
  rhs(y, k[0]);
  if (!finite<N>(k[0]))
    throw InvalidState("integrate: non-finite derivative at t=0");
  Vec<N> k2, k3, k4, yt, ynew;
  std::uint64_t steps = 0;
  double seg_start = 0.0;
  for (const double seg_end : stops) {
    const double span = seg_end - seg_start;
    const std::uint64_t n_whole = static_cast<std::uint64_t>(span / step + 1e-9);
    double rem = span - static_cast<double>(n_whole) * step;
    if (rem <= 1e-12 * span) rem = 0.0;
    const std::uint64_t n_tot = n_whole + (rem > 0.0 ? 1 : 0);
    for (std::uint64_t i = 0; i < n_tot; ++i) {
      if (steps++ >= cfg.max_steps)
        throw ResourceLimit("integrate: max_steps=" + std::to_string(cfg.max_steps) +
                                " exhausted at t=" + std::to_string(seg_start),
                            seg_start + static_cast<double>(i) * step);
      const double t0 = seg_start + static_cast<double>(i) * step;
      const double t1 =
          (i + 1 == n_tot) ? seg_end : seg_start + static_cast<double>(i + 1) * step;
      const double h = t1 - t0;

      yt = axpy<N>(y, 0.5 * h, k[0]);
      rhs(yt, k2);
      yt = axpy<N>(y, 0.5 * h, k2);
      rhs(yt, k3);
      yt = axpy<N>(y, h, k3);
      rhs(yt, k4);
      for (int c = 0; c < N; ++c)
        ynew[c] = y[c] + (h / 6.0) * (k[0][c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
      if (!finite<N>(ynew))
        throw InvalidState("integrate: non-finite state at t=" + std::to_string(t1));
      rhs(ynew, k[6]);
      sink(StepRecord<N>{t0, t1, h, y, ynew, k, false});
      y = ynew;
      k[0] = k[6];
    }
    seg_start = seg_end;
  }
  return y;
}

template <int N, class Rhs, class Sink>
Vec<N> run_core(Rhs&& rhs, const Vec<N>& y0, double t_end, const IntegratorConfig& cfg,
                std::span<const double> stops, Sink&& sink) {
  if (cfg.method == Method::adaptive_rk54)
    return run_adaptive<N>(rhs, y0, t_end, cfg, stops, sink);
  return run_rk4<N>(rhs, y0, cfg, stops, sink);
}

struct LorenzRhs {
  LorenzParams prm;
  void operator()(const Vec<3>& y, Vec<3>& dydt) const noexcept {
    const PhasePoint d = rhs(PhasePoint{y[0], y[1], y[2]}, prm);
    dydt = {d.p1, d.p2, d.p3};
  }
};

// Joint flow + tangent system: y[0..2] is the phase point, y[3..11] the
// tangent matrix V in row-major order, with dV/dt = J(p) V.
struct TangentRhs {
  LorenzParams prm;
  void operator()(const Vec<12>& y, Vec<12>& dydt) const noexcept {
    const PhasePoint p{y[0], y[1], y[2]};
    const PhasePoint d = rhs(p, prm);
    dydt[0] = d.p1;
    dydt[1] = d.p2;
    dydt[2] = d.p3;
    const Mat3 j = jacobian(p, prm);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        dydt[3 + 3 * r + c] = j.m[r][0] * y[3 + c] + j.m[r][1] * y[6 + c] +
                              j.m[r][2] * y[9 + c];
  }
};

inline Vec<3> to_vec(const PhasePoint& p) { return {p.p1, p.p2, p.p3}; }
inline PhasePoint to_point(const Vec<3>& v) { return {v[0], v[1], v[2]}; }

template <int N>
struct TrajectorySink {
  Trajectory* traj;
  int off = 0;
  void operator()(const StepRecord<N>& rec) {
    traj->times.push_back(rec.t1);
    traj->states.push_back({rec.y1[off], rec.y1[off + 1], rec.y1[off + 2]});
    traj->dense.push_back(make_dense<N>(rec, off));
  }
};

inline void validate_inputs(const PhasePoint& p0, const LorenzParams& prm,
                            const IntegratorConfig& cfg) {
  prm.validate();
  cfg.validate();
  if (!p0.finite()) throw InvalidState("integrate: non-finite initial point");
}

}  // namespace detail

/// Propagates the flow from p0 over [0, t_end].
inline Trajectory integrate(const PhasePoint& p0, const LorenzParams& prm, double t_end,
                            const IntegratorConfig& cfg) {
  detail::validate_inputs(p0, prm, cfg);
  if (!(std::isfinite(t_end) && t_end > 0.0))
    throw InvalidArgument("integrate: t_end must be > 0");
  Trajectory traj;
  traj.params = prm;
  traj.initial = p0;
  traj.method = cfg.method;
  traj.times.push_back(0.0);
  traj.states.push_back(p0);
  const std::array<double, 1> stops{t_end};
  detail::run_core<3>(detail::LorenzRhs{prm}, detail::to_vec(p0), t_end, cfg, stops,
                      detail::TrajectorySink<3>{&traj});
  return traj;
}

/// f(t, p0): the flow map. Returns p0 bit-exactly at t == 0.
inline PhasePoint flow_map(const PhasePoint& p0, const LorenzParams& prm, double t,
                           const IntegratorConfig& cfg) {
  detail::validate_inputs(p0, prm, cfg);
  if (!(std::isfinite(t) && t >= 0.0))
    throw InvalidArgument("flow_map: t must be >= 0");
  if (t == 0.0) return p0;
  const std::array<double, 1> stops{t};
  const auto y = detail::run_core<3>(detail::LorenzRhs{prm}, detail::to_vec(p0), t, cfg,
                                     stops, [](const detail::StepRecord<3>&) {});
  return detail::to_point(y);
}

/// Joint propagation of the flow and its tangent matrix dV/dt = J(f(t)) V.
struct TangentResult {
  Trajectory trajectory;
  std::vector<double> checkpoint_times;  // increasing; last == t_end
  std::vector<Mat3> tangents;            // evolved V at those times
};

/// Integrates state and tangent together with the same stepper. The tangent
/// matrix is recorded (without renormalization) at every multiple of
/// checkpoint_interval and at t_end; checkpoint_interval <= 0 records t_end
/// only. t_end == 0 returns the basis unchanged.
inline TangentResult integrate_with_tangent(const PhasePoint& p0, const Mat3& basis,
                                            const LorenzParams& prm, double t_end,
                                            const IntegratorConfig& cfg,
                                            double checkpoint_interval = 0.0) {
  detail::validate_inputs(p0, prm, cfg);
  if (!(std::isfinite(t_end) && t_end >= 0.0))
    throw InvalidArgument("integrate_with_tangent: t_end must be >= 0");
  if (!basis.finite() || basis.det() == 0.0)
    throw InvalidArgument("integrate_with_tangent: basis must be nonsingular");

  TangentResult res;
  res.trajectory.params = prm;
  res.trajectory.initial = p0;
  res.trajectory.method = cfg.method;
  res.trajectory.times.push_back(0.0);
  res.trajectory.states.push_back(p0);
  if (t_end == 0.0) {
    res.checkpoint_times.push_back(0.0);
    res.tangents.push_back(basis);
    return res;
  }

  std::vector<double> stops;
  if (checkpoint_interval > 0.0) {
    for (std::size_t k = 1;; ++k) {
      const double tc = static_cast<double>(k) * checkpoint_interval;
      if (tc >= t_end * (1.0 - 1e-12)) break;
      stops.push_back(tc);
    }
  }
  stops.push_back(t_end);

  detail::Vec<12> y0;
  y0[0] = p0.p1;
  y0[1] = p0.p2;
  y0[2] = p0.p3;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) y0[3 + 3 * r + c] = basis.m[r][c];

  detail::TrajectorySink<12> traj_sink{&res.trajectory, 0};
  std::size_t next_stop = 0;
  auto sink = [&](const detail::StepRecord<12>& rec) {
    traj_sink(rec);
    if (next_stop < stops.size() && rec.t1 == stops[next_stop]) {
      Mat3 v;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) v.m[r][c] = rec.y1[3 + 3 * r + c];
      res.checkpoint_times.push_back(rec.t1);
      res.tangents.push_back(v);
      ++next_stop;
    }
  };
  detail::run_core<12>(detail::TangentRhs{prm}, y0, t_end, cfg, stops, sink);
  return res;
}

}  // namespace ehrenfest
