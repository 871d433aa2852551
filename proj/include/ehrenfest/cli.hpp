#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "ehrenfest/chaos.hpp"
#include "ehrenfest/csv.hpp"
#include "ehrenfest/ensemble.hpp"
#include "ehrenfest/errors.hpp"
#include "ehrenfest/integrate.hpp"
#include "ehrenfest/lorenz.hpp"

namespace ehrenfest::cli {

enum class Subcommand { trajectory, expect, lyapunov, ehrenfest, scan };

/// Fully resolved invocation: every field has its final value after
/// parse_args, and serialize_args produces an equivalent flag list.
struct RunConfig {
  Subcommand subcommand = Subcommand::trajectory;
  LorenzParams params{};
  IntegratorConfig integrator{};

  PacketKind packet = PacketKind::gaussian;
  PhasePoint center{1.0, 1.0, 1.0};  // doubles as --p0
  PhasePoint widths{1e-2, 1e-2, 1e-2};
  std::string samples_path{};
  QuadratureScheme scheme{};

  std::string out{};
  std::string fit_out{};  // scan only

  double t_end = 1.0;
  double dt_out = 0.01;

  double transient = 100.0;
  double total_time = 2000.0;
  double renorm_interval = 1.0;

  double width = 1e-3;
  double delta = 1.0;
  double horizon = 30.0;
  std::vector<double> scan_widths{1e-2, 1e-3, 1e-4, 1e-5, 1e-6};

  bool operator==(const RunConfig&) const = default;
};

/// Thrown when CLI11 already finished the interaction (help text or a parse
/// error message was printed); carries the process exit code.
struct CliExit {
  int code;
};

namespace detail {

inline double parse_num(const std::string& s, const char* flag) {
  double v = 0.0;
  if (!ehrenfest::detail::parse_double(s, v))
    throw UsageError(std::string(flag) + ": malformed number '" + s + "'");
  return v;
}

inline std::uint64_t parse_u64(const std::string& s, const char* flag) {
  std::uint64_t v = 0;
  const char* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), last, v);
  if (ec != std::errc{} || ptr != last)
    throw UsageError(std::string(flag) + ": malformed integer '" + s + "'");
  return v;
}

inline std::vector<double> parse_list(const std::string& s, const char* flag) {
  std::vector<double> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == ',') {
      out.push_back(parse_num(s.substr(start, i - start), flag));
      start = i + 1;
    }
  }
  return out;
}

inline PhasePoint parse_triple(const std::string& s, const char* flag) {
  const std::vector<double> v = parse_list(s, flag);
  if (v.size() != 3)
    throw UsageError(std::string(flag) + ": expected three comma-separated numbers, got '" +
                     s + "'");
  return {v[0], v[1], v[2]};
}

inline QuadratureScheme parse_quadrature(const std::string& s, std::uint64_t seed) {
  const std::size_t colon = s.find(':');
  const std::string head = s.substr(0, colon);
  const std::string tail = colon == std::string::npos ? "" : s.substr(colon + 1);
  QuadratureScheme scheme;
  scheme.seed = seed;
  if (head == "gh") {
    scheme.kind = SchemeKind::gauss_hermite;
    const std::uint64_t order = parse_u64(tail, "--quadrature");
    if (order > 999) throw UsageError("--quadrature: gh order out of range");
    scheme.order = static_cast<int>(order);
  } else if (head == "mc") {
    scheme.kind = SchemeKind::monte_carlo;
    scheme.n_samples = static_cast<std::size_t>(parse_u64(tail, "--quadrature"));
  } else {
    throw UsageError("--quadrature: expected gh:<odd order> or mc:<samples>, got '" + s +
                     "'");
  }
  return scheme;
}

inline std::string quadrature_token(const QuadratureScheme& s) {
  return s.kind == SchemeKind::gauss_hermite ? "gh:" + std::to_string(s.order)
                                             : "mc:" + std::to_string(s.n_samples);
}

inline std::string triple_token(const PhasePoint& p) {
  return format_double(p.p1) + "," + format_double(p.p2) + "," + format_double(p.p3);
}

inline std::string derive_fit_path(const std::string& out) {
  const std::filesystem::path p(out);
  return (p.parent_path() / (p.stem().string() + "_fit" + p.extension().string()))
      .string();
}

}  // namespace detail

/// Parses the argument list (without the program name) into a fully resolved
/// RunConfig. --help and parse errors throw CliExit after CLI11 has printed
/// the message; value errors throw UsageError / InvalidArgument.
inline RunConfig parse_args(std::vector<std::string> args) {
  CLI::App app{"Momentum-observable laboratory for the Lorenz flow", "ehrenfest"};
  app.require_subcommand(1);

  struct Raw {
    std::string sigma, tau, beta;
    std::string method, rel_tol, abs_tol, step, max_steps, min_step;
    std::string p0, center, widths, packet, samples_csv, quadrature, seed;
    std::string out, fit_out;
    std::string t_end, dt_out;
    std::string transient, total_time, renorm_interval;
    std::string width, delta, horizon;
  } raw;

  auto add_common = [&raw](CLI::App* sub) {
    sub->add_option("--sigma", raw.sigma, "Lorenz sigma (default 10)");
    sub->add_option("--tau", raw.tau, "Lorenz tau (default 28)");
    sub->add_option("--beta", raw.beta, "Lorenz beta (default 8/3)");
    sub->add_option("--method", raw.method, "integrator: adaptive | rk4 (default adaptive)");
    sub->add_option("--rel-tol", raw.rel_tol, "adaptive relative tolerance (default 1e-9)");
    sub->add_option("--abs-tol", raw.abs_tol, "adaptive absolute tolerance (default 1e-12)");
    sub->add_option("--step", raw.step, "rk4 step size (default 1e-3)");
    sub->add_option("--max-steps", raw.max_steps, "step budget (default 50000000)");
    sub->add_option("--min-step", raw.min_step,
                    "adaptive step floor (default 1e-12 * t-end)");
    sub->add_option("--out", raw.out, "output CSV path")->required();
  };
  auto add_quadrature = [&raw](CLI::App* sub) {
    sub->add_option("--quadrature", raw.quadrature,
                    "gh:<odd order> | mc:<samples> (default gh:9)");
    sub->add_option("--seed", raw.seed, "RNG seed (default 0)");
  };

  CLI::App* traj = app.add_subcommand("trajectory", "One classical characteristic on a uniform time grid");
  add_common(traj);
  traj->add_option("--p0", raw.p0, "initial point p1,p2,p3 (default 1,1,1)");
  traj->add_option("--t-end", raw.t_end, "end time")->required();
  traj->add_option("--dt-out", raw.dt_out, "output spacing (default 0.01)");

  CLI::App* expect = app.add_subcommand("expect", "Packet-averaged momentum moments over a time grid");
  add_common(expect);
  expect->add_option("--packet", raw.packet, "gaussian | dirac | samples (default gaussian)");
  expect->add_option("--center", raw.center, "packet center p1,p2,p3 (default 1,1,1)");
  expect->add_option("--widths", raw.widths, "gaussian widths w1,w2,w3 (default 1e-2 each)");
  expect->add_option("--samples-csv", raw.samples_csv,
                     "sample-point CSV (columns p1,p2,p3, header required)");
  add_quadrature(expect);
  expect->add_option("--t-end", raw.t_end, "end time")->required();
  expect->add_option("--dt-out", raw.dt_out, "output spacing (default 0.01)");

  CLI::App* lyap = app.add_subcommand("lyapunov", "Lyapunov spectrum by tangent propagation with QR renormalization");
  add_common(lyap);
  lyap->add_option("--p0", raw.p0, "initial point p1,p2,p3 (default 1,1,1)");
  lyap->add_option("--transient", raw.transient, "discarded lead-in time (default 100)");
  lyap->add_option("--total-time", raw.total_time, "total run time incl. transient (default 2000)");
  lyap->add_option("--renorm-interval", raw.renorm_interval,
                   "re-orthonormalization period (default 1)");

  CLI::App* ehr = app.add_subcommand("ehrenfest", "Deviation-threshold crossing time for one packet width");
  add_common(ehr);
  ehr->add_option("--center", raw.center, "packet center p1,p2,p3 (default 1,1,1)");
  ehr->add_option("--width", raw.width, "isotropic packet width (0 = point packet)")->required();
  ehr->add_option("--delta", raw.delta, "deviation threshold (default 1)");
  ehr->add_option("--horizon", raw.horizon, "search horizon (default 30)");
  add_quadrature(ehr);

  CLI::App* scan = app.add_subcommand("scan", "Crossing times across a decreasing width list, with slope fit");
  add_common(scan);
  scan->add_option("--center", raw.center, "packet center p1,p2,p3 (default 1,1,1)");
  scan->add_option("--widths", raw.widths,
                   "decreasing width list (default 1e-2,1e-3,1e-4,1e-5,1e-6)");
  scan->add_option("--delta", raw.delta, "deviation threshold (default 1)");
  scan->add_option("--horizon", raw.horizon, "search horizon (default 30)");
  add_quadrature(scan);
  scan->add_option("--fit-out", raw.fit_out,
                   "fit-summary CSV path (default: <out stem>_fit<ext>)");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    throw CliExit{code == 0 ? 0 : 2};
  }

  RunConfig cfg;
  const CLI::App* sub = app.get_subcommands().front();
  if (sub == traj) cfg.subcommand = Subcommand::trajectory;
  else if (sub == expect) cfg.subcommand = Subcommand::expect;
  else if (sub == lyap) cfg.subcommand = Subcommand::lyapunov;
  else if (sub == ehr) cfg.subcommand = Subcommand::ehrenfest;
  else cfg.subcommand = Subcommand::scan;

  using detail::parse_num;
  if (!raw.sigma.empty()) cfg.params.sigma = parse_num(raw.sigma, "--sigma");
  if (!raw.tau.empty()) cfg.params.tau = parse_num(raw.tau, "--tau");
  if (!raw.beta.empty()) cfg.params.beta = parse_num(raw.beta, "--beta");

  if (!raw.method.empty()) {
    if (raw.method == "adaptive") cfg.integrator.method = Method::adaptive_rk54;
    else if (raw.method == "rk4" || raw.method == "fixed-rk4")
      cfg.integrator.method = Method::fixed_rk4;
    else throw UsageError("--method: expected adaptive or rk4, got '" + raw.method + "'");
  }
  if (!raw.rel_tol.empty()) cfg.integrator.rel_tol = parse_num(raw.rel_tol, "--rel-tol");
  if (!raw.abs_tol.empty()) cfg.integrator.abs_tol = parse_num(raw.abs_tol, "--abs-tol");
  if (!raw.step.empty()) cfg.integrator.step = parse_num(raw.step, "--step");
  if (!raw.max_steps.empty())
    cfg.integrator.max_steps = detail::parse_u64(raw.max_steps, "--max-steps");
  if (!raw.min_step.empty()) cfg.integrator.min_step = parse_num(raw.min_step, "--min-step");

  cfg.out = raw.out;
  if (!raw.p0.empty()) cfg.center = detail::parse_triple(raw.p0, "--p0");
  if (!raw.center.empty()) cfg.center = detail::parse_triple(raw.center, "--center");
  if (!raw.t_end.empty()) cfg.t_end = parse_num(raw.t_end, "--t-end");
  if (!raw.dt_out.empty()) cfg.dt_out = parse_num(raw.dt_out, "--dt-out");
  if (!raw.transient.empty()) cfg.transient = parse_num(raw.transient, "--transient");
  if (!raw.total_time.empty()) cfg.total_time = parse_num(raw.total_time, "--total-time");
  if (!raw.renorm_interval.empty())
    cfg.renorm_interval = parse_num(raw.renorm_interval, "--renorm-interval");
  if (!raw.width.empty()) cfg.width = parse_num(raw.width, "--width");
  if (!raw.delta.empty()) cfg.delta = parse_num(raw.delta, "--delta");
  if (!raw.horizon.empty()) cfg.horizon = parse_num(raw.horizon, "--horizon");

  if (!raw.packet.empty()) {
    if (raw.packet == "gaussian") cfg.packet = PacketKind::gaussian;
    else if (raw.packet == "dirac") cfg.packet = PacketKind::dirac;
    else if (raw.packet == "samples") cfg.packet = PacketKind::samples;
    else
      throw UsageError("--packet: expected gaussian, dirac or samples, got '" +
                       raw.packet + "'");
  }
  cfg.samples_path = raw.samples_csv;
  if (cfg.subcommand == Subcommand::expect && cfg.packet == PacketKind::samples &&
      cfg.samples_path.empty())
    throw UsageError("--samples-csv is required with --packet samples");

  const std::uint64_t seed =
      raw.seed.empty() ? 0 : detail::parse_u64(raw.seed, "--seed");
  if (!raw.quadrature.empty())
    cfg.scheme = detail::parse_quadrature(raw.quadrature, seed);
  else
    cfg.scheme.seed = seed;

  if (!raw.widths.empty()) {
    if (cfg.subcommand == Subcommand::scan) {
      cfg.scan_widths = detail::parse_list(raw.widths, "--widths");
    } else {
      cfg.widths = detail::parse_triple(raw.widths, "--widths");
    }
  }

  if (cfg.subcommand == Subcommand::scan)
    cfg.fit_out = raw.fit_out.empty() ? detail::derive_fit_path(cfg.out) : raw.fit_out;

  cfg.params.validate();
  cfg.integrator.validate();
  cfg.scheme.validate();
  return cfg;
}

inline RunConfig parse_args(int argc, const char* const* argv) {
  return parse_args(std::vector<std::string>(argv + 1, argv + argc));
}

/// Inverse of parse_args up to equivalence: feeding the result back through
/// parse_args reproduces the RunConfig.
inline std::vector<std::string> serialize_args(const RunConfig& cfg) {
  std::vector<std::string> a;
  auto push = [&a](const char* flag, std::string val) {
    a.emplace_back(flag);
    a.push_back(std::move(val));
  };
  switch (cfg.subcommand) {
    case Subcommand::trajectory: a.emplace_back("trajectory"); break;
    case Subcommand::expect: a.emplace_back("expect"); break;
    case Subcommand::lyapunov: a.emplace_back("lyapunov"); break;
    case Subcommand::ehrenfest: a.emplace_back("ehrenfest"); break;
    case Subcommand::scan: a.emplace_back("scan"); break;
  }
  push("--sigma", format_double(cfg.params.sigma));
  push("--tau", format_double(cfg.params.tau));
  push("--beta", format_double(cfg.params.beta));
  push("--method", cfg.integrator.method == Method::adaptive_rk54 ? "adaptive" : "rk4");
  push("--rel-tol", format_double(cfg.integrator.rel_tol));
  push("--abs-tol", format_double(cfg.integrator.abs_tol));
  push("--step", format_double(cfg.integrator.step));
  push("--max-steps", std::to_string(cfg.integrator.max_steps));
  push("--min-step", format_double(cfg.integrator.min_step));
  push("--out", cfg.out);

  const char* center_flag =
      (cfg.subcommand == Subcommand::trajectory || cfg.subcommand == Subcommand::lyapunov)
          ? "--p0"
          : "--center";
  push(center_flag, detail::triple_token(cfg.center));

  switch (cfg.subcommand) {
    case Subcommand::trajectory:
      push("--t-end", format_double(cfg.t_end));
      push("--dt-out", format_double(cfg.dt_out));
      break;
    case Subcommand::expect:
      push("--packet", cfg.packet == PacketKind::gaussian ? "gaussian"
                       : cfg.packet == PacketKind::dirac  ? "dirac"
                                                          : "samples");
      push("--widths", detail::triple_token(cfg.widths));
      if (!cfg.samples_path.empty()) push("--samples-csv", cfg.samples_path);
      push("--quadrature", detail::quadrature_token(cfg.scheme));
      push("--seed", std::to_string(cfg.scheme.seed));
      push("--t-end", format_double(cfg.t_end));
      push("--dt-out", format_double(cfg.dt_out));
      break;
    case Subcommand::lyapunov:
      push("--transient", format_double(cfg.transient));
      push("--total-time", format_double(cfg.total_time));
      push("--renorm-interval", format_double(cfg.renorm_interval));
      break;
    case Subcommand::ehrenfest:
      push("--width", format_double(cfg.width));
      push("--delta", format_double(cfg.delta));
      push("--horizon", format_double(cfg.horizon));
      push("--quadrature", detail::quadrature_token(cfg.scheme));
      push("--seed", std::to_string(cfg.scheme.seed));
      break;
    case Subcommand::scan: {
      std::string widths;
      for (std::size_t i = 0; i < cfg.scan_widths.size(); ++i) {
        if (i) widths += ',';
        widths += format_double(cfg.scan_widths[i]);
      }
      push("--widths", widths);
      push("--delta", format_double(cfg.delta));
      push("--horizon", format_double(cfg.horizon));
      push("--quadrature", detail::quadrature_token(cfg.scheme));
      push("--seed", std::to_string(cfg.scheme.seed));
      push("--fit-out", cfg.fit_out);
      break;
    }
  }
  return a;
}

namespace detail {

inline void append_crossing_row(CsvBuilder& csv, const EhrenfestResult& r) {
  csv.cell(r.width);
  if (r.width > 0.0)
    csv.cell(std::log(1.0 / r.width));
  else
    csv.cell("");
  if (r.crossing_time)
    csv.cell(*r.crossing_time);
  else
    csv.cell("");
  csv.cell(r.crossing_time ? "true" : "false");
  csv.end_row();
}

}  // namespace detail

/// Executes the run and writes its CSV artifact(s) atomically. Prints one
/// summary line to stderr.
inline void run(const RunConfig& cfg) {
  switch (cfg.subcommand) {
    case Subcommand::trajectory: {
      const std::vector<double> grid = uniform_grid(cfg.t_end, cfg.dt_out);
      const std::vector<PhasePoint> states =
          grid_states(cfg.center, cfg.params, grid, cfg.integrator);
      CsvBuilder csv;
      csv.cell("t").cell("p1").cell("p2").cell("p3").end_row();
      for (std::size_t i = 0; i < grid.size(); ++i)
        csv.cell(grid[i]).cell(states[i].p1).cell(states[i].p2).cell(states[i].p3).end_row();
      write_file_atomic(cfg.out, csv.str());
      std::cerr << "trajectory: wrote " << cfg.out << " (" << grid.size() << " rows)\n";
      return;
    }
    case Subcommand::expect: {
      WavepacketSpec packet;
      switch (cfg.packet) {
        case PacketKind::gaussian:
          packet = WavepacketSpec::gaussian(cfg.center, cfg.widths);
          break;
        case PacketKind::dirac:
          packet = WavepacketSpec::dirac(cfg.center);
          break;
        case PacketKind::samples:
          packet = WavepacketSpec::samples(read_samples_csv(cfg.samples_path));
          break;
      }
      const std::vector<double> grid = uniform_grid(cfg.t_end, cfg.dt_out);
      const std::vector<MomentStats> stats =
          expectation(packet, cfg.scheme, cfg.params, grid, cfg.integrator);
      CsvBuilder csv;
      csv.cell("t")
          .cell("mean1").cell("mean2").cell("mean3")
          .cell("var1").cell("var2").cell("var3")
          .cell("se1").cell("se2").cell("se3")
          .end_row();
      for (const MomentStats& s : stats)
        csv.cell(s.time)
            .cell(s.mean.p1).cell(s.mean.p2).cell(s.mean.p3)
            .cell(s.variance.p1).cell(s.variance.p2).cell(s.variance.p3)
            .cell(s.standard_error.p1).cell(s.standard_error.p2).cell(s.standard_error.p3)
            .end_row();
      write_file_atomic(cfg.out, csv.str());
      std::cerr << "expect: wrote " << cfg.out << " (" << stats.size() << " rows)\n";
      return;
    }
    case Subcommand::lyapunov: {
      const LyapunovResult r = lyapunov_spectrum(cfg.center, cfg.params, cfg.transient,
                                                 cfg.total_time, cfg.renorm_interval,
                                                 cfg.integrator);
      CsvBuilder csv;
      csv.cell("lambda1").cell("lambda2").cell("lambda3").cell("ks_entropy_estimate")
          .end_row();
      csv.cell(r.exponents[0]).cell(r.exponents[1]).cell(r.exponents[2])
          .cell(r.ks_entropy_estimate).end_row();
      write_file_atomic(cfg.out, csv.str());
      std::cerr << "lyapunov: wrote " << cfg.out << " (lambda_max "
                << format_double(r.lambda_max()) << ")\n";
      return;
    }
    case Subcommand::ehrenfest: {
      const EhrenfestResult r = ehrenfest_time(cfg.center, cfg.width, cfg.delta,
                                               cfg.params, cfg.scheme, cfg.horizon,
                                               cfg.integrator);
      CsvBuilder csv;
      csv.cell("width").cell("ln_inv_width").cell("t_ehrenfest").cell("bounded").end_row();
      detail::append_crossing_row(csv, r);
      write_file_atomic(cfg.out, csv.str());
      std::cerr << "ehrenfest: wrote " << cfg.out << "\n";
      return;
    }
    case Subcommand::scan: {
      const EhrenfestScan r =
          ehrenfest_scan(cfg.center, cfg.scan_widths, cfg.delta, cfg.params, cfg.scheme,
                         cfg.horizon, cfg.integrator);
      CsvBuilder rows;
      rows.cell("width").cell("ln_inv_width").cell("t_ehrenfest").cell("bounded").end_row();
      for (const EhrenfestResult& row : r.rows) detail::append_crossing_row(rows, row);
      write_file_atomic(cfg.out, rows.str());
      CsvBuilder fit;
      fit.cell("fitted_slope").cell("lambda_max").cell("slope_times_lambda").end_row();
      fit.cell(r.fitted_slope).cell(r.lambda_reference)
          .cell(r.fitted_slope * r.lambda_reference).end_row();
      write_file_atomic(cfg.fit_out, fit.str());
      std::cerr << "scan: wrote " << cfg.out << " (" << r.rows.size() << " rows) and "
                << cfg.fit_out << "\n";
      return;
    }
  }
}

/// Full front end: parse, run, map errors to exit codes
/// (0 success, 2 usage, 3 numerical, 4 insufficient data, 5 I/O).
inline int run_main(int argc, const char* const* argv) {
  try {
    const RunConfig cfg = parse_args(argc, argv);
    run(cfg);
    return 0;
  } catch (const CliExit& e) {
    return e.code;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NonConvergence& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ResourceLimit& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const InvalidState& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const InsufficientData& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ehrenfest::cli
