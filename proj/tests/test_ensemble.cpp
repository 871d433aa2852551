#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <vector>

#include "ehrenfest/ensemble.hpp"
#include "helpers.hpp"

using namespace ehrenfest;

namespace {

IntegratorConfig default_cfg() { return IntegratorConfig{}; }

double max_comp_diff(const PhasePoint& a, const PhasePoint& b) {
  return std::max({std::abs(a.p1 - b.p1), std::abs(a.p2 - b.p2), std::abs(a.p3 - b.p3)});
}

}  // namespace

TEST_CASE("packet validation", "[ensemble]") {
  CHECK_THROWS_AS((WavepacketSpec::gaussian({1.0, 1.0, 1.0}, {0.0, 1e-2, 1e-2})),
                  InvalidArgument);
  CHECK_THROWS_AS((WavepacketSpec::gaussian({1.0, 1.0, 1.0}, {1e-2, -1e-2, 1e-2})),
                  InvalidArgument);
  CHECK_THROWS_AS(WavepacketSpec::samples({}), InvalidArgument);
  CHECK_NOTHROW((WavepacketSpec::dirac({0.0, 0.0, 0.0})));
  CHECK_NOTHROW((WavepacketSpec::isotropic_gaussian({1.0, 1.0, 1.0}, 1e-4)));
}

TEST_CASE("scheme validation", "[ensemble]") {
  CHECK_THROWS_AS(QuadratureScheme::gauss_hermite(4), InvalidArgument);
  CHECK_THROWS_AS(QuadratureScheme::gauss_hermite(0), InvalidArgument);
  CHECK_THROWS_AS(QuadratureScheme::monte_carlo(0, 1), InvalidArgument);
  CHECK_NOTHROW(QuadratureScheme::gauss_hermite(1));
  CHECK_NOTHROW(QuadratureScheme::monte_carlo(1, 0));
}

TEST_CASE("a Dirac packet is one unit-weight node", "[ensemble]") {
  const auto packet = WavepacketSpec::dirac({2.0, -1.0, 0.5});
  for (const auto& scheme :
       {QuadratureScheme::gauss_hermite(9), QuadratureScheme::monte_carlo(4096, 7)}) {
    const EnsembleNodes nodes = quadrature_nodes(packet, scheme);
    REQUIRE(nodes.points.size() == 1);
    CHECK((nodes.points[0] == PhasePoint{2.0, -1.0, 0.5}));
    CHECK(nodes.weights[0] == 1.0);
    CHECK_FALSE(nodes.stochastic);
  }
}

TEST_CASE("order-one Gauss-Hermite collapses to the center", "[ensemble]") {
  const auto packet = WavepacketSpec::gaussian({1.5, -0.25, 3.0}, {1e-2, 1e-3, 1e-4});
  const EnsembleNodes nodes = quadrature_nodes(packet, QuadratureScheme::gauss_hermite(1));
  REQUIRE(nodes.points.size() == 1);
  CHECK((nodes.points[0] == PhasePoint{1.5, -0.25, 3.0}));
  CHECK(nodes.weights[0] == 1.0);
}

TEST_CASE("tensor grid size, weight normalization and center membership", "[ensemble]") {
  const auto packet = WavepacketSpec::isotropic_gaussian({1.0, 1.0, 1.0}, 1e-3);
  const EnsembleNodes nodes = quadrature_nodes(packet, QuadratureScheme::gauss_hermite(9));
  REQUIRE(nodes.points.size() == 729);
  double total = 0.0;
  for (double w : nodes.weights) total += w;
  CHECK(std::abs(total - 1.0) <= 1e-14);
  // odd order: the center itself is a node
  const bool has_center =
      std::any_of(nodes.points.begin(), nodes.points.end(),
                  [](const PhasePoint& p) { return p == PhasePoint{1.0, 1.0, 1.0}; });
  CHECK(has_center);
}

TEST_CASE("node moments of a unit-width packet", "[ensemble]") {
  const auto packet = WavepacketSpec::isotropic_gaussian({0.0, 0.0, 0.0}, 1.0);
  const EnsembleNodes nodes = quadrature_nodes(packet, QuadratureScheme::gauss_hermite(9));
  double m2 = 0.0, m4 = 0.0;
  for (std::size_t i = 0; i < nodes.points.size(); ++i) {
    const double x = nodes.points[i].p1;
    m2 += nodes.weights[i] * x * x;
    m4 += nodes.weights[i] * x * x * x * x;
  }
  CHECK(std::abs(m2 - 1.0) <= 1e-12);
  CHECK(std::abs(m4 - 3.0) <= 1e-12);
}

TEST_CASE("sample_density draws are deterministic and correctly shaped", "[ensemble]") {
  SECTION("dirac: n copies of the center") {
    const auto packet = WavepacketSpec::dirac({1.0, 2.0, 3.0});
    const auto pts = sample_density(packet, 5, 42);
    REQUIRE(pts.size() == 5);
    for (const auto& p : pts) CHECK((p == PhasePoint{1.0, 2.0, 3.0}));
  }

  SECTION("same seed, same draws; different seed, different draws") {
    const auto packet = WavepacketSpec::isotropic_gaussian({0.0, 0.0, 0.0}, 1.0);
    const auto a = sample_density(packet, 1000, 9);
    const auto b = sample_density(packet, 1000, 9);
    const auto c = sample_density(packet, 1000, 10);
    REQUIRE(a.size() == b.size());
    bool all_equal = true, any_diff_c = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      all_equal = all_equal && a[i] == b[i];
      any_diff_c = any_diff_c || !(a[i] == c[i]);
    }
    CHECK(all_equal);
    CHECK(any_diff_c);
  }

  SECTION("gaussian: empirical mean within 4 sigma/sqrt(n)") {
    const std::size_t n = 200000;
    const auto packet = WavepacketSpec::isotropic_gaussian({2.0, -1.0, 0.5}, 1.0);
    const auto pts = sample_density(packet, n, 2718);
    PhasePoint sum{};
    for (const auto& p : pts) sum += p;
    const double inv = 1.0 / static_cast<double>(n);
    const PhasePoint mean{sum.p1 * inv, sum.p2 * inv, sum.p3 * inv};
    const double bound = 4.0 / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(mean.p1 - 2.0) <= bound);
    CHECK(std::abs(mean.p2 - -1.0) <= bound);
    CHECK(std::abs(mean.p3 - 0.5) <= bound);
    // second moment sanity
    double v1 = 0.0;
    for (const auto& p : pts) v1 += (p.p1 - mean.p1) * (p.p1 - mean.p1);
    v1 *= inv;
    CHECK(std::abs(v1 - 1.0) <= 0.05);
  }

  SECTION("sample lists resample from the given points") {
    const std::vector<PhasePoint> base{{1.0, 0.0, 0.0}, {0.0, 2.0, 0.0}, {0.0, 0.0, 3.0}};
    const auto packet = WavepacketSpec::samples(base);
    const auto pts = sample_density(packet, 50, 5);
    REQUIRE(pts.size() == 50);
    for (const auto& p : pts) {
      const bool member = std::any_of(base.begin(), base.end(),
                                      [&](const PhasePoint& q) { return q == p; });
      CHECK(member);
    }
  }

  SECTION("n must be positive") {
    const auto packet = WavepacketSpec::dirac({0.0, 0.0, 0.0});
    CHECK_THROWS_AS(sample_density(packet, 0, 1), InvalidArgument);
  }
}

TEST_CASE("Dirac expectation reproduces the flow map bit-exactly", "[ensemble]") {
  const LorenzParams prm{};
  const IntegratorConfig cfg = default_cfg();
  const PhasePoint center{1.0, 1.0, 1.0};
  const auto grid = uniform_grid(5.0, 0.5);
  const auto stats = expectation(WavepacketSpec::dirac(center),
                                 QuadratureScheme::gauss_hermite(9), prm, grid, cfg);
  REQUIRE(stats.size() == grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const PhasePoint direct = flow_map(center, prm, grid[i], cfg);
    CHECK(stats[i].time == grid[i]);
    CHECK(stats[i].mean == direct);
    CHECK((stats[i].variance == PhasePoint{0.0, 0.0, 0.0}));
    CHECK((stats[i].standard_error == PhasePoint{0.0, 0.0, 0.0}));
  }
}

TEST_CASE("Gaussian moments at t = 0", "[ensemble]") {
  const LorenzParams prm{};
  const PhasePoint center{1.0, -2.0, 14.0};
  const PhasePoint widths{1e-3, 2e-3, 1.5e-3};
  const std::vector<double> grid{0.0};
  const auto stats = expectation(WavepacketSpec::gaussian(center, widths),
                                 QuadratureScheme::gauss_hermite(5), prm, grid,
                                 default_cfg());
  REQUIRE(stats.size() == 1);
  CHECK(max_comp_diff(stats[0].mean, center) <= 1e-12);
  CHECK(std::abs(stats[0].variance.p1 - widths.p1 * widths.p1) <= 1e-12);
  CHECK(std::abs(stats[0].variance.p2 - widths.p2 * widths.p2) <= 1e-12);
  CHECK(std::abs(stats[0].variance.p3 - widths.p3 * widths.p3) <= 1e-12);
  CHECK((stats[0].standard_error == PhasePoint{0.0, 0.0, 0.0}));
}

TEST_CASE("narrower packets track the center trajectory longer", "[ensemble]") {
  const LorenzParams prm{};
  const IntegratorConfig cfg = default_cfg();
  const PhasePoint center{1.0, 1.0, 1.0};
  const std::vector<double> grid{0.0, 1.0};
  const PhasePoint ref = flow_map(center, prm, 1.0, cfg);
  std::vector<double> deviation;
  for (double width : {1e-2, 1e-3, 1e-4}) {
    const auto stats = expectation(WavepacketSpec::isotropic_gaussian(center, width),
                                   QuadratureScheme::gauss_hermite(9), prm, grid, cfg);
    deviation.push_back((stats[1].mean - ref).norm());
  }
  CHECK(deviation[0] > deviation[1]);
  CHECK(deviation[1] > deviation[2]);
}

TEST_CASE("expectation is mirror-equivariant", "[ensemble]") {
  const LorenzParams prm{};
  const IntegratorConfig cfg = default_cfg();
  const PhasePoint center{1.0, 1.0, 1.0};
  const PhasePoint widths{1e-3, 2e-3, 1.5e-3};
  const auto grid = uniform_grid(1.0, 0.25);
  const auto direct = expectation(WavepacketSpec::gaussian(center, widths),
                                  QuadratureScheme::gauss_hermite(7), prm, grid, cfg);
  const auto mirrored = expectation(WavepacketSpec::gaussian(mirror(center), widths),
                                    QuadratureScheme::gauss_hermite(7), prm, grid, cfg);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(max_comp_diff(mirrored[i].mean, mirror(direct[i].mean)) <= 1e-9);
    CHECK(max_comp_diff(mirrored[i].variance, direct[i].variance) <= 1e-9);
  }
}

TEST_CASE("Monte Carlo agrees with Gauss-Hermite within sampling error", "[ensemble]") {
  const LorenzParams prm{};
  const IntegratorConfig cfg = default_cfg();
  const auto packet = WavepacketSpec::isotropic_gaussian({1.0, 1.0, 1.0}, 1e-3);
  const auto grid = uniform_grid(0.5, 0.1);
  const auto gh = expectation(packet, QuadratureScheme::gauss_hermite(9), prm, grid, cfg);
  const auto mc = expectation(packet, QuadratureScheme::monte_carlo(16384, 3), prm, grid, cfg);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(std::abs(gh[i].mean.p1 - mc[i].mean.p1) <= 5.0 * mc[i].standard_error.p1);
    CHECK(std::abs(gh[i].mean.p2 - mc[i].mean.p2) <= 5.0 * mc[i].standard_error.p2);
    CHECK(std::abs(gh[i].mean.p3 - mc[i].mean.p3) <= 5.0 * mc[i].standard_error.p3);
    CHECK(mc[i].standard_error.p1 > 0.0);
  }
}

TEST_CASE("expectation is bit-identical across thread budgets", "[ensemble]") {
  const LorenzParams prm{};
  const IntegratorConfig cfg = default_cfg();
  const auto packet = WavepacketSpec::isotropic_gaussian({1.0, 1.0, 1.0}, 1e-3);
  const auto grid = uniform_grid(0.5, 0.1);
  const auto scheme = QuadratureScheme::gauss_hermite(5);

  setenv("EHRENFEST_THREADS", "1", 1);
  const auto serial = expectation(packet, scheme, prm, grid, cfg);
  setenv("EHRENFEST_THREADS", "4", 1);
  const auto threaded = expectation(packet, scheme, prm, grid, cfg);
  unsetenv("EHRENFEST_THREADS");

  REQUIRE(serial.size() == threaded.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].mean == threaded[i].mean);
    CHECK(serial[i].variance == threaded[i].variance);
    CHECK(serial[i].standard_error == threaded[i].standard_error);
  }
}

TEST_CASE("node failures carry the node context", "[ensemble]") {
  const LorenzParams prm{};
  IntegratorConfig cfg = default_cfg();
  cfg.max_steps = 3;
  const auto packet = WavepacketSpec::isotropic_gaussian({1.0, 1.0, 1.0}, 1e-3);
  const std::vector<double> grid{0.0, 10.0};
  try {
    expectation(packet, QuadratureScheme::gauss_hermite(3), prm, grid, cfg);
    FAIL("expected ResourceLimit");
  } catch (const ResourceLimit& e) {
    CHECK(std::string(e.what()).find("node") != std::string::npos);
  }
}

TEST_CASE("grid validation", "[ensemble]") {
  const LorenzParams prm{};
  const IntegratorConfig cfg = default_cfg();
  const auto packet = WavepacketSpec::dirac({1.0, 1.0, 1.0});
  const auto scheme = QuadratureScheme::gauss_hermite(9);
  CHECK_THROWS_AS(expectation(packet, scheme, prm, std::vector<double>{}, cfg),
                  InvalidArgument);
  CHECK_THROWS_AS((expectation(packet, scheme, prm, std::vector<double>{0.0, 0.5, 0.25}, cfg)),
                  InvalidArgument);
  CHECK_THROWS_AS((expectation(packet, scheme, prm, std::vector<double>{-1.0, 0.5}, cfg)),
                  InvalidArgument);
  CHECK_THROWS_AS((expectation(packet, scheme, prm, std::vector<double>{0.0, 0.0}, cfg)),
                  InvalidArgument);
}

TEST_CASE("grid_states matches eval on a stored trajectory", "[ensemble]") {
  const LorenzParams prm{};
  const IntegratorConfig cfg = default_cfg();
  const PhasePoint p0{1.0, 1.0, 1.0};
  const auto grid = uniform_grid(1.0, 0.07);
  const auto states = grid_states(p0, prm, grid, cfg);
  REQUIRE(states.size() == grid.size());
  CHECK(states.front() == p0);
  // cross-check a few against an independent full integration's interpolant
  const Trajectory traj = integrate(p0, prm, 1.0, cfg);
  for (std::size_t i = 0; i < grid.size(); ++i)
    CHECK(max_comp_diff(states[i], traj.eval(grid[i])) <= 1e-9);
}

TEST_CASE("uniform_grid construction", "[ensemble]") {
  const auto g1 = uniform_grid(1.0, 0.01);
  REQUIRE(g1.size() == 101);
  CHECK(g1.front() == 0.0);
  CHECK(g1.back() == 1.0);

  const auto g2 = uniform_grid(1.0, 0.3);
  REQUIRE(g2.size() == 5);  // 0, 0.3, 0.6, 0.9, 1.0
  CHECK(g2.back() == 1.0);

  const auto g3 = uniform_grid(0.0, 0.1);
  REQUIRE(g3.size() == 1);
  CHECK(g3[0] == 0.0);

  const auto g4 = uniform_grid(0.5, 0.5);
  REQUIRE(g4.size() == 2);

  const auto g5 = uniform_grid(0.2, 0.5);
  REQUIRE(g5.size() == 2);
  CHECK(g5.back() == 0.2);

  CHECK_THROWS_AS(uniform_grid(1.0, 0.0), InvalidArgument);
  CHECK_THROWS_AS(uniform_grid(-1.0, 0.1), InvalidArgument);
}
