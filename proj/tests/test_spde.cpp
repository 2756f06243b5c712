#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "spdelab/error.hpp"
#include "spdelab/rng.hpp"
#include "spdelab/spde.hpp"

using namespace spdelab;

namespace {

// Discrete heat kernel of the explicit scheme on Z by Fourier inversion:
//   (1/2pi) int (1 - 4 lambda sin^2(theta/2))^n cos(k theta) dtheta,
// exact with M > n + |k| equispaced nodes.
double lattice_heat(double lambda, int n, int k) {
  const int m = 4 * (n + std::abs(k)) + 8;
  double s = 0.0;
  for (int q = 0; q < m; ++q) {
    const double th = 2.0 * std::numbers::pi * q / m;
    s += std::pow(1.0 - 4.0 * lambda * std::pow(std::sin(0.5 * th), 2), n) * std::cos(k * th);
  }
  return s / m;
}

}  // namespace

TEST_CASE("initial densities") {
  const GridSpec g{1.0, 16, -4.0, 4.0, 80};
  const auto ind = InitialDensity::indicator(g, 2.0, -1.0, 1.0);
  CHECK(ind.mass == doctest::Approx(2.0 * 20 * g.dy()));
  CHECK(ind.max_value == 2.0);
  const auto gb = InitialDensity::gaussian_bump(g, 1.0, 0.0, 0.5);
  CHECK(gb.mass == doctest::Approx(0.5 * std::sqrt(2.0 * std::numbers::pi)).epsilon(1e-6));
  CHECK_THROWS_AS(InitialDensity::tabulated(g, std::vector<double>(3, 1.0)), Error);
  std::vector<double> neg(80, 0.0);
  neg[3] = -1.0;
  CHECK_THROWS_AS(InitialDensity::tabulated(g, neg), Error);
  CHECK(parse_initial_family("indicator") == InitialFamily::Indicator);
}

TEST_CASE("finite differences reproduce the lattice heat kernel") {
  const GridSpec g{0.5, 40, -10.0, 10.0, 100};
  std::vector<double> point(100, 0.0);
  point[50] = 1.0 / g.dy();
  const auto mu = InitialDensity::tabulated(g, point);
  const auto zero_w = SheetSample::zeros(g, stream_id("W"));
  const auto zero_v = SheetSample::zeros(g, stream_id("V"));
  const double nu = 0.5;
  const auto s = evolve_fd(g, mu, SmoothingKernel::zero(), zero_w, zero_v, nu);
  const double lambda = nu * g.dt() / (g.dy() * g.dy());
  for (int j = 10; j < 90; ++j) {
    CHECK(std::abs(s.x(40, static_cast<std::size_t>(j)) - lattice_heat(lambda, 40, j - 50) / g.dy()) < 1e-12);
  }
  for (double m : s.mass) CHECK(m == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("noise-free transport conserves mass") {
  const GridSpec g{0.25, 64, -8.0, 8.0, 128};
  const auto mu = InitialDensity::gaussian_bump(g, 1.0, 0.0, 0.5);
  const auto w = sample_sheet(g, 1, "W");
  const auto v0 = SheetSample::zeros(g, stream_id("V"));
  const auto k = SmoothingKernel::gaussian_bump(0.5, 0.5);
  const auto s = evolve_fd(g, mu, k, w, v0, default_diffusion(k, g));
  for (double m : s.mass) CHECK(m == doctest::Approx(mu.mass).epsilon(1e-12));
}

TEST_CASE("fd step errors") {
  const GridSpec g{1.0, 4, -1.0, 1.0, 40};
  const auto mu = InitialDensity::indicator(g, 1.0, -0.2, 0.2);
  const auto z = SheetSample::zeros(g, 0);
  FieldState s = initial_state(g, mu, Scheme::FiniteDifference, 0.5, 0, 0);
  try {
    step_finite_difference(s, SmoothingKernel::zero(), z, z, 0);
    FAIL("expected cfl-violation");
  } catch (const Error& e) {
    CHECK(e.code() == "cfl-violation");
  }
  CHECK_FALSE(cfl_ok(g, 0.5));
  CHECK(default_diffusion(SmoothingKernel::zero(), g) == 0.5);
}

TEST_CASE("convolution scheme degenerate cases") {
  const GridSpec g{0.25, 8, -10.0, 10.0, 64};
  const auto w = sample_sheet(g, 2, "W");
  const auto v = sample_sheet(g, 3, "V");
  const auto v0 = SheetSample::zeros(g, stream_id("V"));
  const auto k = SmoothingKernel::gaussian_bump(0.3, 0.5);
  ConvolutionOptions o;
  o.n_paths = 200;
  const auto none = InitialDensity::tabulated(g, std::vector<double>(64, 0.0));
  const auto s0 = evolve_convolution(k, w, v, none, o);
  CHECK(s0.x.hilbert_schmidt_norm() == 0.0);
  const auto mu = InitialDensity::indicator(g, 1.0, -0.5, 0.5);
  const auto s1 = evolve_convolution(k, w, v0, mu, o);
  CHECK(s1.x2.hilbert_schmidt_norm() == 0.0);
  for (int i = 0; i <= g.n_t; ++i)
    for (int j = 0; j < g.n_x; ++j) CHECK(s1.x(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) == s1.x1(static_cast<std::size_t>(i), static_cast<std::size_t>(j)));
  o.density_budget = 500;
  try {
    (void)evolve_convolution(k, w, v0, mu, o);
    FAIL("expected budget-exceeded");
  } catch (const Error& e) {
    CHECK(e.code() == "budget-exceeded");
  }
}

TEST_CASE("convolution scheme is worker-count invariant") {
  const GridSpec g{0.25, 6, -10.0, 10.0, 48};
  const auto w = sample_sheet(g, 2, "W");
  const auto v = sample_sheet(g, 3, "V");
  const auto k = SmoothingKernel::gaussian_bump(0.3, 0.5);
  const auto mu = InitialDensity::indicator(g, 1.0, -0.5, 0.5);
  ConvolutionOptions o;
  o.n_paths = 64;
  const auto a = evolve_convolution(k, w, v, mu, o);
  o.workers = 3;
  const auto b = evolve_convolution(k, w, v, mu, o);
  CHECK(crosscheck(a, b).back() == 0.0);
  CHECK(crosscheck(a, a).front() == 0.0);
}

TEST_CASE("zero-kernel convolution reproduces the heat semigroup") {
  const GridSpec g{0.25, 16, -6.0, 6.0, 48};
  const auto w = SheetSample::zeros(g, stream_id("W"));
  const auto v = SheetSample::zeros(g, stream_id("V"));
  const auto mu = InitialDensity::indicator(g, 1.0, -1.0, 1.0);
  ConvolutionOptions o;
  o.n_paths = 4000;
  o.seed_b = 17;
  const auto s = evolve_convolution(SmoothingKernel::zero(), w, v, mu, o);
  const auto exact = heat_solution(mu, g, g.t_max, 0.5);
  double diff = 0.0, ref = 0.0;
  for (int j = 0; j < g.n_x; ++j) {
    diff += std::pow(s.x(16, static_cast<std::size_t>(j)) - exact[static_cast<std::size_t>(j)], 2);
    ref += exact[static_cast<std::size_t>(j)] * exact[static_cast<std::size_t>(j)];
  }
  CHECK(std::sqrt(diff / ref) < 0.05);
  CHECK(s.mass.back() == doctest::Approx(mu.mass).epsilon(0.02));
}

TEST_CASE("initial term with a gaussian initial density") {
  const GridSpec g{1.0, 32, -9.0, 9.0, 72};
  const auto w = SheetSample::zeros(g, stream_id("W"));
  const double s0 = 0.5;
  auto values = InitialDensity::gaussian_bump(g, 1.0 / (s0 * std::sqrt(2.0 * std::numbers::pi)), 0.0, s0).values;
  for (int j = 0; j < g.n_x; ++j)
    if (std::abs(g.y(j)) > 3.0) values[static_cast<std::size_t>(j)] = 0.0;
  const auto mu = InitialDensity::tabulated(g, values);
  DensityOptions o;
  o.n_paths = 2000;
  o.tail = TailForm::Nearest;
  const auto x1 = initial_term(mu, SmoothingKernel::zero(), w, 32, o);
  const double var = s0 * s0 + 1.0;
  int misses = 0;
  for (int j = 0; j < g.n_x; ++j) {
    const double y = g.y(j);
    // node quadrature of the convolution, independent of the estimator
    double exact = 0.0;
    for (int z = 0; z < g.n_x; ++z)
      exact += mu.values[static_cast<std::size_t>(z)] * g.dy() * std::exp(-0.5 * std::pow(y - g.y(z), 2)) /
               std::sqrt(2.0 * std::numbers::pi);
    CHECK(exact == doctest::Approx(std::exp(-0.5 * y * y / var) / std::sqrt(2.0 * std::numbers::pi * var)).epsilon(1e-3).scale(1e-3));
    // far tails are rare events for 2000 paths; their standard errors are unreliable
    if (std::abs(y) <= 3.5 && std::abs(x1.values[static_cast<std::size_t>(j)] - exact) > 3.0 * x1.std_err[static_cast<std::size_t>(j)] + 1e-12) ++misses;
  }
  CHECK(misses <= 2);
}
