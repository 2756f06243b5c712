#include <cmath>
#include <vector>

#include "doctest.h"
#include "spdelab/error.hpp"
#include "spdelab/malliavin.hpp"
#include "spdelab/particle.hpp"

using namespace spdelab;

namespace {

struct Fixture {
  GridSpec grid{1.0, 24, -8.0, 8.0, 160};
  SmoothingKernel kernel = SmoothingKernel::gaussian_bump(0.9, 0.5);
  SheetSample sheet = sample_sheet(grid, 41, "W");
  BrownianPath bm = sample_bm(grid, 42, bm_stream_label(0));
};

double end_with(const Fixture& f, std::vector<double> db, int r, int t) {
  return simulate_path(f.kernel, f.sheet, db, r, 0.2, t).end();
}

}  // namespace

TEST_CASE("zero kernel particle is the Brownian motion") {
  Fixture f;
  const auto zero = SmoothingKernel::zero();
  const auto p = simulate_path(zero, f.sheet, f.bm.increments, 4, 1.5, 20);
  CHECK(p.length() == 16);
  CHECK(p.end() == doctest::Approx(1.5 + f.bm.values[20] - f.bm.values[4]).epsilon(1e-14));
  for (double d : first_derivative(p)) CHECK(d == 1.0);
  const auto d2 = second_derivative(p);
  CHECK(d2.hilbert_schmidt_norm() == 0.0);
  const auto st = malliavin_state(p);
  CHECK(st.h_norm_sq == doctest::Approx(16 * f.grid.dt()));
  CHECK(st.divergence.delta == doctest::Approx((f.bm.values[20] - f.bm.values[4]) / (16 * f.grid.dt())));
}

TEST_CASE("euler-form derivatives are the exact gradient of the scheme") {
  Fixture f;
  const int r = 3, t = 21;
  const auto p = simulate_path(f.kernel, f.sheet, f.bm.increments, r, 0.2, t);
  const auto d1 = first_derivative(p, DerivativeForm::Euler);
  const auto d2 = second_derivative(p, DerivativeForm::Euler);
  const double e = 1e-6;
  for (int k = 0; k < t - r; ++k) {
    auto up = f.bm.increments, dn = f.bm.increments;
    up[static_cast<std::size_t>(r + k)] += e;
    dn[static_cast<std::size_t>(r + k)] -= e;
    const double fd = (end_with(f, up, r, t) - end_with(f, dn, r, t)) / (2 * e);
    CHECK(d1[static_cast<std::size_t>(k)] == doctest::Approx(fd).epsilon(1e-6));
    // row k of D2 is the gradient of D1 along dB_{r+k}
    const auto pu = simulate_path(f.kernel, f.sheet, up, r, 0.2, t);
    const auto pd = simulate_path(f.kernel, f.sheet, dn, r, 0.2, t);
    const auto d1u = first_derivative(pu, DerivativeForm::Euler);
    const auto d1d = first_derivative(pd, DerivativeForm::Euler);
    for (int j = 0; j < t - r; ++j) {
      const double fd2 = (d1u[static_cast<std::size_t>(j)] - d1d[static_cast<std::size_t>(j)]) / (2 * e);
      CHECK(d2(static_cast<std::size_t>(k), static_cast<std::size_t>(j)) == doctest::Approx(fd2).epsilon(1e-5).scale(1e-6));
    }
  }
}

TEST_CASE("exponential-form second derivative differentiates the first") {
  Fixture f;
  const int r = 0, t = 16;
  const auto p = simulate_path(f.kernel, f.sheet, f.bm.increments, r, -0.4, t);
  const auto d2 = second_derivative(p);
  const double e = 1e-6;
  for (int k = 0; k < t - r; ++k) {
    auto up = f.bm.increments, dn = f.bm.increments;
    up[static_cast<std::size_t>(k)] += e;
    dn[static_cast<std::size_t>(k)] -= e;
    const auto a = first_derivative(simulate_path(f.kernel, f.sheet, up, r, -0.4, t));
    const auto b = first_derivative(simulate_path(f.kernel, f.sheet, dn, r, -0.4, t));
    for (int j = 0; j < t - r; ++j) {
      const double fd = (a[static_cast<std::size_t>(j)] - b[static_cast<std::size_t>(j)]) / (2 * e);
      CHECK(d2(static_cast<std::size_t>(k), static_cast<std::size_t>(j)) == doctest::Approx(fd).epsilon(1e-5).scale(1e-6));
    }
  }
}

TEST_CASE("exponential and euler forms agree to first order in dt") {
  Fixture f;
  const auto p = simulate_path(f.kernel, f.sheet, f.bm.increments, 0, 0.0, 24);
  const auto a = first_derivative(p, DerivativeForm::Exponential);
  const auto b = first_derivative(p, DerivativeForm::Euler);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(std::log(a[k] / b[k])) < 0.5);
}

TEST_CASE("first derivative is the stochastic exponential of the suffix martingale") {
  Fixture f;
  const auto p = simulate_path(f.kernel, f.sheet, f.bm.increments, 2, 0.1, 22);
  const auto d1 = first_derivative(p);
  double qv = 0.0;
  for (int k = p.length() - 1; k >= 0; --k) {
    const auto uk = static_cast<std::size_t>(k);
    CHECK(d1[uk] == doctest::Approx(std::exp(p.m_suffix[uk + 1] - 0.5 * qv)).epsilon(1e-12));
    qv += p.steps[uk].grad_sq * p.dt;
  }
}

TEST_CASE("closed-form divergence matches the matrix form at every time") {
  Fixture f;
  for (auto form : {DerivativeForm::Exponential, DerivativeForm::Euler}) {
    const auto p = simulate_path(f.kernel, f.sheet, f.bm.increments, 1, 0.3, 24);
    const auto w = divergence_all_times(p, form);
    for (int tau = 1; tau <= p.length(); ++tau) {
      const auto st = malliavin_state(p, form, p.r_index + tau);
      const auto i = static_cast<std::size_t>(tau - 1);
      CHECK(w.delta[i] == doctest::Approx(st.divergence.delta).epsilon(1e-10).scale(1.0));
      CHECK(w.adapted_sum[i] == doctest::Approx(st.divergence.adapted_sum).epsilon(1e-10).scale(1.0));
      CHECK(w.h_norm_sq[i] == doctest::Approx(st.h_norm_sq).epsilon(1e-12));
    }
  }
}

TEST_CASE("the particle refuses to leave the kernel-safe window") {
  GridSpec g{1.0, 16, -1.0, 1.0, 40};
  const auto s = sample_sheet(g, 1, "W");
  std::vector<double> db(16, 0.2);
  try {
    (void)simulate_path(SmoothingKernel::zero(), s, db, 0, 0.0, 16);
    FAIL("expected domain-exit");
  } catch (const Error& e) {
    CHECK(e.code() == "domain-exit");
    CHECK(e.module() == "particle");
  }
  CHECK_THROWS_AS((void)simulate_path(SmoothingKernel::zero(), s, db, 5, 0.0, 5), Error);
}
