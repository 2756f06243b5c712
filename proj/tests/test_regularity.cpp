#include <cmath>
#include <vector>

#include "doctest.h"
#include "spdelab/error.hpp"
#include "spdelab/regularity.hpp"
#include "spdelab/rng.hpp"

using namespace spdelab;

TEST_CASE("classify") {
  CHECK(classify(0.5, 0.05, 0.5) == Verdict::SatisfiesBound);
  CHECK(classify(0.46, 0.0, 0.5) == Verdict::SatisfiesBound);
  CHECK(classify(0.5, 0.1, 0.5) == Verdict::Inconclusive);
  CHECK(classify(0.40, 0.06, 0.5) == Verdict::Inconclusive);
  CHECK(classify(0.30, 0.1, 0.5) == Verdict::Violates);
  CHECK(classify(0.44, 0.0, 0.5) == Verdict::Violates);
  CHECK(classify(0.30, 0.2, 0.5) == Verdict::Inconclusive);
  CHECK(to_string(Verdict::SatisfiesBound) == "SATISFIES_BOUND");
  CHECK(to_string(Verdict::Violates) == "VIOLATES");
  CHECK(to_string(Verdict::Inconclusive) == "INCONCLUSIVE");
}

TEST_CASE("exact power law") {
  const std::vector<double> lags{0.1, 0.2, 0.4, 0.8};
  std::vector<double> m;
  for (double l : lags) m.push_back(3.0 * std::pow(l, 1.25));
  const auto fit = fit_power_law(lags, m);
  CHECK(fit.slope == doctest::Approx(1.25).epsilon(1e-12));
  CHECK(std::exp(fit.intercept) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(fit.ci < 1e-6);
}

TEST_CASE("fit errors") {
  const std::vector<double> two{0.1, 0.2};
  CHECK_THROWS_WITH_AS(fit_power_law(two, two), doctest::Contains("insufficient-lags"), Error);
  const std::vector<double> lags{0.1, 0.2, 0.4}, bad{1.0, 0.0, 1.0};
  CHECK_THROWS_AS(fit_power_law(lags, bad), Error);
  CHECK_THROWS_WITH_AS(moment_estimate(std::vector<double>{}, 2), doctest::Contains("no-data"), Error);
}

TEST_CASE("student t table") {
  CHECK(student_t_975(1) == doctest::Approx(12.706));
  CHECK(student_t_975(2) == doctest::Approx(4.303));
  CHECK(student_t_975(1000) == doctest::Approx(1.96).epsilon(0.01));
}

TEST_CASE("moment estimates") {
  const std::vector<double> c(50, 2.0);
  const auto e = moment_estimate(c, 4);
  CHECK(e.moment == doctest::Approx(16.0));
  CHECK(e.std_err == doctest::Approx(0.0));
  CHECK(e.n == 50);

  // jackknife se of a mean equals the usual s / sqrt(n)
  const std::vector<double> x{1.0, -2.0, 3.0, 0.5};
  const auto j = moment_estimate(x, 2);
  std::vector<double> sq;
  double mean = 0.0;
  for (double v : x) {
    sq.push_back(v * v);
    mean += v * v / 4.0;
  }
  double ss = 0.0;
  for (double v : sq) ss += (v - mean) * (v - mean);
  CHECK(j.moment == doctest::Approx(mean));
  CHECK(j.std_err == doctest::Approx(std::sqrt(ss / 3.0 / 4.0)));

  std::vector<double> z(200000);
  CounterNormal(7, stream_id("Z")).fill(0, z);
  CHECK(moment_estimate(z, 2).moment == doctest::Approx(1.0).epsilon(0.01));
  CHECK(moment_estimate(z, 4).moment == doctest::Approx(3.0).epsilon(0.03));
}

TEST_CASE("replicated slope of scaled normals") {
  const std::vector<double> lags{0.01, 0.02, 0.04, 0.08};
  Matrix s(4000, lags.size());
  std::vector<double> z(4000 * lags.size());
  CounterNormal(11, stream_id("S")).fill(0, z);
  for (std::size_t k = 0; k < s.rows(); ++k)
    for (std::size_t l = 0; l < lags.size(); ++l) s(k, l) = std::pow(lags[l], 0.35) * z[k * lags.size() + l];
  const auto r = replicated_slope("synthetic", lags, s, 4, 1.4, 1.4);
  CHECK(r.slope == doctest::Approx(1.4).epsilon(0.05));
  CHECK(r.ci > 0.0);
  CHECK(r.ci < 0.2);
  CHECK(r.verdict != Verdict::Violates);
  CHECK(r.replicas == 4000);
  CHECK(std::abs(r.slope - 1.4) < r.ci + 0.02);

  // exact scaling of one sample set gives zero spread
  Matrix d(100, lags.size());
  for (std::size_t k = 0; k < d.rows(); ++k)
    for (std::size_t l = 0; l < lags.size(); ++l) d(k, l) = std::pow(lags[l], 0.25) * z[k];
  const auto e = replicated_slope("exact", lags, d, 2, 0.5, 0.5);
  CHECK(e.slope == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(e.ci < 1e-10);
}

TEST_CASE("holder setup validation") {
  HolderSetup h;
  h.grid = GridSpec{1.0, 32, -4.0, 4.0, 32};
  h.mu = InitialDensity::indicator(h.grid, 1.0, -1.0, 1.0);
  h.time_lags = {4, 8, 32};
  CHECK_THROWS_WITH_AS(holder_samples(h), doctest::Contains("invalid-config"), Error);
  h.time_lags = {4, 8};
  CHECK_THROWS_WITH_AS(holder_samples(h), doctest::Contains("insufficient-lags"), Error);
}

TEST_CASE("holder samples are worker invariant") {
  HolderSetup h;
  h.grid = GridSpec{1.0, 64, -4.0, 4.0, 32};
  h.mu = InitialDensity::indicator(h.grid, 2.0, -2.0, 2.0);
  h.replicas = 8;
  h.time_lags = {2, 4, 8};
  h.space_lags = {1, 2, 4};
  const auto a = holder_samples(h);
  h.workers = 3;
  const auto b = holder_samples(h);
  for (std::size_t k = 0; k < a.time.rows(); ++k)
    for (std::size_t l = 0; l < 3; ++l) {
      CHECK(a.time(k, l) == b.time(k, l));
      CHECK(a.space(k, l) == b.space(k, l));
    }
  const auto moments = holder_moments(h, a);
  CHECK(moments.size() == 4);
  CHECK(holder_time(h, a).size() == 2);
}

TEST_CASE("lemma suite for the zero kernel") {
  LemmaSetup s;
  s.kernel = SmoothingKernel::zero();
  s.samples = 2000;
  s.env_count = 20;
  s.env_paths = 400;
  const auto rows = check_lemma_suite(s);
  REQUIRE(rows.size() == 11);
  for (const auto& r : rows) {
    INFO(r.name, " slope=", r.slope);
    CHECK(r.verdict == Verdict::SatisfiesBound);
  }
  // ||D xi_t||_H = sqrt(t - r) exactly
  for (std::size_t k = 0; k < s.spans.size(); ++k) {
    CHECK(rows[0].measured[k] == doctest::Approx(std::sqrt(s.spans[k])).epsilon(1e-9));
  }
  CHECK(rows[1].measured[0] == doctest::Approx(1.0));
}
