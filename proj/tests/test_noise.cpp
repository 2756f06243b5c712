#include <cmath>

#include "doctest.h"
#include "spdelab/error.hpp"
#include "spdelab/noise.hpp"
#include "spdelab/parallel.hpp"
#include "spdelab/rng.hpp"

using namespace spdelab;

TEST_CASE("sheet increments have variance dt*dy") {
  const GridSpec g{1.0, 128, -4.0, 4.0, 64};
  const auto s = sample_sheet(g, 11, "W");
  CHECK(s.passes_sanity_check());
  CHECK(std::abs(s.normalized_second_moment() - 1.0) < 5.0 / std::sqrt(128.0 * 64.0));
  RunningStats cross;
  for (int i = 0; i + 1 < g.n_t; ++i)
    for (int j = 0; j < g.n_x; ++j) cross.add(s.increment(i, j) * s.increment(i + 1, j) / (g.dt() * g.dy()));
  CHECK(std::abs(cross.mean) < 4.0 * cross.std_err());
}

TEST_CASE("lazy sheet reproduces the dense sheet") {
  const GridSpec g{0.5, 16, -2.0, 2.0, 20};
  const auto dense = sample_sheet(g, 99, "V");
  const LazySheet lazy(g, 99, "V");
  std::vector<double> scratch;
  for (int i = 0; i < g.n_t; ++i) {
    const auto row = lazy.row(i, 3, 17, scratch);
    for (int j = 3; j < 17; ++j) {
      CHECK(row[static_cast<std::size_t>(j - 3)] == dense.increment(i, j));
      CHECK(lazy.increment(i, j) == dense.increment(i, j));
    }
  }
  CHECK(sample_sheet(g, 99, "W").increment(0, 0) != dense.increment(0, 0));
}

TEST_CASE("line integral equals a direct sum") {
  const GridSpec g{1.0, 8, -6.0, 6.0, 120};
  const auto s = sample_sheet(g, 5, "W");
  const auto k = SmoothingKernel::gaussian_bump(0.8, 0.5);
  for (int order = 0; order < 3; ++order) {
    double direct = 0.0;
    for (int j = 0; j < g.n_x; ++j) direct += k.eval(order, g.y(j) - 0.3) * s.increment(2, j);
    CHECK(sheet_line_integral(s, k, order, 2, 0.3, 1.0) == doctest::Approx(direct).epsilon(1e-12));
  }
}

TEST_CASE("brownian path increments") {
  const GridSpec g{2.0, 400, -1.0, 1.0, 4};
  const auto b = sample_bm(g, 3, bm_stream_label(0));
  REQUIRE(b.values.size() == 401);
  CHECK(b.values[0] == 0.0);
  RunningStats q;
  for (double d : b.increments) q.add(d * d / g.dt());
  CHECK(std::abs(q.mean - 1.0) < 4.0 * q.std_err());
  std::vector<double> tail(10);
  fill_bm_increments(g, 3, stream_id(bm_stream_label(0)), 100, tail);
  for (int k = 0; k < 10; ++k) CHECK(tail[static_cast<std::size_t>(k)] == b.increments[static_cast<std::size_t>(100 + k)]);
}

TEST_CASE("grid helpers") {
  const GridSpec g{1.0, 64, -8.0, 8.0, 160};
  CHECK(g.time_index(0.5) == 32);
  CHECK_THROWS_AS(g.time_index(0.5001), Error);
  CHECK(g.y(g.nearest_node(0.07)) == doctest::Approx(0.05));
  CHECK(g.nearest_node(-100.0) == 0);
  GridSpec bad = g;
  bad.n_x = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK(GridSpec{1.0, 64, -12.0, 12.0, 240}.margin_warnings(SmoothingKernel::zero()).empty());
  GridSpec narrow{1.0, 64, -1.0, 1.0, 20};
  CHECK_FALSE(narrow.margin_warnings(SmoothingKernel::gaussian_bump(1.0, 0.5)).empty());
}
