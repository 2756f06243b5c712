#include <cmath>
#include <vector>

#include "doctest.h"
#include "spdelab/parallel.hpp"
#include "spdelab/rng.hpp"

using namespace spdelab;

TEST_CASE("philox4x32-10 known-answer vectors") {
  CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) ==
        Philox4x32Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}) ==
        Philox4x32Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}) ==
        Philox4x32Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("stream ids are distinct and stable") {
  static_assert(stream_id("W") != stream_id("V"));
  CHECK(stream_id("B/0") != stream_id("B/1"));
  CHECK(stream_id("") == 0xcbf29ce484222325ull);
  CHECK(derive_seed(7, 0) != derive_seed(7, 1));
  CHECK(derive_seed(7, 3) == derive_seed(7, 3));
}

TEST_CASE("fill agrees with indexed access at any offset") {
  const CounterNormal g(123, stream_id("W"));
  for (std::uint64_t first : {0ull, 1ull, 7ull}) {
    std::vector<double> out(11);
    g.fill(first, out);
    for (std::size_t k = 0; k < out.size(); ++k) CHECK(out[k] == g(first + k));
  }
}

TEST_CASE("normal variates have unit variance and no lag-1 correlation") {
  const CounterNormal g(2026, stream_id("test"));
  RunningStats m, v, c;
  double prev = g(0);
  for (std::uint64_t i = 1; i < 400000; ++i) {
    const double z = g(i);
    m.add(z);
    v.add(z * z);
    c.add(z * prev);
    prev = z;
  }
  CHECK(std::abs(m.mean) < 4.0 * m.std_err());
  CHECK(std::abs(v.mean - 1.0) < 4.0 * v.std_err());
  CHECK(std::abs(c.mean) < 4.0 * c.std_err());
}

TEST_CASE("running stats merge equals sequential accumulation") {
  RunningStats all, a, b;
  for (int i = 0; i < 100; ++i) {
    const double x = std::sin(i * 0.7) * 3.0 + i * 0.01;
    all.add(x);
    (i < 37 ? a : b).add(x);
  }
  a.merge(b);
  CHECK(a.n == all.n);
  CHECK(a.mean == doctest::Approx(all.mean).epsilon(1e-14));
  CHECK(a.variance() == doctest::Approx(all.variance()).epsilon(1e-12));
}

TEST_CASE("parallel_for rethrows the lowest failing index") {
  for (int workers : {1, 3}) {
    try {
      parallel_for(50, workers, [](std::size_t i) {
        if (i == 17 || i == 33) throw std::runtime_error(std::to_string(i));
      });
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()) == "17");
    }
  }
}
