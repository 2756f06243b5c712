#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "spdelab/error.hpp"
#include "spdelab/kernel.hpp"

using namespace spdelab;

namespace {

// Composite Simpson on [-L, L], independent of the library quadrature.
template <class F>
double simpson(F f, double lo, double hi, int n) {
  const double h = (hi - lo) / n;
  double s = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) s += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace

TEST_CASE("gaussian bump derivatives match finite differences") {
  const auto k = SmoothingKernel::gaussian_bump(0.7, 0.4);
  for (double x : {-0.9, -0.1, 0.0, 0.35, 1.2}) {
    const double e = 1e-5;
    CHECK(k.eval(1, x) == doctest::Approx((k.eval(0, x + e) - k.eval(0, x - e)) / (2 * e)).epsilon(1e-7));
    CHECK(k.eval(2, x) == doctest::Approx((k.eval(1, x + e) - k.eval(1, x - e)) / (2 * e)).epsilon(1e-7));
    const auto all = k.eval_all(x);
    CHECK(all[0] == k.eval(0, x));
    CHECK(all[1] == k.eval(1, x));
    CHECK(all[2] == k.eval(2, x));
  }
}

TEST_CASE("gaussian bump norms match quadrature") {
  const auto k = SmoothingKernel::gaussian_bump(0.5, 0.5);
  const auto n = l2_norms(k);
  auto sq = [&](int order) { return simpson([&](double x) { return std::pow(k.eval(order, x), 2); }, -8, 8, 4000); };
  CHECK(n.h * n.h == doctest::Approx(sq(0)).epsilon(1e-10));
  CHECK(n.dh * n.dh == doctest::Approx(sq(1)).epsilon(1e-10));
  CHECK(n.d2h * n.d2h == doctest::Approx(sq(2)).epsilon(1e-10));
  CHECK(n.h * n.h == doctest::Approx(0.25 * 0.5 * std::sqrt(std::numbers::pi)).epsilon(1e-14));
}

TEST_CASE("support radius bounds the kernel tail") {
  const auto k = SmoothingKernel::gaussian_bump(1.0, 0.5);
  const double r = k.support_radius();
  CHECK(r > 3.0);
  CHECK(r < 5.0);
  for (int order = 0; order < 3; ++order) CHECK(std::abs(k.eval(order, r * 1.01)) < 1e-12);
  CHECK(SmoothingKernel::zero().support_radius() == 0.0);
}

TEST_CASE("tabulated kernel reproduces a sampled gaussian") {
  const auto g = SmoothingKernel::gaussian_bump(0.5, 0.5);
  std::vector<double> v;
  const double dx = 0.02;
  for (int i = 0; i <= 400; ++i) v.push_back(g.eval(0, -4.0 + i * dx));
  const auto t = SmoothingKernel::tabulated(-4.0, dx, v);
  for (double x : {-1.01, -0.3, 0.0, 0.77}) {
    CHECK(t.eval(0, x) == doctest::Approx(g.eval(0, x)).epsilon(1e-6));
    CHECK(t.eval(1, x) == doctest::Approx(g.eval(1, x)).epsilon(1e-4));
  }
  CHECK(t.eval(0, 10.0) == 0.0);
  const auto a = l2_norms(t), b = l2_norms(g);
  CHECK(a.h == doctest::Approx(b.h).epsilon(1e-6));
  CHECK(a.dh == doctest::Approx(b.dh).epsilon(1e-4));
}

TEST_CASE("tabulated kernel loads from a two-column file") {
  const auto path = std::filesystem::temp_directory_path() / "spdelab_kernel_table.txt";
  {
    std::ofstream out(path);
    out << "# x h\n";
    for (int i = 0; i <= 20; ++i) out << (-1.0 + 0.1 * i) << ' ' << std::exp(-std::pow(-1.0 + 0.1 * i, 2) * 4) << '\n';
  }
  const auto k = SmoothingKernel::load_table(path);
  CHECK(k.family() == KernelFamily::Tabulated);
  CHECK(k.eval(0, 0.0) == doctest::Approx(1.0));
  std::filesystem::remove(path);
}

TEST_CASE("kernel errors") {
  const auto k = SmoothingKernel::gaussian_bump(1.0, 1.0);
  CHECK_THROWS_AS(k.eval(3, 0.0), Error);
  CHECK_THROWS_AS(k.eval(0, std::nan("")), Error);
  const auto coarse = SmoothingKernel::tabulated(0.0, 1.0, {0.0, 1.0, 0.0});
  try {
    (void)l2_norms(coarse);
    FAIL("expected under-resolved-kernel");
  } catch (const Error& e) {
    CHECK(e.code() == "under-resolved-kernel");
  }
  CHECK(parse_kernel_family("gaussian") == KernelFamily::GaussianBump);
  CHECK(to_string(KernelFamily::Zero) == "zero");
}
