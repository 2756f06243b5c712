#pragma once

// Brute-force adjoint check of the discrete divergence on three Gaussian
// increments: polynomial fields, exact derivatives and a tensor
// Gauss-Hermite rule that integrates every product exactly.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "spdelab/divergence.hpp"
#include "spdelab/matrix.hpp"

namespace spdelab::testing {

// Polynomial in three variables, stored as exponent triple -> coefficient,
// with exact differentiation.
using Exps = std::array<int, 3>;
struct Poly {
  std::map<Exps, double> c;

  double operator()(const std::array<double, 3>& b) const {
    double s = 0.0;
    for (const auto& [e, v] : c) s += v * std::pow(b[0], e[0]) * std::pow(b[1], e[1]) * std::pow(b[2], e[2]);
    return s;
  }
  Poly d(int i) const {
    Poly out;
    for (const auto& [e, v] : c) {
      if (e[static_cast<std::size_t>(i)] == 0) continue;
      Exps f = e;
      f[static_cast<std::size_t>(i)] -= 1;
      out.c[f] += v * e[static_cast<std::size_t>(i)];
    }
    return out;
  }
};

inline Poly random_poly(std::mt19937_64& rng, int degree) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Poly p;
  for (int a = 0; a <= degree; ++a)
    for (int b = 0; a + b <= degree; ++b)
      for (int c = 0; a + b + c <= degree; ++c) p.c[{a, b, c}] = u(rng);
  return p;
}

// 12-point Gauss-Hermite (probabilists' weight), exact to degree 23.
inline std::vector<std::array<double, 2>> hermite_rule() {
  constexpr int n = 12;
  auto he = [](double x, int deg) {
    double p0 = 1.0, p1 = x;
    for (int m = 2; m <= deg; ++m) {
      const double p2 = x * p1 - (m - 1) * p0;
      p0 = p1;
      p1 = p2;
    }
    return deg == 0 ? 1.0 : p1;
  };
  double fact = 1.0;
  for (int m = 2; m <= n; ++m) fact *= m;
  // roots of He_12 by bisection between sign changes; probability weight
  // n! / (n^2 He_{n-1}(x)^2)
  std::vector<std::array<double, 2>> rule;
  const double step = 1e-3;
  for (double a = -7.0; a < 7.0; a += step) {
    double lo = a, hi = a + step;
    if (he(lo, n) * he(hi, n) > 0.0) continue;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (he(lo, n) * he(mid, n) <= 0.0 ? hi : lo) = mid;
    }
    const double x = 0.5 * (lo + hi);
    const double p = he(x, n - 1);
    rule.push_back({x, fact / (n * n * p * p)});
  }
  return rule;
}


struct IbpGaps {
  double pointwise = 0.0;  // max relative gap to -dt sum_i d_i(u_i phi) / phi
  double in_law = 0.0;     // max |E[delta(u) F] - E[<DF, u>_H]| over monomials F
};

inline IbpGaps ibp_gaps(std::uint64_t seed, int trials, double dt) {
  const auto rule = hermite_rule();
  std::mt19937_64 rng(seed);
  const double sd = std::sqrt(dt);
  IbpGaps gaps;
  auto fill = [](const std::array<Poly, 3>& u, const std::array<double, 3>& b, std::vector<double>& uv, Matrix& du) {
    for (std::size_t i = 0; i < 3; ++i) {
      uv[i] = u[i](b);
      for (std::size_t m = 0; m < 3; ++m) du(m, i) = u[i].d(static_cast<int>(m))(b);
    }
  };
  for (int trial = 0; trial < trials; ++trial) {
    const std::array<Poly, 3> u{random_poly(rng, 3), random_poly(rng, 3), random_poly(rng, 3)};
    std::vector<double> uv(3);
    Matrix du(3, 3);
    for (const auto& b : {std::array<double, 3>{0.3, -0.2, 0.9}, std::array<double, 3>{-1.1, 0.4, 0.05}}) {
      fill(u, b, uv, du);
      double adjoint = 0.0;
      for (std::size_t i = 0; i < 3; ++i) adjoint += -dt * (u[i].d(static_cast<int>(i))(b) - u[i](b) * b[i] / dt);
      const std::vector<double> db(b.begin(), b.end());
      const double got = discrete_divergence(uv, du, db, dt).delta;
      gaps.pointwise = std::max(gaps.pointwise, std::abs(got - adjoint) / std::max(1.0, std::abs(adjoint)));
    }
    for (int a = 0; a <= 3; ++a)
      for (int bb = 0; a + bb <= 3; ++bb)
        for (int c = 0; a + bb + c <= 3; ++c) {
          Poly f;
          f.c[{a, bb, c}] = 1.0;
          double lhs = 0.0, rhs = 0.0;
          for (const auto& [x0, w0] : rule)
            for (const auto& [x1, w1] : rule)
              for (const auto& [x2, w2] : rule) {
                const std::array<double, 3> b{x0 * sd, x1 * sd, x2 * sd};
                fill(u, b, uv, du);
                double pair = 0.0;
                for (std::size_t i = 0; i < 3; ++i) pair += f.d(static_cast<int>(i))(b) * uv[i] * dt;
                const std::vector<double> db(b.begin(), b.end());
                const double w = w0 * w1 * w2;
                lhs += w * discrete_divergence(uv, du, db, dt).delta * f(b);
                rhs += w * pair;
              }
          gaps.in_law = std::max(gaps.in_law, std::abs(lhs - rhs));
        }
  }
  return gaps;
}

}  // namespace spdelab::testing
