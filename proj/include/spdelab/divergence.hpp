#pragma once

#include <array>
#include <optional>
#include <span>

#include "spdelab/matrix.hpp"

namespace spdelab {

// delta(u) = adapted_sum - trace_term, where
//   adapted_sum = sum_i u_i dB_i
//   trace_term  = dt * sum_i Du[i][i]
struct DivergenceSample {
  double delta = 0.0;
  double adapted_sum = 0.0;
  double trace_term = 0.0;
  std::optional<double> time_difference;          // delta(u_t - u_s)
  std::optional<std::array<double, 3>> split;     // delta(A1), delta(A2), delta(A3)
};

// Skorokhod divergence of a field u on the Brownian increment grid. Du(m, k)
// is the derivative of u_k with respect to the m-th increment. This is the
// exact adjoint of the discrete gradient for the Gaussian vector dB.
// Throws shape-error on mismatched sizes.
DivergenceSample discrete_divergence(std::span<const double> u, const Matrix& du, std::span<const double> db,
                                     double dt);

}  // namespace spdelab
