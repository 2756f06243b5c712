#include "spdelab/divergence.hpp"

#include "spdelab/error.hpp"

namespace spdelab {

DivergenceSample discrete_divergence(std::span<const double> u, const Matrix& du, std::span<const double> db,
                                     double dt) {
  if (u.size() != db.size() || du.rows() != u.size() || du.cols() != u.size()) {
    throw Error("malliavin", "shape-error", "u, Du and dB must live on the same grid");
  }
  DivergenceSample out;
  double trace = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    out.adapted_sum += u[i] * db[i];
    trace += du(i, i);
  }
  out.trace_term = dt * trace;
  out.delta = out.adapted_sum - out.trace_term;
  return out;
}

}  // namespace spdelab
