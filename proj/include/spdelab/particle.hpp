#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "spdelab/divergence.hpp"
#include "spdelab/kernel.hpp"
#include "spdelab/matrix.hpp"
#include "spdelab/noise.hpp"

namespace spdelab {

// How the derivative of the Euler scheme is resolved across one step.
//   Exponential: factor exp(-s1 - q dt / 2), the exponential-martingale form.
//   Euler:       factor (1 - s1), the exact derivative of the scheme itself.
enum class DerivativeForm { Exponential, Euler };

// Kernel sums against one sheet slice at the particle position xi:
//   drift     = sum_j h(y_j - xi) dW_j
//   grad      = sum_j h'(y_j - xi) dW_j
//   curv      = sum_j h''(y_j - xi) dW_j
//   grad_sq   = sum_j h'(y_j - xi)^2 dy      (discrete ||h'||^2 at xi)
//   grad_curv = sum_j h'(y_j - xi) h''(y_j - xi) dy
struct StepTerms {
  double drift = 0.0;
  double grad = 0.0;
  double curv = 0.0;
  double grad_sq = 0.0;
  double grad_curv = 0.0;
};

// Euler-Maruyama trajectory xi[r..t] of
//   xi_{i+1} = xi_i + dB_i + sum_j h(y_j - xi_i) dW[i][j]
// together with the per-step kernel sums needed by the Malliavin calculus.
// Vectors are indexed by the local step k = i - r_index.
struct ParticlePath {
  int r_index = 0;
  int t_index = 0;
  double x = 0.0;
  double dt = 0.0;
  std::vector<double> xi;        // length() + 1 positions
  std::vector<double> db;        // Brownian increments used
  std::vector<StepTerms> steps;  // kernel sums at xi[k]
  // m_suffix[k] = sum_{i >= k} (-grad_i): the martingale M_{t_k, t} whose
  // stochastic exponential is the first derivative. m_suffix[length()] = 0.
  std::vector<double> m_suffix;
  std::uint64_t env_seed = 0;
  std::uint64_t env_stream = 0;

  int length() const noexcept { return t_index - r_index; }
  double end() const noexcept { return xi.back(); }
  double at(int time_index) const noexcept { return xi[static_cast<std::size_t>(time_index - r_index)]; }
};

StepTerms step_terms(const SmoothingKernel& kernel, const SheetSource& sheet, int i, double xi,
                     std::vector<double>& scratch);

// dB_full holds the increments of the whole time grid; steps r_index..t_index-1
// are used. Throws domain-exit if the particle leaves
// [x_min + R, x_max - R], R the kernel support radius.
ParticlePath simulate_path(const SmoothingKernel& kernel, const SheetSource& sheet, std::span<const double> dB_full,
                           int r_index, double x, int t_index);

// Same, reusing the storage of `out`; db holds exactly t_index - r_index increments.
void simulate_path_into(ParticlePath& out, const SmoothingKernel& kernel, const SheetSource& sheet,
                        std::span<const double> db, int r_index, double x, int t_index);

// Multiplicative factor f_k of the first derivative across step k and its
// log-derivative g_k = (d f_k / d xi_k) / f_k.
double step_factor(const ParticlePath& path, int k, DerivativeForm form) noexcept;
// d xi_{k+1} / d xi_k = 1 - grad_k, the Jacobian of the scheme itself.
double step_jacobian(const ParticlePath& path, int k) noexcept;
double step_log_derivative(const ParticlePath& path, int k, DerivativeForm form) noexcept;

// D_theta xi_t on the local grid [r, t): entry k is the derivative of xi at
// `time_index` (default: path end) with respect to dB_{r+k}.
std::vector<double> first_derivative(const ParticlePath& path, DerivativeForm form = DerivativeForm::Exponential,
                                     int time_index = -1);

// D_eta D_theta xi_t: entry (m, k) is the exact derivative of D1[k] (in the
// chosen form) with respect to dB_{r+m}, propagated through the scheme's
// Jacobian. Dense, O(n^2); limited to paths of at most 2048 steps.
Matrix second_derivative(const ParticlePath& path, DerivativeForm form = DerivativeForm::Exponential,
                         int time_index = -1);

inline constexpr int kMaxSecondDerivativeSteps = 2048;

struct MalliavinState {
  int r_index = 0;
  int t_index = 0;
  double dt = 0.0;
  std::vector<double> d1;
  Matrix d2;
  double h_norm_sq = 0.0;  // ||D xi_t||_H^2
  std::vector<double> u;   // D xi_t / ||D xi_t||_H^2
  Matrix du;               // du(m, k) = D_m u(k)
  DivergenceSample divergence;
};

// Builds every field, divergence included. Throws degenerate-derivative if
// ||D xi_t||_H vanishes.
MalliavinState malliavin_state(const ParticlePath& path, DerivativeForm form = DerivativeForm::Exponential,
                               int time_index = -1);

}  // namespace spdelab
