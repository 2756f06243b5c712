#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "spdelab/divergence.hpp"
#include "spdelab/kernel.hpp"
#include "spdelab/noise.hpp"
#include "spdelab/particle.hpp"

namespace spdelab {

// delta(u_tau) and ||D xi_tau||_H^2 for every local time tau = 1..length()
// of one path, in O(length()) operations. Entry tau-1 describes the field
// u_tau = D xi_tau / ||D xi_tau||_H^2 on the grid [r, r + tau).
struct PathWeights {
  std::vector<double> delta;
  std::vector<double> adapted_sum;
  std::vector<double> trace_term;
  std::vector<double> h_norm_sq;
};

PathWeights divergence_all_times(const ParticlePath& path, DerivativeForm form = DerivativeForm::Exponential);
// Reuses the storage of `out`.
void divergence_all_times_into(PathWeights& out, const ParticlePath& path, DerivativeForm form);

// Which indicator carries the weight. Both are unbiased for p^W because the
// weight has mean zero:
//   Upper:   1{xi_t > y} delta(u_t)
//   Nearest: the upper indicator for y >= x, -1{xi_t <= y} delta(u_t) for
//            y < x; exact zeros far out in both tails.
enum class TailForm { Upper, Nearest };

struct DensityOptions {
  std::size_t n_paths = 10000;  // total B paths; antithetic pairs count twice
  std::uint64_t seed = 0;       // B seed
  bool antithetic = true;
  TailForm tail = TailForm::Upper;
  DerivativeForm form = DerivativeForm::Exponential;
  int workers = 1;
};

struct DensityEstimate {
  double value = 0.0;
  double std_err = 0.0;
  std::size_t n_paths = 0;
  int r_index = 0;
  double x = 0.0;
  int t_index = 0;
  double y = 0.0;
  std::uint64_t env_seed = 0;
};

// Monte Carlo estimate of p^W(r, x; t, y) = E^B[1{xi_t > y} delta(u_t)] with
// the environment held fixed. With antithetic pairs the standard error is
// computed from the pair means. Every y shares the same B paths.
std::vector<DensityEstimate> density_estimate(const SmoothingKernel& kernel, const SheetSource& sheet, int r_index,
                                              double x, int t_index, std::span<const double> ys,
                                              const DensityOptions& options);

DensityEstimate density_estimate(const SmoothingKernel& kernel, const SheetSource& sheet, int r_index, double x,
                                 int t_index, double y, const DensityOptions& options);

struct DualityMoments {
  double mean_delta = 0.0;
  double se_delta = 0.0;
  double mean_xi_delta = 0.0;
  double se_xi_delta = 0.0;
  std::size_t n_paths = 0;
};

// E^B[delta(u_t)] (= 0) and E^B[xi_t delta(u_t)] (= <D xi_t, u_t>_H = 1) with
// the environment held fixed, over options.n_paths independent B paths
// (options.antithetic and options.tail are ignored).
DualityMoments duality_moments(const SmoothingKernel& kernel, const SheetSource& sheet, int r_index, double x,
                               int t_index, const DensityOptions& options);

// delta(u_t - u_s) on the grid [r, t) for r < s <= t, both fields built from
// the same path. With `split`, also the divergences of
//   A1 = D xi_s (1/N_t - 1/N_s)
//   A2 = 1_[s,t) / N_t
//   A3 = (D xi_t - D xi_s - 1_[s,t)) / N_t
// where N = ||D xi||_H^2; they sum to u_t - u_s.
DivergenceSample divergence_time_diff(const ParticlePath& path, int s_index, int t_index,
                                      DerivativeForm form = DerivativeForm::Exponential, bool split = false);

}  // namespace spdelab
