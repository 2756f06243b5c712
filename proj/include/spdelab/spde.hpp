#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "spdelab/kernel.hpp"
#include "spdelab/malliavin.hpp"
#include "spdelab/matrix.hpp"
#include "spdelab/noise.hpp"

namespace spdelab {

enum class InitialFamily { GaussianBump, Indicator, Tabulated };

std::string_view to_string(InitialFamily family);
InitialFamily parse_initial_family(std::string_view name);

// Initial density mu sampled at the grid nodes.
//   GaussianBump: amplitude * exp(-(z - center)^2 / (2 width^2))
//   Indicator:    amplitude on [lo, hi]
//   Tabulated:    node values given directly
struct InitialDensity {
  InitialFamily family = InitialFamily::Tabulated;
  std::vector<double> params;
  std::vector<double> values;
  double max_value = 0.0;
  double mass = 0.0;  // sum_j mu(z_j) dy

  static InitialDensity gaussian_bump(const GridSpec& grid, double amplitude, double center, double width);
  static InitialDensity indicator(const GridSpec& grid, double amplitude, double lo, double hi);
  static InitialDensity tabulated(const GridSpec& grid, std::vector<double> values);
  // Dispatch on family with the parameter list used in config files.
  static InitialDensity make(const GridSpec& grid, InitialFamily family, std::span<const double> params);
};

enum class Scheme { Convolution, FiniteDifference };

std::string_view to_string(Scheme scheme);

// X[i][j] = X_{t_i}(y_j) for i = 0..n_t. In convolution mode the two terms of
// the representation are kept in x1 (initial term) and x2 (branching term).
struct FieldState {
  GridSpec grid;
  Scheme scheme = Scheme::FiniteDifference;
  std::uint64_t seed_w = 0;
  std::uint64_t seed_v = 0;
  double nu = 0.5;
  Matrix x;
  Matrix x1;
  Matrix x2;
  std::vector<double> mass;  // sum_j X[i][j] dy for each completed row
  int steps = 0;             // rows 0..steps are final

  std::span<const double> row(int i) const { return x.row(static_cast<std::size_t>(i)); }
};

// sum_k h(k dy)^2 dy over the integer lattice: ||h||^2 seen by a particle at a node.
double discrete_h_norm_sq(const SmoothingKernel& kernel, const GridSpec& grid);
// (1 + ||h||^2_discrete) / 2
double default_diffusion(const SmoothingKernel& kernel, const GridSpec& grid);
// nu * dt / dy^2 <= 1/4
bool cfl_ok(const GridSpec& grid, double nu) noexcept;

FieldState initial_state(const GridSpec& grid, const InitialDensity& mu, Scheme scheme, double nu,
                         std::uint64_t seed_w, std::uint64_t seed_v);

// Explicit step i -> i+1:
//   X' = X + nu dt Lap X - D_y[X I] + sqrt(max(X, 0)) dV / dy,
//   I_j = sum_k h(y_k - y_j) dW[i][k],
// centred differences and zero ghost values outside the grid. Throws
// cfl-violation and blowup (max |X| > 1e6).
void step_finite_difference(FieldState& state, const SmoothingKernel& kernel, const SheetSource& sheet_w,
                            const SheetSource& sheet_v, int i);

FieldState evolve_fd(const GridSpec& grid, const InitialDensity& mu, const SmoothingKernel& kernel,
                     const SheetSource& sheet_w, const SheetSource& sheet_v, double nu);

// X_{t,1}(y_j) = sum_z mu(z) p(0, z; t, y_j) dz with one B ensemble per
// source node shared by all y_j. std_err pools the independent sources.
struct InitialTerm {
  std::vector<double> values;
  std::vector<double> std_err;
};

InitialTerm initial_term(const InitialDensity& mu, const SmoothingKernel& kernel, const SheetSource& sheet,
                         int t_index, const DensityOptions& options);

// How each density estimate is read on the grid: at the node y_j, or as the
// average over the cell [y_j - dy/2, y_j + dy/2] (weight clamp((xi - y_j)/dy + 1/2, 0, 1)
// in place of the indicator).
enum class DensityReadout { Node, CellAverage };

struct ConvolutionOptions {
  std::size_t n_paths = 10000;     // B paths per density query (one query per source node)
  std::uint64_t seed_b = 0;
  bool antithetic = true;
  TailForm tail = TailForm::Nearest;
  DensityReadout readout = DensityReadout::CellAverage;
  DerivativeForm form = DerivativeForm::Exponential;
  std::size_t density_budget = 0;  // total B paths over the run; 0 = unlimited
  // Branching sources with X below cutoff * max X at their time are dropped.
  double source_cutoff = 1e-3;
  int workers = 1;
};

// Convolution representation
//   X_t(y) = sum_z mu(z) p(0, z; t, y) dy + sum_{r < t} sum_z p(r, z; t, y) sqrt(max(X_r(z), 0)) dV[r][z]
// with every p estimated by Malliavin weights. Sources are processed in time
// order; one B ensemble per source serves every later output time and node.
class ConvolutionEvolver {
 public:
  ConvolutionEvolver(const SmoothingKernel& kernel, const SheetSource& sheet_w, const SheetSource& sheet_v,
                     const InitialDensity& mu, const ConvolutionOptions& options);

  // Processes the sources at the current time and completes the next row.
  // Throws budget-exceeded before doing any work that would pass the budget.
  void step();
  bool done() const noexcept { return state_.steps >= state_.grid.n_t; }
  const FieldState& state() const noexcept { return state_; }
  std::size_t paths_used() const noexcept { return paths_used_; }

 private:
  const SmoothingKernel& kernel_;
  const SheetSource& sheet_w_;
  const SheetSource& sheet_v_;
  InitialDensity mu_;
  ConvolutionOptions options_;
  FieldState state_;
  Matrix acc1_;  // difference arrays over nodes, one row per output time
  Matrix acc2_;
  std::size_t paths_used_ = 0;
};

// step_convolution for a fresh evolver; runs to the final time.
FieldState evolve_convolution(const SmoothingKernel& kernel, const SheetSource& sheet_w, const SheetSource& sheet_v,
                              const InitialDensity& mu, const ConvolutionOptions& options);

// Relative grid-L2 discrepancy per time row:
//   ||a_t - b_t|| / max(||b_t||, 1e-12). Throws shape-error on grid mismatch.
std::vector<double> crosscheck(const FieldState& a, const FieldState& b);

// Heat semigroup exp(t * nu * d^2) applied to mu read as constant on each cell.
std::vector<double> heat_solution(const InitialDensity& mu, const GridSpec& grid, double t, double nu);

}  // namespace spdelab
