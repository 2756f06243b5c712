#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spdelab/kernel.hpp"
#include "spdelab/matrix.hpp"
#include "spdelab/noise.hpp"
#include "spdelab/particle.hpp"
#include "spdelab/spde.hpp"

namespace spdelab {

enum class Verdict { SatisfiesBound, Inconclusive, Violates };

std::string_view to_string(Verdict v);

// SATISFIES_BOUND iff slope - ci >= reference - margin,
// VIOLATES iff slope + ci < reference - margin.
Verdict classify(double slope, double ci, double reference, double margin = 0.05);

struct MomentEstimate {
  double moment = 0.0;
  double std_err = 0.0;
  std::size_t n = 0;
};

// Mean of |x|^order with a jackknife standard error. order is 2 or 4.
// Throws no-data on empty input.
MomentEstimate moment_estimate(std::span<const double> samples, int order);

struct PowerLawFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double ci = 0.0;  // t_{0.975, n-2} * slope_se
  double residual_ss = 0.0;
};

// Least squares of log(moment) on log(lag). Throws insufficient-lags below
// three lags and invalid-argument on non-positive data.
PowerLawFit fit_power_law(std::span<const double> lags, std::span<const double> moments);

double student_t_975(int dof);

struct MomentReport {
  std::string label;
  int order = 2;
  std::string lag_kind;  // "time" or "space"
  std::vector<double> lags;
  std::vector<MomentEstimate> moments;
};

struct SlopeReport {
  std::string label;
  int order = 2;
  std::vector<double> lags;
  std::vector<MomentEstimate> moments;
  double slope = 0.0;
  double ci = 0.0;
  double reference = 0.0;
  double target = 0.0;
  Verdict verdict = Verdict::Inconclusive;
  std::size_t replicas = 0;
};

// samples(k, l) is replica k at lag l. The slope is fitted to the moment
// means; its 95% half-width is 1.96 jackknife standard errors over groups of
// replicas (at most 100 groups).
SlopeReport replicated_slope(std::string label, std::span<const double> lags, const Matrix& samples, int order,
                             double reference, double target, double margin = 0.05);

struct HolderSetup {
  GridSpec grid{1.75, 256, -4.0, 4.0, 64};
  SmoothingKernel kernel = SmoothingKernel::gaussian_bump(0.3, 0.5);
  InitialDensity mu;
  double nu = 0.0;  // 0: default_diffusion
  std::size_t replicas = 200;
  std::uint64_t seed = 1;
  int workers = 1;
  int base_index = -1;   // -1: n_t / 2
  int center_node = -1;  // -1: n_x / 2
  std::vector<int> time_lags{4, 8, 16, 32};  // in steps
  std::vector<int> space_lags{1, 2, 4, 8};   // in cells
  std::vector<int> orders{2, 4};
  double margin = 0.05;
};

// Increments X_{t0 + l}(y0) - X_{t0}(y0) (time) and X_{t0}(y0 + l) - X_{t0}(y0)
// (space) of independent FD replicas; rows are replicas.
struct HolderSamples {
  std::vector<double> time_lags;
  std::vector<double> space_lags;
  Matrix time;
  Matrix space;
};

HolderSamples holder_samples(const HolderSetup& setup);

// Reference exponent p/2 - 1/4, target p/2 (2p = order).
std::vector<SlopeReport> holder_time(const HolderSetup& setup);
std::vector<SlopeReport> holder_time(const HolderSetup& setup, const HolderSamples& samples);
// Reference exponent p - 1/2, target p.
std::vector<SlopeReport> holder_space(const HolderSetup& setup);
std::vector<SlopeReport> holder_space(const HolderSetup& setup, const HolderSamples& samples);

std::vector<MomentReport> holder_moments(const HolderSetup& setup, const HolderSamples& samples);

struct LemmaSetup {
  GridSpec grid{1.0, 256, -12.0, 12.0, 240};
  SmoothingKernel kernel = SmoothingKernel::gaussian_bump(0.5, 0.5);
  DerivativeForm form = DerivativeForm::Exponential;
  std::size_t samples = 10000;  // (B, W) pairs per point
  std::uint64_t seed = 1;
  int workers = 1;
  double x = 0.0;
  std::vector<double> spans{1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0 / 2};        // t - r, r = 0
  double s_time = 0.5;                                                    // s for the time differences
  std::vector<double> diff_lags{1.0 / 64, 1.0 / 32, 1.0 / 16, 1.0 / 8};  // t - s
  // density envelope: environments, B paths per environment, ladder of |x - y|
  std::size_t env_count = 100;
  std::size_t env_paths = 2000;
  std::vector<double> ladder{0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0};
};

struct LemmaCheck {
  std::string name;
  std::string quantity;
  std::string kind;  // "bound", "identity", "slope", "envelope"
  std::vector<double> lags;
  std::vector<double> measured;
  std::vector<double> std_err;
  std::vector<double> rhs;  // explicit right-hand side where the bound has one
  double slope = 0.0;
  double ci = 0.0;
  double reference_slope = 0.0;
  double tolerance = 0.0;
  double empirical_constant = 0.0;  // smallest C with measured <= C * lag^reference
  Verdict verdict = Verdict::Inconclusive;
  std::string note;
};

std::vector<LemmaCheck> check_lemma_suite(const LemmaSetup& setup);

}  // namespace spdelab
