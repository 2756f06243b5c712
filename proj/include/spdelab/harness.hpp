#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spdelab/kernel.hpp"
#include "spdelab/malliavin.hpp"
#include "spdelab/noise.hpp"
#include "spdelab/particle.hpp"
#include "spdelab/spde.hpp"

namespace spdelab {

// Flat sectioned key = value configuration. Every field has a default, so an
// empty file is a valid config. Lists are comma separated.
struct ExperimentConfig {
  // [kernel]
  KernelFamily kernel_family = KernelFamily::GaussianBump;
  double kernel_amplitude = 0.5;
  double kernel_sigma = 0.5;
  std::string kernel_table;  // two-column file for family = tabulated

  // [grid]
  GridSpec grid{1.0, 256, -12.0, 12.0, 240};

  // [mu]
  InitialFamily mu_family = InitialFamily::Indicator;
  std::vector<double> mu_params{1.0, -1.0, 1.0};
  std::string mu_table;  // one value per line for family = tabulated

  // [mc]
  std::size_t n_paths = 10000;       // B paths per density query
  std::size_t n_env_replicas = 1;    // environments for density, (W,V) replicas for holder-*
  bool antithetic = true;
  std::size_t samples = 10000;       // (B,W) samples per lemma point
  std::size_t env_paths = 2000;      // B paths per environment in the density envelope check

  // [scheme]
  DerivativeForm form = DerivativeForm::Exponential;
  double nu = 0.0;  // 0: (1 + ||h||^2) / 2
  TailForm tail = TailForm::Upper;
  DensityReadout readout = DensityReadout::CellAverage;
  double source_cutoff = 1e-3;
  std::size_t density_budget = 0;
  bool branching_noise = true;  // false zeroes V

  // [experiment]
  double r = 0.0;
  double x = 0.0;
  double t = 1.0;
  std::vector<double> y;  // empty: 21 points on [x - 3, x + 3]
  std::optional<double> base_time;  // auto: t_max / 2
  std::optional<double> center;     // auto: centre node of the grid
  std::vector<int> time_lags{4, 8, 16, 32};
  std::vector<int> space_lags{1, 2, 4, 8};
  std::vector<int> orders{2, 4};
  std::vector<double> spans{1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0 / 2};
  double s_time = 0.5;
  std::vector<double> diff_lags{1.0 / 64, 1.0 / 32, 1.0 / 16, 1.0 / 8};
  std::vector<double> ladder{0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0};
  double margin = 0.05;
  double tolerance = 0.0;  // crosscheck: > 0 turns a final discrepancy above it into exit 2
  int output_stride = 1;   // evolve-*: write every k-th time row (and the last)

  // [rng]
  std::uint64_t seed = 1;

  // [run]
  int workers = 1;
  std::string out_dir = "out";

  bool operator==(const ExperimentConfig&) const = default;
};

// Throws harness/parse-error ("line N: ...") on malformed text and
// harness/invalid-config naming the violated invariant.
ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
std::string serialize(const ExperimentConfig& config);

// Cross-module checks: grid shape, CFL of the FD scheme, memory caps, list
// lengths. Throws invalid-config.
void validate(const ExperimentConfig& config);
// validate(config) plus the invariants of one subcommand (times on the grid,
// lag ranges).
void validate(const ExperimentConfig& config, std::string_view subcommand);
// Non-fatal notes (narrow spatial margins and the like).
std::vector<std::string> config_warnings(const ExperimentConfig& config);

SmoothingKernel make_kernel(const ExperimentConfig& config);
InitialDensity make_mu(const ExperimentConfig& config);
double diffusion(const ExperimentConfig& config);

const std::vector<std::string>& subcommands();
std::string_view version();

// FNV-1a 64 of the serialized config, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

struct RunResult {
  int exit_code = 0;  // 0 ok, 2 a verdict VIOLATES, 1 error
  std::vector<std::string> files;
  std::string error;  // qualified error on exit code 1
};

// Runs one subcommand and writes CSV files, gnuplot scripts and
// manifest.json under config.out_dir. The manifest is written even when the
// run fails. Never throws.
RunResult run(std::string_view subcommand, const ExperimentConfig& config);

}  // namespace spdelab
