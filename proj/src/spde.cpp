#include "spdelab/spde.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spdelab/error.hpp"
#include "spdelab/parallel.hpp"
#include "spdelab/rng.hpp"

namespace spdelab {

namespace {

void finish_mu(InitialDensity& mu, const GridSpec& grid) {
  mu.max_value = 0.0;
  mu.mass = 0.0;
  for (double v : mu.values) {
    if (!std::isfinite(v) || v < 0.0) throw Error("spde", "invalid-argument", "initial density must be finite and >= 0");
    mu.max_value = std::max(mu.max_value, v);
    mu.mass += v * grid.dy();
  }
}

double row_mass(std::span<const double> row, double dy) {
  double s = 0.0;
  for (double v : row) s += v;
  return s * dy;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

std::string_view to_string(InitialFamily family) {
  switch (family) {
    case InitialFamily::GaussianBump: return "gaussian";
    case InitialFamily::Indicator: return "indicator";
    case InitialFamily::Tabulated: return "tabulated";
  }
  return "?";
}

InitialFamily parse_initial_family(std::string_view name) {
  if (name == "gaussian" || name == "gaussian_bump") return InitialFamily::GaussianBump;
  if (name == "indicator") return InitialFamily::Indicator;
  if (name == "tabulated") return InitialFamily::Tabulated;
  throw Error("spde", "invalid-config", "unknown mu.family '" + std::string(name) + "'");
}

std::string_view to_string(Scheme scheme) {
  return scheme == Scheme::Convolution ? "convolution" : "finite_difference";
}

InitialDensity InitialDensity::gaussian_bump(const GridSpec& grid, double amplitude, double center, double width) {
  if (!(width > 0.0) || !(amplitude >= 0.0)) {
    throw Error("spde", "invalid-argument", "gaussian mu needs amplitude >= 0 and width > 0");
  }
  InitialDensity mu;
  mu.family = InitialFamily::GaussianBump;
  mu.params = {amplitude, center, width};
  mu.values.resize(static_cast<std::size_t>(grid.n_x));
  for (int j = 0; j < grid.n_x; ++j) {
    const double d = (grid.y(j) - center) / width;
    mu.values[static_cast<std::size_t>(j)] = amplitude * std::exp(-0.5 * d * d);
  }
  finish_mu(mu, grid);
  return mu;
}

InitialDensity InitialDensity::indicator(const GridSpec& grid, double amplitude, double lo, double hi) {
  if (!(hi > lo) || !(amplitude >= 0.0)) {
    throw Error("spde", "invalid-argument", "indicator mu needs amplitude >= 0 and hi > lo");
  }
  InitialDensity mu;
  mu.family = InitialFamily::Indicator;
  mu.params = {amplitude, lo, hi};
  mu.values.resize(static_cast<std::size_t>(grid.n_x));
  for (int j = 0; j < grid.n_x; ++j) {
    const double y = grid.y(j);
    mu.values[static_cast<std::size_t>(j)] = (y >= lo && y <= hi) ? amplitude : 0.0;
  }
  finish_mu(mu, grid);
  return mu;
}

InitialDensity InitialDensity::tabulated(const GridSpec& grid, std::vector<double> values) {
  if (values.size() != static_cast<std::size_t>(grid.n_x)) {
    throw Error("spde", "shape-error", "tabulated mu needs one value per grid node");
  }
  InitialDensity mu;
  mu.family = InitialFamily::Tabulated;
  mu.params = values;
  mu.values = std::move(values);
  finish_mu(mu, grid);
  return mu;
}

InitialDensity InitialDensity::make(const GridSpec& grid, InitialFamily family, std::span<const double> params) {
  switch (family) {
    case InitialFamily::GaussianBump:
      if (params.size() != 3) throw Error("spde", "invalid-config", "mu.params for gaussian: amplitude center width");
      return gaussian_bump(grid, params[0], params[1], params[2]);
    case InitialFamily::Indicator:
      if (params.size() != 3) throw Error("spde", "invalid-config", "mu.params for indicator: amplitude lo hi");
      return indicator(grid, params[0], params[1], params[2]);
    case InitialFamily::Tabulated:
      return tabulated(grid, std::vector<double>(params.begin(), params.end()));
  }
  throw Error("spde", "invalid-config", "unknown mu family");
}

double discrete_h_norm_sq(const SmoothingKernel& kernel, const GridSpec& grid) {
  return lattice_norm_sq(kernel, grid.dy(), 0);
}

double default_diffusion(const SmoothingKernel& kernel, const GridSpec& grid) {
  return 0.5 * (1.0 + discrete_h_norm_sq(kernel, grid));
}

bool cfl_ok(const GridSpec& grid, double nu) noexcept {
  return nu * grid.dt() / (grid.dy() * grid.dy()) <= 0.25 + 1e-12;
}

FieldState initial_state(const GridSpec& grid, const InitialDensity& mu, Scheme scheme, double nu,
                         std::uint64_t seed_w, std::uint64_t seed_v) {
  if (mu.values.size() != static_cast<std::size_t>(grid.n_x)) {
    throw Error("spde", "shape-error", "initial density does not match the grid");
  }
  FieldState s;
  s.grid = grid;
  s.scheme = scheme;
  s.seed_w = seed_w;
  s.seed_v = seed_v;
  s.nu = nu;
  const auto rows = static_cast<std::size_t>(grid.n_t) + 1;
  const auto cols = static_cast<std::size_t>(grid.n_x);
  s.x = Matrix(rows, cols);
  std::copy(mu.values.begin(), mu.values.end(), s.x.row(0).begin());
  if (scheme == Scheme::Convolution) {
    s.x1 = Matrix(rows, cols);
    s.x2 = Matrix(rows, cols);
    std::copy(mu.values.begin(), mu.values.end(), s.x1.row(0).begin());
  }
  s.mass.push_back(mu.mass);
  s.steps = 0;
  return s;
}

void step_finite_difference(FieldState& state, const SmoothingKernel& kernel, const SheetSource& sheet_w,
                            const SheetSource& sheet_v, int i) {
  const GridSpec& g = state.grid;
  if (!(sheet_w.grid() == g) || !(sheet_v.grid() == g)) throw Error("spde", "shape-error", "sheet grid differs from field grid");
  if (i != state.steps || i >= g.n_t) throw Error("spde", "invalid-argument", "steps must be taken in order");
  if (!cfl_ok(g, state.nu)) {
    throw Error("spde", "cfl-violation",
                "nu*dt/dy^2 = " + std::to_string(state.nu * g.dt() / (g.dy() * g.dy())) + " exceeds 1/4");
  }
  const int n = g.n_x;
  const double dt = g.dt(), dy = g.dy();
  const double lambda = state.nu * dt / (dy * dy);
  const auto cur = state.x.row(static_cast<std::size_t>(i));
  auto next = state.x.row(static_cast<std::size_t>(i) + 1);

  std::vector<double> transport(static_cast<std::size_t>(n), 0.0);
  if (!kernel.is_zero()) {
    const int reach = static_cast<int>(std::ceil(kernel.support_radius() / dy));
    std::vector<double> hk(static_cast<std::size_t>(2 * reach + 1));
    for (int d = -reach; d <= reach; ++d) hk[static_cast<std::size_t>(d + reach)] = kernel.eval(0, d * dy);
    std::vector<double> scratch;
    const auto dw = sheet_w.row(i, 0, n, scratch);
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      const int k0 = std::max(0, j - reach), k1 = std::min(n - 1, j + reach);
      for (int k = k0; k <= k1; ++k) s += hk[static_cast<std::size_t>(k - j + reach)] * dw[static_cast<std::size_t>(k)];
      transport[static_cast<std::size_t>(j)] = cur[static_cast<std::size_t>(j)] * s;
    }
  }
  std::vector<double> scratch_v;
  const auto dv = sheet_v.row(i, 0, n, scratch_v);
  double peak = 0.0;
  for (int j = 0; j < n; ++j) {
    const auto uj = static_cast<std::size_t>(j);
    const double left = j > 0 ? cur[uj - 1] : 0.0;
    const double right = j + 1 < n ? cur[uj + 1] : 0.0;
    const double g_left = j > 0 ? transport[uj - 1] : 0.0;
    const double g_right = j + 1 < n ? transport[uj + 1] : 0.0;
    const double v = cur[uj] + lambda * (right - 2.0 * cur[uj] + left) - (g_right - g_left) / (2.0 * dy) +
                     std::sqrt(std::max(cur[uj], 0.0)) * dv[uj] / dy;
    next[uj] = v;
    peak = std::max(peak, std::abs(v));
  }
  if (!(peak <= 1e6)) throw Error("spde", "blowup", "max |X| exceeded 1e6 at step " + std::to_string(i + 1));
  state.mass.push_back(row_mass(next, dy));
  state.steps = i + 1;
}

FieldState evolve_fd(const GridSpec& grid, const InitialDensity& mu, const SmoothingKernel& kernel,
                     const SheetSource& sheet_w, const SheetSource& sheet_v, double nu) {
  FieldState s = initial_state(grid, mu, Scheme::FiniteDifference, nu, sheet_w.seed(), sheet_v.seed());
  for (int i = 0; i < grid.n_t; ++i) step_finite_difference(s, kernel, sheet_w, sheet_v, i);
  return s;
}

InitialTerm initial_term(const InitialDensity& mu, const SmoothingKernel& kernel, const SheetSource& sheet,
                         int t_index, const DensityOptions& options) {
  const GridSpec& g = sheet.grid();
  if (mu.values.size() != static_cast<std::size_t>(g.n_x)) throw Error("spde", "shape-error", "mu does not match the grid");
  if (t_index <= 0 || t_index > g.n_t) throw Error("spde", "invalid-argument", "initial_term needs 0 < t <= T");
  std::vector<double> ys(static_cast<std::size_t>(g.n_x));
  for (int j = 0; j < g.n_x; ++j) ys[static_cast<std::size_t>(j)] = g.y(j);
  InitialTerm out{std::vector<double>(ys.size(), 0.0), std::vector<double>(ys.size(), 0.0)};
  for (int z = 0; z < g.n_x; ++z) {
    const double w = mu.values[static_cast<std::size_t>(z)] * g.dy();
    if (w == 0.0) continue;
    DensityOptions o = options;
    o.seed = derive_seed(options.seed, static_cast<std::uint64_t>(z));
    const auto est = density_estimate(kernel, sheet, 0, g.y(z), t_index, ys, o);
    for (std::size_t j = 0; j < ys.size(); ++j) {
      out.values[j] += w * est[j].value;
      out.std_err[j] += w * w * est[j].std_err * est[j].std_err;
    }
  }
  for (double& v : out.std_err) v = std::sqrt(v);
  return out;
}

ConvolutionEvolver::ConvolutionEvolver(const SmoothingKernel& kernel, const SheetSource& sheet_w,
                                       const SheetSource& sheet_v, const InitialDensity& mu,
                                       const ConvolutionOptions& options)
    : kernel_(kernel), sheet_w_(sheet_w), sheet_v_(sheet_v), mu_(mu), options_(options) {
  const GridSpec& g = sheet_w.grid();
  if (!(sheet_v.grid() == g)) throw Error("spde", "shape-error", "W and V sheets live on different grids");
  if (options.n_paths < 2 || (options.antithetic && options.n_paths % 2 != 0)) {
    throw Error("spde", "invalid-argument", "n_paths must be >= 2 (and even with antithetic pairs)");
  }
  state_ = initial_state(g, mu, Scheme::Convolution, default_diffusion(kernel, g), sheet_w.seed(), sheet_v.seed());
  acc1_ = Matrix(static_cast<std::size_t>(g.n_t) + 1, static_cast<std::size_t>(g.n_x) + 1);
  acc2_ = Matrix(static_cast<std::size_t>(g.n_t) + 1, static_cast<std::size_t>(g.n_x) + 1);
}

namespace {

// Adds delta times the grid readout of the tail indicator of one path end to
// a difference array d over nodes (size n + 1).
void add_path(std::span<double> d, int n, double u, int source, double delta, TailForm tail,
              DensityReadout readout) {
  int c;
  double frac;
  if (readout == DensityReadout::CellAverage) {
    const double fl = std::floor(u);
    c = static_cast<int>(fl);
    frac = u - fl;
  } else {
    c = static_cast<int>(std::ceil(u - 0.5));
    frac = 0.0;
  }
  auto range = [&](int lo, int hi, double v) {
    lo = std::clamp(lo, 0, n);
    hi = std::clamp(hi, 0, n);
    if (lo >= hi) return;
    d[static_cast<std::size_t>(lo)] += v;
    d[static_cast<std::size_t>(hi)] -= v;
  };
  // upper form 1{xi > y}: ones below c, frac at c
  const int upper_from = tail == TailForm::Nearest ? source : 0;
  range(upper_from, c, delta);
  if (c >= upper_from) range(c, c + 1, frac * delta);
  if (tail == TailForm::Nearest) {
    // lower form -1{xi <= y} on nodes below the source
    range(c + 1, source, -delta);
    if (c < source) range(c, c + 1, -(1.0 - frac) * delta);
  }
}

}  // namespace

void ConvolutionEvolver::step() {
  if (done()) return;
  const GridSpec& g = state_.grid;
  const int i = state_.steps;
  const int n = g.n_x;
  const double dy = g.dy();
  const auto cur = state_.x.row(static_cast<std::size_t>(i));

  std::vector<double> scratch;
  const auto dv = sheet_v_.row(i, 0, n, scratch);
  double peak = 0.0;
  for (double v : cur) peak = std::max(peak, v);
  struct Source {
    int node;
    double w1;
    double w2;
  };
  std::vector<Source> sources;
  for (int j = 0; j < n; ++j) {
    const auto uj = static_cast<std::size_t>(j);
    const double w1 = i == 0 ? mu_.values[uj] * dy : 0.0;
    double w2 = 0.0;
    if (cur[uj] > options_.source_cutoff * peak && cur[uj] > 0.0) w2 = std::sqrt(cur[uj]) * dv[uj];
    if (w1 != 0.0 || w2 != 0.0) sources.push_back({j, w1, w2});
  }
  const std::size_t needed = sources.size() * options_.n_paths;
  if (options_.density_budget != 0 && paths_used_ + needed > options_.density_budget) {
    throw Error("spde", "budget-exceeded",
                "step " + std::to_string(i) + " needs " + std::to_string(needed) + " paths; budget " +
                    std::to_string(options_.density_budget) + ", used " + std::to_string(paths_used_));
  }

  const int len = g.n_t - i;
  const auto cols = static_cast<std::size_t>(n) + 1;
  std::vector<Matrix> partial(sources.size());
  const std::size_t samples = options_.antithetic ? options_.n_paths / 2 : options_.n_paths;
  const std::uint64_t layer_stream = derive_seed(stream_id("B"), static_cast<std::uint64_t>(i));
  parallel_for(sources.size(), options_.workers, [&](std::size_t s) {
    Matrix acc(static_cast<std::size_t>(len), cols);
    ParticlePath path;
    PathWeights weights;
    std::vector<double> db(static_cast<std::size_t>(len));
    const int node = sources[s].node;
    const double x = g.y(node);
    const std::uint64_t node_stream = derive_seed(layer_stream, static_cast<std::uint64_t>(node));
    for (std::size_t m = 0; m < samples; ++m) {
      fill_bm_increments(g, options_.seed_b, derive_seed(node_stream, m), i, db);
      for (int copy = 0; copy < (options_.antithetic ? 2 : 1); ++copy) {
        if (copy == 1) {
          for (double& v : db) v = -v;
        }
        simulate_path_into(path, kernel_, sheet_w_, db, i, x, g.n_t);
        divergence_all_times_into(weights, path, options_.form);
        for (int tau = 1; tau <= len; ++tau) {
          const double u = (path.xi[static_cast<std::size_t>(tau)] - g.x_min) / dy;
          add_path(acc.row(static_cast<std::size_t>(tau - 1)), n, u, node, weights.delta[static_cast<std::size_t>(tau - 1)],
                   options_.tail, options_.readout);
        }
      }
    }
    partial[s] = std::move(acc);
  });
  paths_used_ += needed;

  const double scale = 1.0 / static_cast<double>(options_.n_paths);
  for (std::size_t s = 0; s < sources.size(); ++s) {
    for (int tau = 1; tau <= len; ++tau) {
      const auto row = static_cast<std::size_t>(i + tau);
      const auto src = partial[s].row(static_cast<std::size_t>(tau - 1));
      auto a1 = acc1_.row(row);
      auto a2 = acc2_.row(row);
      const double w1 = sources[s].w1 * scale, w2 = sources[s].w2 * scale;
      for (std::size_t c = 0; c < cols; ++c) {
        a1[c] += w1 * src[c];
        a2[c] += w2 * src[c];
      }
    }
  }

  const auto next = static_cast<std::size_t>(i) + 1;
  double run1 = 0.0, run2 = 0.0;
  for (int j = 0; j < n; ++j) {
    const auto uj = static_cast<std::size_t>(j);
    run1 += acc1_(next, uj);
    run2 += acc2_(next, uj);
    state_.x1(next, uj) = run1;
    state_.x2(next, uj) = run2;
    state_.x(next, uj) = run1 + run2;
  }
  state_.mass.push_back(row_mass(state_.x.row(next), dy));
  state_.steps = i + 1;
}

FieldState evolve_convolution(const SmoothingKernel& kernel, const SheetSource& sheet_w, const SheetSource& sheet_v,
                              const InitialDensity& mu, const ConvolutionOptions& options) {
  ConvolutionEvolver ev(kernel, sheet_w, sheet_v, mu, options);
  while (!ev.done()) ev.step();
  return ev.state();
}

std::vector<double> crosscheck(const FieldState& a, const FieldState& b) {
  if (!(a.grid == b.grid) || a.steps != b.steps) throw Error("spde", "shape-error", "fields differ in grid or length");
  std::vector<double> out;
  for (int i = 0; i <= a.steps; ++i) {
    const auto ra = a.row(i), rb = b.row(i);
    double diff = 0.0, ref = 0.0;
    for (std::size_t j = 0; j < ra.size(); ++j) {
      diff += (ra[j] - rb[j]) * (ra[j] - rb[j]);
      ref += rb[j] * rb[j];
    }
    const double dy = a.grid.dy();
    out.push_back(std::sqrt(diff * dy) / std::max(std::sqrt(ref * dy), 1e-12));
  }
  return out;
}

std::vector<double> heat_solution(const InitialDensity& mu, const GridSpec& grid, double t, double nu) {
  const int n = grid.n_x;
  if (t <= 0.0) return mu.values;
  const double s = std::sqrt(2.0 * nu * t);
  const double dy = grid.dy();
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (int z = 0; z < n; ++z) {
    const double m = mu.values[static_cast<std::size_t>(z)];
    if (m == 0.0) continue;
    for (int j = 0; j < n; ++j) {
      const double d = grid.y(j) - grid.y(z);
      out[static_cast<std::size_t>(j)] += m * (normal_cdf((d + 0.5 * dy) / s) - normal_cdf((d - 0.5 * dy) / s));
    }
  }
  return out;
}

}  // namespace spdelab
