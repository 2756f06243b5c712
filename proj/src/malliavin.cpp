#include "spdelab/malliavin.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "spdelab/error.hpp"
#include "spdelab/parallel.hpp"
#include "spdelab/rng.hpp"

namespace spdelab {

void divergence_all_times_into(PathWeights& out, const ParticlePath& path, DerivativeForm form) {
  const int n = path.length();
  const auto un = static_cast<std::size_t>(n);
  out.delta.resize(un);
  out.adapted_sum.resize(un);
  out.trace_term.resize(un);
  out.h_norm_sq.resize(un);
  const double dt = path.dt;
  // Prefix products P_i = prod_{1 <= l < i} f_l of the derivative factors and
  // Q_i of the scheme Jacobians (the l = 0 factors cancel), and running sums
  //   C = sum 1/P_{k+1}^2, C' = sum 1/(P_{k+1} Q_{k+1}), E = sum dB_k/P_{k+1},
  //   F = sum g_i Q_i C'_i, G = sum g_i Q_i C_i C'_i.
  double p_next = 1.0, q_next = 1.0;
  double c = 0.0, cq = 0.0, e = 0.0, f = 0.0, g = 0.0;
  for (int tau = 1; tau <= n; ++tau) {
    const int k = tau - 1;
    if (k >= 1) {
      const double gi = step_log_derivative(path, k, form) * q_next * cq;
      f += gi;
      g += gi * c;
      p_next *= step_factor(path, k, form);
      q_next *= step_jacobian(path, k);
    }
    const double inv = 1.0 / p_next;
    c += inv * inv;
    cq += inv / q_next;
    e += path.db[static_cast<std::size_t>(k)] * inv;
    const double adapted = e / (dt * p_next * c);
    const double trace = (f * c - 2.0 * g) / (p_next * c * c);
    out.adapted_sum[static_cast<std::size_t>(k)] = adapted;
    out.trace_term[static_cast<std::size_t>(k)] = trace;
    out.delta[static_cast<std::size_t>(k)] = adapted - trace;
    out.h_norm_sq[static_cast<std::size_t>(k)] = dt * p_next * p_next * c;
  }
}

PathWeights divergence_all_times(const ParticlePath& path, DerivativeForm form) {
  PathWeights w;
  divergence_all_times_into(w, path, form);
  return w;
}

namespace {

double weight_term(TailForm tail, double x, double y, double end, double delta) {
  if (tail == TailForm::Nearest && y < x) return end <= y ? -delta : 0.0;
  return end > y ? delta : 0.0;
}

}  // namespace

std::vector<DensityEstimate> density_estimate(const SmoothingKernel& kernel, const SheetSource& sheet, int r_index,
                                              double x, int t_index, std::span<const double> ys,
                                              const DensityOptions& options) {
  const GridSpec& grid = sheet.grid();
  if (r_index < 0 || t_index <= r_index || t_index > grid.n_t) {
    throw Error("malliavin", "invalid-argument", "need 0 <= r < t <= n_t");
  }
  if (options.n_paths < 2) throw Error("malliavin", "invalid-argument", "n_paths must be at least 2");
  if (options.antithetic && options.n_paths % 2 != 0) {
    throw Error("malliavin", "invalid-argument", "antithetic estimation needs an even n_paths");
  }
  const std::size_t n_y = ys.size();
  const std::size_t n_samples = options.antithetic ? options.n_paths / 2 : options.n_paths;
  const std::size_t n_blocks = block_count(n_samples);
  const auto len = static_cast<std::size_t>(t_index - r_index);
  std::vector<std::vector<RunningStats>> partial(n_blocks, std::vector<RunningStats>(n_y));

  parallel_for(n_blocks, options.workers, [&](std::size_t b) {
    ParticlePath path;
    PathWeights weights;
    std::vector<double> db(len), contrib(n_y);
    auto& stats = partial[b];
    const std::size_t first = b * kReductionBlock;
    const std::size_t last = std::min(n_samples, first + kReductionBlock);
    for (std::size_t m = first; m < last; ++m) {
      fill_bm_increments(grid, options.seed, stream_id(bm_stream_label(m)), r_index, db);
      const int copies = options.antithetic ? 2 : 1;
      std::fill(contrib.begin(), contrib.end(), 0.0);
      for (int c = 0; c < copies; ++c) {
        if (c == 1) {
          for (double& v : db) v = -v;
        }
        simulate_path_into(path, kernel, sheet, db, r_index, x, t_index);
        divergence_all_times_into(weights, path, options.form);
        const double delta = weights.delta.back();
        const double end = path.end();
        for (std::size_t q = 0; q < n_y; ++q) contrib[q] += weight_term(options.tail, x, ys[q], end, delta);
      }
      for (std::size_t q = 0; q < n_y; ++q) stats[q].add(contrib[q] / copies);
    }
  });

  std::vector<RunningStats> total(n_y);
  for (const auto& block : partial) {
    for (std::size_t q = 0; q < n_y; ++q) total[q].merge(block[q]);
  }
  std::vector<DensityEstimate> out(n_y);
  for (std::size_t q = 0; q < n_y; ++q) {
    out[q].value = total[q].mean;
    out[q].std_err = total[q].std_err();
    out[q].n_paths = options.n_paths;
    out[q].r_index = r_index;
    out[q].x = x;
    out[q].t_index = t_index;
    out[q].y = ys[q];
    out[q].env_seed = sheet.seed();
  }
  return out;
}

DensityEstimate density_estimate(const SmoothingKernel& kernel, const SheetSource& sheet, int r_index, double x,
                                 int t_index, double y, const DensityOptions& options) {
  const double ys[1] = {y};
  return density_estimate(kernel, sheet, r_index, x, t_index, ys, options).front();
}

DualityMoments duality_moments(const SmoothingKernel& kernel, const SheetSource& sheet, int r_index, double x,
                               int t_index, const DensityOptions& options) {
  const GridSpec& grid = sheet.grid();
  if (r_index < 0 || t_index <= r_index || t_index > grid.n_t) {
    throw Error("malliavin", "invalid-argument", "need 0 <= r < t <= n_t");
  }
  if (options.n_paths < 2) throw Error("malliavin", "invalid-argument", "n_paths must be at least 2");
  const std::size_t n_blocks = block_count(options.n_paths);
  const auto len = static_cast<std::size_t>(t_index - r_index);
  std::vector<std::array<RunningStats, 2>> partial(n_blocks);
  parallel_for(n_blocks, options.workers, [&](std::size_t b) {
    ParticlePath path;
    PathWeights weights;
    std::vector<double> db(len);
    const std::size_t first = b * kReductionBlock;
    const std::size_t last = std::min(options.n_paths, first + kReductionBlock);
    for (std::size_t m = first; m < last; ++m) {
      fill_bm_increments(grid, options.seed, stream_id(bm_stream_label(m)), r_index, db);
      simulate_path_into(path, kernel, sheet, db, r_index, x, t_index);
      divergence_all_times_into(weights, path, options.form);
      const double delta = weights.delta.back();
      partial[b][0].add(delta);
      partial[b][1].add(path.end() * delta);
    }
  });
  std::array<RunningStats, 2> total;
  for (const auto& block : partial) {
    total[0].merge(block[0]);
    total[1].merge(block[1]);
  }
  return {total[0].mean, total[0].std_err(), total[1].mean, total[1].std_err(), options.n_paths};
}

DivergenceSample divergence_time_diff(const ParticlePath& path, int s_index, int t_index, DerivativeForm form,
                                      bool split) {
  if (s_index <= path.r_index || s_index > t_index || t_index > path.t_index) {
    throw Error("malliavin", "invalid-argument", "need r < s <= t within the path");
  }
  const MalliavinState at_t = malliavin_state(path, form, t_index);
  DivergenceSample out = at_t.divergence;
  if (s_index == t_index) {
    out.time_difference = 0.0;
    if (split) out.split = std::array<double, 3>{0.0, 0.0, 0.0};
    return out;
  }
  const MalliavinState at_s = malliavin_state(path, form, s_index);
  out.time_difference = at_t.divergence.delta - at_s.divergence.delta;
  if (!split) return out;

  const std::size_t n = at_t.d1.size();
  const std::size_t ns = at_s.d1.size();
  const double dt = path.dt;
  const double nt = at_t.h_norm_sq;
  const double nsq = at_s.h_norm_sq;
  std::vector<double> rt(n, 0.0), rs(n, 0.0), d1s(n, 0.0), ind(n, 0.0);
  for (std::size_t m = 0; m < n; ++m) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) acc += at_t.d2(m, k) * at_t.d1[k];
    rt[m] = acc * dt;
  }
  for (std::size_t m = 0; m < ns; ++m) {
    double acc = 0.0;
    for (std::size_t k = 0; k < ns; ++k) acc += at_s.d2(m, k) * at_s.d1[k];
    rs[m] = acc * dt;
    d1s[m] = at_s.d1[m];
  }
  for (std::size_t k = ns; k < n; ++k) ind[k] = 1.0;
  auto d2s = [&](std::size_t m, std::size_t k) { return m < ns && k < ns ? at_s.d2(m, k) : 0.0; };

  std::vector<double> a1(n), a2(n), a3(n);
  Matrix da1(n, n), da2(n, n), da3(n, n);
  const double diff_inv = 1.0 / nt - 1.0 / nsq;
  for (std::size_t k = 0; k < n; ++k) {
    a1[k] = d1s[k] * diff_inv;
    a2[k] = ind[k] / nt;
    a3[k] = (at_t.d1[k] - d1s[k] - ind[k]) / nt;
  }
  for (std::size_t m = 0; m < n; ++m) {
    const double dinv_t = -2.0 * rt[m] / (nt * nt);
    const double dinv_s = -2.0 * rs[m] / (nsq * nsq);
    for (std::size_t k = 0; k < n; ++k) {
      da1(m, k) = d2s(m, k) * diff_inv + d1s[k] * (dinv_t - dinv_s);
      da2(m, k) = ind[k] * dinv_t;
      da3(m, k) = (at_t.d2(m, k) - d2s(m, k)) / nt + (at_t.d1[k] - d1s[k] - ind[k]) * dinv_t;
    }
  }
  const std::span<const double> db(path.db.data(), n);
  out.split = std::array<double, 3>{discrete_divergence(a1, da1, db, dt).delta,
                                    discrete_divergence(a2, da2, db, dt).delta,
                                    discrete_divergence(a3, da3, db, dt).delta};
  return out;
}

}  // namespace spdelab
