#include "spdelab/particle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spdelab/error.hpp"

namespace spdelab {

namespace {

void check_window(const GridSpec& g, double radius, double xi, int step) {
  if (!(xi >= g.x_min + radius && xi <= g.x_max - radius)) {
    throw Error("particle", "domain-exit",
                "particle at " + std::to_string(xi) + " left the kernel-safe window at step " + std::to_string(step));
  }
}

int resolve_time(const ParticlePath& path, int time_index) {
  const int t = time_index < 0 ? path.t_index : time_index;
  if (t <= path.r_index || t > path.t_index) {
    throw Error("particle", "invalid-argument", "time index outside (r, t]");
  }
  return t;
}

}  // namespace

StepTerms step_terms(const SmoothingKernel& kernel, const SheetSource& sheet, int i, double xi,
                     std::vector<double>& scratch) {
  StepTerms s;
  if (kernel.is_zero()) return s;
  const GridSpec& g = sheet.grid();
  const double dy = g.dy();
  const double radius = kernel.support_radius();
  const int j0 = std::max(0, static_cast<int>(std::floor((xi - radius - g.x_min) / dy - 0.5)));
  const int j1 = std::min(g.n_x, static_cast<int>(std::ceil((xi + radius - g.x_min) / dy - 0.5)) + 1);
  if (j0 >= j1) return s;
  const auto dw = sheet.row(i, j0, j1, scratch);
  if (kernel.family() == KernelFamily::GaussianBump) {
    const double a = kernel.amplitude();
    const double inv_s2 = 1.0 / (kernel.sigma() * kernel.sigma());
    for (int j = j0; j < j1; ++j) {
      const double d = g.y(j) - xi;
      const double h = a * std::exp(-0.5 * d * d * inv_s2);
      const double h1 = -d * inv_s2 * h;
      const double h2 = (d * d * inv_s2 - 1.0) * inv_s2 * h;
      const double w = dw[static_cast<std::size_t>(j - j0)];
      s.drift += h * w;
      s.grad += h1 * w;
      s.curv += h2 * w;
      s.grad_sq += h1 * h1;
      s.grad_curv += h1 * h2;
    }
  } else {
    for (int j = j0; j < j1; ++j) {
      const auto [h, h1, h2] = kernel.eval_all(g.y(j) - xi);
      const double w = dw[static_cast<std::size_t>(j - j0)];
      s.drift += h * w;
      s.grad += h1 * w;
      s.curv += h2 * w;
      s.grad_sq += h1 * h1;
      s.grad_curv += h1 * h2;
    }
  }
  s.grad_sq *= dy;
  s.grad_curv *= dy;
  return s;
}

void simulate_path_into(ParticlePath& out, const SmoothingKernel& kernel, const SheetSource& sheet,
                        std::span<const double> db, int r_index, double x, int t_index) {
  const GridSpec& g = sheet.grid();
  if (r_index < 0 || t_index > g.n_t || t_index <= r_index) {
    throw Error("particle", "invalid-argument", "need 0 <= r < t <= n_t");
  }
  const int n = t_index - r_index;
  if (db.size() != static_cast<std::size_t>(n)) {
    throw Error("particle", "shape-error", "expected " + std::to_string(n) + " Brownian increments");
  }
  if (!std::isfinite(x)) throw Error("particle", "invalid-argument", "non-finite start point");
  out.r_index = r_index;
  out.t_index = t_index;
  out.x = x;
  out.dt = g.dt();
  out.env_seed = sheet.seed();
  out.env_stream = sheet.stream();
  out.xi.resize(static_cast<std::size_t>(n) + 1);
  out.db.assign(db.begin(), db.end());
  out.steps.resize(static_cast<std::size_t>(n));
  out.m_suffix.resize(static_cast<std::size_t>(n) + 1);

  const double radius = kernel.is_zero() ? 0.0 : kernel.support_radius();
  thread_local std::vector<double> scratch;
  double xi = x;
  out.xi[0] = xi;
  for (int k = 0; k < n; ++k) {
    check_window(g, radius, xi, r_index + k);
    const StepTerms s = step_terms(kernel, sheet, r_index + k, xi, scratch);
    out.steps[static_cast<std::size_t>(k)] = s;
    xi += db[static_cast<std::size_t>(k)] + s.drift;
    out.xi[static_cast<std::size_t>(k) + 1] = xi;
  }
  check_window(g, radius, xi, t_index);
  out.m_suffix[static_cast<std::size_t>(n)] = 0.0;
  for (int k = n - 1; k >= 0; --k) {
    out.m_suffix[static_cast<std::size_t>(k)] =
        out.m_suffix[static_cast<std::size_t>(k) + 1] - out.steps[static_cast<std::size_t>(k)].grad;
  }
}

ParticlePath simulate_path(const SmoothingKernel& kernel, const SheetSource& sheet, std::span<const double> dB_full,
                           int r_index, double x, int t_index) {
  if (r_index < 0 || t_index <= r_index || dB_full.size() < static_cast<std::size_t>(t_index)) {
    throw Error("particle", "invalid-argument", "Brownian increments do not cover [r, t)");
  }
  ParticlePath path;
  simulate_path_into(path, kernel, sheet, dB_full.subspan(static_cast<std::size_t>(r_index),
                                                          static_cast<std::size_t>(t_index - r_index)),
                     r_index, x, t_index);
  return path;
}

double step_factor(const ParticlePath& path, int k, DerivativeForm form) noexcept {
  const StepTerms& s = path.steps[static_cast<std::size_t>(k)];
  if (form == DerivativeForm::Euler) return 1.0 - s.grad;
  return std::exp(-s.grad - 0.5 * s.grad_sq * path.dt);
}

double step_jacobian(const ParticlePath& path, int k) noexcept {
  return 1.0 - path.steps[static_cast<std::size_t>(k)].grad;
}

double step_log_derivative(const ParticlePath& path, int k, DerivativeForm form) noexcept {
  const StepTerms& s = path.steps[static_cast<std::size_t>(k)];
  if (form == DerivativeForm::Euler) return s.curv / (1.0 - s.grad);
  return s.curv + path.dt * s.grad_curv;
}

std::vector<double> first_derivative(const ParticlePath& path, DerivativeForm form, int time_index) {
  const int n = resolve_time(path, time_index) - path.r_index;
  std::vector<double> d1(static_cast<std::size_t>(n));
  double prod = 1.0;
  for (int k = n - 1; k >= 0; --k) {
    d1[static_cast<std::size_t>(k)] = prod;
    prod *= step_factor(path, k, form);
  }
  return d1;
}

Matrix second_derivative(const ParticlePath& path, DerivativeForm form, int time_index) {
  const int n = resolve_time(path, time_index) - path.r_index;
  if (n > kMaxSecondDerivativeSteps) {
    throw Error("particle", "invalid-argument", "second derivative limited to " +
                                                    std::to_string(kMaxSecondDerivativeSteps) + " steps");
  }
  const auto un = static_cast<std::size_t>(n);
  const std::vector<double> d1 = first_derivative(path, form, time_index);
  std::vector<double> f(un), g(un), tail(un + 1);
  for (int k = 0; k < n; ++k) {
    f[static_cast<std::size_t>(k)] = step_jacobian(path, k);
    g[static_cast<std::size_t>(k)] = step_log_derivative(path, k, form);
  }
  Matrix d2(un, un, 0.0);
  for (std::size_t m = 0; m < un; ++m) {
    // tail[i] = sum_{l >= i} g_l J(m, l), J(m, l) = d xi_l / d dB_m
    tail[un] = 0.0;
    double j = 1.0;
    std::vector<double>& jm = tail;
    for (std::size_t l = m + 1; l < un; ++l) {
      jm[l] = g[l] * j;
      j *= f[l];
    }
    for (std::size_t l = un - 1; l > m; --l) jm[l] += jm[l + 1];
    const double diag_tail = m + 1 <= un ? jm[m + 1] : 0.0;
    for (std::size_t k = 0; k < un; ++k) {
      const double s = k <= m ? diag_tail : jm[k + 1];
      d2(m, k) = d1[k] * s;
    }
  }
  return d2;
}

MalliavinState malliavin_state(const ParticlePath& path, DerivativeForm form, int time_index) {
  const int t = resolve_time(path, time_index);
  MalliavinState st;
  st.r_index = path.r_index;
  st.t_index = t;
  st.dt = path.dt;
  st.d1 = first_derivative(path, form, t);
  st.d2 = second_derivative(path, form, t);
  const std::size_t n = st.d1.size();
  double norm = 0.0;
  for (double v : st.d1) norm += v * v;
  norm *= st.dt;
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error("particle", "degenerate-derivative", "||D xi_t||_H is zero or not finite");
  }
  st.h_norm_sq = norm;
  st.u.resize(n);
  for (std::size_t k = 0; k < n; ++k) st.u[k] = st.d1[k] / norm;
  // D_m N = 2 R_m, R_m = dt * sum_s D2(m, s) D1(s)
  std::vector<double> r(n, 0.0);
  for (std::size_t m = 0; m < n; ++m) {
    double acc = 0.0;
    for (std::size_t s = 0; s < n; ++s) acc += st.d2(m, s) * st.d1[s];
    r[m] = acc * st.dt;
  }
  st.du = Matrix(n, n, 0.0);
  const double inv_n2 = 1.0 / (norm * norm);
  for (std::size_t m = 0; m < n; ++m) {
    for (std::size_t k = 0; k < n; ++k) {
      st.du(m, k) = st.d2(m, k) / norm - 2.0 * st.d1[k] * r[m] * inv_n2;
    }
  }
  st.divergence = discrete_divergence(st.u, st.du,
                                      std::span<const double>(path.db.data(), n), st.dt);
  return st;
}

}  // namespace spdelab
