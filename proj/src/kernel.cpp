#include "spdelab/kernel.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "spdelab/error.hpp"

namespace spdelab {

namespace {

[[noreturn]] void fail(const std::string& code, const std::string& detail) {
  throw Error("kernel", code, detail);
}

constexpr std::size_t kMinTableSamples = 8;

}  // namespace

std::string_view to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::Zero: return "zero";
    case KernelFamily::GaussianBump: return "gaussian";
    case KernelFamily::Tabulated: return "tabulated";
  }
  return "zero";
}

KernelFamily parse_kernel_family(std::string_view name) {
  if (name == "zero") return KernelFamily::Zero;
  if (name == "gaussian" || name == "gaussian_bump") return KernelFamily::GaussianBump;
  if (name == "tabulated") return KernelFamily::Tabulated;
  fail("invalid-argument", "unknown kernel family '" + std::string(name) + "'");
}

SmoothingKernel SmoothingKernel::zero() {
  SmoothingKernel k;
  k.norms_ = KernelNorms{};
  return k;
}

SmoothingKernel SmoothingKernel::gaussian_bump(double amplitude, double sigma) {
  if (!std::isfinite(amplitude) || !std::isfinite(sigma) || sigma <= 0.0) {
    fail("invalid-argument", "gaussian bump needs finite amplitude and sigma > 0");
  }
  SmoothingKernel k;
  k.family_ = KernelFamily::GaussianBump;
  k.amplitude_ = amplitude;
  k.sigma_ = sigma;
  const double a2 = amplitude * amplitude;
  const double sqrt_pi = std::sqrt(std::numbers::pi);
  k.norms_ = KernelNorms{std::sqrt(a2 * sigma * sqrt_pi),
                         std::sqrt(a2 * sqrt_pi / (2.0 * sigma)),
                         std::sqrt(3.0 * a2 * sqrt_pi / (4.0 * sigma * sigma * sigma))};
  k.support_radius_ = amplitude == 0.0 ? 0.0 : k.scan_support_radius();
  return k;
}

SmoothingKernel SmoothingKernel::tabulated(double x0, double spacing, std::vector<double> values) {
  if (!std::isfinite(x0) || !std::isfinite(spacing) || spacing <= 0.0) {
    fail("invalid-argument", "table needs a finite origin and positive spacing");
  }
  if (values.size() < 2) fail("invalid-argument", "table needs at least two samples");
  for (double v : values) {
    if (!std::isfinite(v)) fail("invalid-argument", "non-finite table value");
  }
  SmoothingKernel k;
  k.family_ = KernelFamily::Tabulated;
  k.x0_ = x0;
  k.spacing_ = spacing;
  k.values_ = std::move(values);
  k.build_spline();
  k.support_radius_ = k.scan_support_radius();
  if (k.values_.size() >= kMinTableSamples) k.norms_ = l2_norms(k);
  return k;
}

SmoothingKernel SmoothingKernel::load_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("invalid-argument", "cannot open kernel table " + path.string());
  std::vector<double> xs, ys;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    double x = 0.0, y = 0.0;
    if (!(fields >> x)) continue;
    if (!(fields >> y)) fail("invalid-argument", "kernel table row needs two columns: " + line);
    xs.push_back(x);
    ys.push_back(y);
  }
  if (xs.size() < 2) fail("invalid-argument", "kernel table has fewer than two rows");
  const double spacing = xs[1] - xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (std::abs((xs[i] - xs[i - 1]) - spacing) > 1e-9 * std::max(1.0, std::abs(spacing))) {
      fail("invalid-argument", "kernel table spacing is not uniform");
    }
  }
  return tabulated(xs.front(), spacing, std::move(ys));
}

// Clamped spline with zero end slopes: solve the tridiagonal system for the
// knot second derivatives.
void SmoothingKernel::build_spline() {
  const std::size_t n = values_.size();
  const double h = spacing_;
  std::vector<double> diag(n, 4.0), rhs(n, 0.0);
  diag[0] = 2.0;
  diag[n - 1] = 2.0;
  rhs[0] = 6.0 / h * ((values_[1] - values_[0]) / h);
  rhs[n - 1] = 6.0 / h * (0.0 - (values_[n - 1] - values_[n - 2]) / h);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    rhs[i] = 6.0 / (h * h) * (values_[i + 1] - 2.0 * values_[i] + values_[i - 1]);
  }
  // Thomas algorithm, unit off-diagonals.
  for (std::size_t i = 1; i < n; ++i) {
    const double w = 1.0 / diag[i - 1];
    diag[i] -= w;
    rhs[i] -= w * rhs[i - 1];
  }
  second_.assign(n, 0.0);
  second_[n - 1] = rhs[n - 1] / diag[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) second_[i] = (rhs[i] - second_[i + 1]) / diag[i];
}

std::array<double, 3> SmoothingKernel::eval_all(double x) const noexcept {
  switch (family_) {
    case KernelFamily::Zero:
      return {0.0, 0.0, 0.0};
    case KernelFamily::GaussianBump: {
      const double s2 = sigma_ * sigma_;
      const double e = amplitude_ * std::exp(-0.5 * x * x / s2);
      return {e, -x / s2 * e, (x * x / (s2 * s2) - 1.0 / s2) * e};
    }
    case KernelFamily::Tabulated: {
      const double h = spacing_;
      const double rel = (x - x0_) / h;
      const auto last = static_cast<double>(values_.size() - 1);
      if (!(rel >= 0.0) || rel > last) return {0.0, 0.0, 0.0};
      auto k = static_cast<std::size_t>(rel);
      if (k + 1 >= values_.size()) k = values_.size() - 2;
      const double b = x - (x0_ + static_cast<double>(k) * h);
      const double a = h - b;
      const double m0 = second_[k], m1 = second_[k + 1];
      const double y0 = values_[k], y1 = values_[k + 1];
      const double v = m0 * a * a * a / (6.0 * h) + m1 * b * b * b / (6.0 * h) +
                       (y0 / h - m0 * h / 6.0) * a + (y1 / h - m1 * h / 6.0) * b;
      const double d = -m0 * a * a / (2.0 * h) + m1 * b * b / (2.0 * h) - (y0 / h - m0 * h / 6.0) +
                       (y1 / h - m1 * h / 6.0);
      const double dd = (m0 * a + m1 * b) / h;
      return {v, d, dd};
    }
  }
  return {0.0, 0.0, 0.0};
}

double SmoothingKernel::eval(int order, double x) const {
  if (order < 0 || order > 2) fail("invalid-argument", "derivative order must be 0, 1 or 2");
  if (!std::isfinite(x)) fail("invalid-argument", "non-finite evaluation point");
  return eval_all(x)[static_cast<std::size_t>(order)];
}

double SmoothingKernel::scan_support_radius() const {
  auto above = [&](double x) {
    for (double s : {x, -x}) {
      const auto v = eval_all(s);
      if (std::abs(v[0]) >= kTailTolerance || std::abs(v[1]) >= kTailTolerance ||
          std::abs(v[2]) >= kTailTolerance) {
        return true;
      }
    }
    return false;
  };
  if (family_ == KernelFamily::Tabulated) {
    const double reach = std::max(std::abs(x0_), std::abs(x0_ + spacing_ * static_cast<double>(values_.size() - 1)));
    const double step = spacing_ / 16.0;
    for (double x = reach; x > 0.0; x -= step) {
      if (above(x)) return std::min(reach, x + step);
    }
    return 0.0;
  }
  // Gaussian bump: the derivatives decay monotonically past a few sigma.
  double lo = 0.0, hi = sigma_;
  while (above(hi)) {
    lo = hi;
    hi *= 2.0;
  }
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    (above(mid) ? lo : hi) = mid;
  }
  return hi;
}

KernelNorms l2_norms(const SmoothingKernel& kernel) {
  if (kernel.family_ != KernelFamily::Tabulated) return *kernel.norms_;
  if (kernel.values_.size() < kMinTableSamples) {
    fail("under-resolved-kernel", "tabulated kernel needs at least 8 samples");
  }
  if (kernel.norms_) return *kernel.norms_;
  // Four-point Gauss-Legendre is exact for the degree-6 spline products.
  static constexpr std::array<double, 4> nodes{-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                                               0.8611363115940526};
  static constexpr std::array<double, 4> weights{0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                                                 0.3478548451374538};
  const double h = kernel.spacing_;
  std::array<double, 3> acc{0.0, 0.0, 0.0};
  for (std::size_t k = 0; k + 1 < kernel.values_.size(); ++k) {
    const double mid = kernel.x0_ + (static_cast<double>(k) + 0.5) * h;
    for (std::size_t q = 0; q < nodes.size(); ++q) {
      const auto v = kernel.eval_all(mid + 0.5 * h * nodes[q]);
      for (std::size_t o = 0; o < 3; ++o) acc[o] += 0.5 * h * weights[q] * v[o] * v[o];
    }
  }
  return KernelNorms{std::sqrt(acc[0]), std::sqrt(acc[1]), std::sqrt(acc[2])};
}

}  // namespace spdelab

namespace spdelab {

double lattice_norm_sq(const SmoothingKernel& kernel, double dy, int order) {
  if (!(dy > 0.0)) throw Error("kernel", "invalid-argument", "lattice spacing must be positive");
  if (kernel.is_zero()) return 0.0;
  const int reach = static_cast<int>(std::ceil(kernel.support_radius() / dy));
  double s = 0.0;
  for (int k = -reach; k <= reach; ++k) s += std::pow(kernel.eval(order, k * dy), 2);
  return s * dy;
}

}  // namespace spdelab
