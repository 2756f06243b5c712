#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

namespace spdelab {

enum class KernelFamily { Zero, GaussianBump, Tabulated };

std::string_view to_string(KernelFamily family);
KernelFamily parse_kernel_family(std::string_view name);

// L2(R) norms of h, h' and h''.
struct KernelNorms {
  double h = 0.0;
  double dh = 0.0;
  double d2h = 0.0;

  // ||h||_{1,2}^2 = ||h||^2 + ||h'||^2
  double sobolev_1_2_sq() const noexcept { return h * h + dh * dh; }
};

// The environment kernel h of the particle motion, evaluable together with
// its first two derivatives. Immutable once built.
//
//   GaussianBump: h(x) = a * exp(-x^2 / (2 sigma^2))
//   Tabulated:    clamped cubic spline (zero end slopes) through uniformly
//                 spaced samples, identically zero outside the table.
class SmoothingKernel {
 public:
  static constexpr double kTailTolerance = 1e-12;

  static SmoothingKernel zero();
  static SmoothingKernel gaussian_bump(double amplitude, double sigma);
  static SmoothingKernel tabulated(double x0, double spacing, std::vector<double> values);
  // Two whitespace-separated columns (x, h(x)); '#' starts a comment.
  static SmoothingKernel load_table(const std::filesystem::path& path);

  KernelFamily family() const noexcept { return family_; }
  bool is_zero() const noexcept { return family_ == KernelFamily::Zero; }
  double amplitude() const noexcept { return amplitude_; }
  double sigma() const noexcept { return sigma_; }

  // Distance beyond which |h|, |h'|, |h''| all stay below kTailTolerance.
  double support_radius() const noexcept { return support_radius_; }

  // h^{(order)}(x); throws invalid-argument on a bad order or non-finite x.
  double eval(int order, double x) const;

  // {h, h', h''} at x without argument checks (hot path).
  std::array<double, 3> eval_all(double x) const noexcept;

  const std::vector<double>& table() const noexcept { return values_; }
  double table_origin() const noexcept { return x0_; }
  double table_spacing() const noexcept { return spacing_; }

 private:
  friend KernelNorms l2_norms(const SmoothingKernel& kernel);

  SmoothingKernel() = default;
  void build_spline();
  double scan_support_radius() const;

  KernelFamily family_ = KernelFamily::Zero;
  double amplitude_ = 0.0;
  double sigma_ = 1.0;
  double support_radius_ = 0.0;
  double x0_ = 0.0;
  double spacing_ = 0.0;
  std::vector<double> values_;
  std::vector<double> second_;  // spline second derivatives at the knots
  std::optional<KernelNorms> norms_;
};

// Closed forms for Zero and GaussianBump; exact piecewise Gauss-Legendre
// quadrature of the spline for Tabulated (under-resolved-kernel below 8 samples).
KernelNorms l2_norms(const SmoothingKernel& kernel);

// sum_k h^{(order)}(k dy)^2 dy over the integer lattice: the discrete squared
// norm seen by a particle sitting on a node of spacing dy.
double lattice_norm_sq(const SmoothingKernel& kernel, double dy, int order);

inline double eval(const SmoothingKernel& kernel, int order, double x) { return kernel.eval(order, x); }

}  // namespace spdelab
