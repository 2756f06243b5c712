#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spdelab/kernel.hpp"

namespace spdelab {

// Space-time grid on [0, T] x [x_min, x_max]. Spatial nodes sit at cell
// centres y_j = x_min + (j + 1/2) dy.
struct GridSpec {
  double t_max = 1.0;
  int n_t = 64;
  double x_min = -8.0;
  double x_max = 8.0;
  int n_x = 160;

  double dt() const noexcept { return t_max / n_t; }
  double dy() const noexcept { return (x_max - x_min) / n_x; }
  double t(int i) const noexcept { return i * dt(); }
  double y(int j) const noexcept { return x_min + (j + 0.5) * dy(); }

  // Index of the node nearest to y (clamped to the grid).
  int nearest_node(double y) const noexcept;
  // Time index for time t; throws invalid-argument if t is not on the grid.
  int time_index(double t) const;

  // Throws invalid-config on non-positive steps or inverted bounds.
  void validate() const;
  // Human-readable warnings when the spatial window is narrower than the
  // recommended safety margin for particle experiments with this kernel.
  std::vector<std::string> margin_warnings(const SmoothingKernel& kernel) const;

  bool operator==(const GridSpec&) const = default;
};

// Read access to a discretised Brownian sheet: cell increments dW[i][j] with
// variance dt * dy.
class SheetSource {
 public:
  virtual ~SheetSource() = default;

  const GridSpec& grid() const noexcept { return grid_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  // Increments of time slice i for columns [j0, j1). May return a view into
  // internal storage or into `scratch`.
  virtual std::span<const double> row(int i, int j0, int j1, std::vector<double>& scratch) const = 0;
  virtual double increment(int i, int j) const = 0;

 protected:
  SheetSource(const GridSpec& grid, std::uint64_t seed, std::uint64_t stream)
      : grid_(grid), seed_(seed), stream_(stream) {}

 private:
  GridSpec grid_;
  std::uint64_t seed_;
  std::uint64_t stream_;
};

// Dense n_t x n_x matrix of increments.
class SheetSample final : public SheetSource {
 public:
  SheetSample(const GridSpec& grid, std::uint64_t seed, std::uint64_t stream, std::vector<double> increments);

  std::span<const double> row(int i, int j0, int j1, std::vector<double>& scratch) const override;
  double increment(int i, int j) const override { return data_[static_cast<std::size_t>(i) * grid().n_x + j]; }
  std::span<const double> slice(int i) const noexcept {
    return {data_.data() + static_cast<std::size_t>(i) * grid().n_x, static_cast<std::size_t>(grid().n_x)};
  }
  bool is_zero() const noexcept { return zero_; }

  // Mean of dW^2 / (dt dy) over all cells, recorded at generation.
  double normalized_second_moment() const noexcept { return second_moment_; }
  // True when normalized_second_moment lies in 1 +- 5 / sqrt(n_t n_x).
  bool passes_sanity_check() const noexcept;

  static SheetSample zeros(const GridSpec& grid, std::uint64_t stream);

 private:
  std::vector<double> data_;
  double second_moment_ = 0.0;
  bool zero_ = false;
};

// Same increments as sample_sheet(grid, seed, stream) but generated on
// demand; used when every Monte Carlo sample needs its own environment and
// only the cells near one particle are ever read.
class LazySheet final : public SheetSource {
 public:
  LazySheet(const GridSpec& grid, std::uint64_t seed, std::string_view stream);

  std::span<const double> row(int i, int j0, int j1, std::vector<double>& scratch) const override;
  double increment(int i, int j) const override;

 private:
  double scale_;
};

SheetSample sample_sheet(const GridSpec& grid, std::uint64_t seed, std::string_view stream);

// w * sum_j h^{(order)}(y_j - center) dW[i][j], skipping cells farther than
// the kernel support radius from center.
double sheet_line_integral(const SheetSource& sheet, const SmoothingKernel& kernel, int order, int i,
                           double center, double weight);

// Brownian motion on the time grid: values[0] = 0, values[i+1] = values[i] + increments[i].
struct BrownianPath {
  std::vector<double> increments;
  std::vector<double> values;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

BrownianPath sample_bm(const GridSpec& grid, std::uint64_t seed, std::string_view stream);

// Fills out[k] with the increment of the Brownian stream at step `first + k`
// (the same numbers sample_bm would produce).
void fill_bm_increments(const GridSpec& grid, std::uint64_t seed, std::uint64_t stream, int first,
                        std::span<double> out);

std::string bm_stream_label(std::uint64_t path_index);

}  // namespace spdelab
