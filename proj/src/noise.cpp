#include "spdelab/noise.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "spdelab/error.hpp"
#include "spdelab/rng.hpp"

namespace spdelab {

int GridSpec::nearest_node(double y_value) const noexcept {
  const double rel = (y_value - x_min) / dy() - 0.5;
  const long j = std::lround(rel);
  return static_cast<int>(std::clamp<long>(j, 0, n_x - 1));
}

int GridSpec::time_index(double t_value) const {
  const double rel = t_value / dt();
  const long i = std::lround(rel);
  if (!std::isfinite(t_value) || std::abs(rel - static_cast<double>(i)) > 1e-9 * std::max(1.0, rel) || i < 0 ||
      i > n_t) {
    std::ostringstream msg;
    msg << "time " << t_value << " is not on the grid (dt = " << dt() << ")";
    throw Error("noise", "invalid-argument", msg.str());
  }
  return static_cast<int>(i);
}

void GridSpec::validate() const {
  auto bad = [](const std::string& what) { throw Error("noise", "invalid-config", what); };
  if (!(t_max > 0.0) || !std::isfinite(t_max)) bad("grid.t_max must be positive");
  if (n_t <= 0) bad("grid.n_t must be positive");
  if (n_x <= 0) bad("grid.n_x must be positive");
  if (!(x_max > x_min) || !std::isfinite(x_min) || !std::isfinite(x_max)) bad("grid.x_max must exceed grid.x_min");
}

std::vector<std::string> GridSpec::margin_warnings(const SmoothingKernel& kernel) const {
  std::vector<std::string> out;
  const double h_sq = kernel.is_zero() ? 0.0 : std::pow(l2_norms(kernel).h, 2);
  const double spread = 4.0 * std::sqrt(2.0 * (1.0 + h_sq) * t_max);
  const double needed = 4.0 * (kernel.support_radius() + spread);
  if (x_max - x_min < needed) {
    std::ostringstream msg;
    msg << "spatial window " << (x_max - x_min) << " is below the recommended margin " << needed;
    out.push_back(msg.str());
  }
  return out;
}

SheetSample::SheetSample(const GridSpec& grid, std::uint64_t seed, std::uint64_t stream,
                         std::vector<double> increments)
    : SheetSource(grid, seed, stream), data_(std::move(increments)) {
  if (data_.size() != static_cast<std::size_t>(grid.n_t) * grid.n_x) {
    throw Error("noise", "shape-error", "sheet increments do not match the grid");
  }
  const double scale = grid.dt() * grid.dy();
  double s = 0.0;
  for (double v : data_) s += v * v;
  second_moment_ = s / (scale * static_cast<double>(data_.size()));
  zero_ = std::all_of(data_.begin(), data_.end(), [](double v) { return v == 0.0; });
}

bool SheetSample::passes_sanity_check() const noexcept {
  const double tol = 5.0 / std::sqrt(static_cast<double>(grid().n_t) * grid().n_x);
  return std::abs(second_moment_ - 1.0) <= tol;
}

SheetSample SheetSample::zeros(const GridSpec& grid, std::uint64_t stream) {
  return SheetSample(grid, 0, stream, std::vector<double>(static_cast<std::size_t>(grid.n_t) * grid.n_x, 0.0));
}

std::span<const double> SheetSample::row(int i, int j0, int j1, std::vector<double>&) const {
  return {data_.data() + static_cast<std::size_t>(i) * grid().n_x + j0, static_cast<std::size_t>(j1 - j0)};
}

LazySheet::LazySheet(const GridSpec& grid, std::uint64_t seed, std::string_view stream)
    : SheetSource(grid, seed, stream_id(stream)), scale_(std::sqrt(grid.dt() * grid.dy())) {}

std::span<const double> LazySheet::row(int i, int j0, int j1, std::vector<double>& scratch) const {
  const auto count = static_cast<std::size_t>(j1 - j0);
  scratch.resize(count);
  const CounterNormal normal(seed(), stream());
  normal.fill(static_cast<std::uint64_t>(i) * grid().n_x + j0, scratch);
  for (double& v : scratch) v *= scale_;
  return scratch;
}

double LazySheet::increment(int i, int j) const {
  const CounterNormal normal(seed(), stream());
  return scale_ * normal(static_cast<std::uint64_t>(i) * grid().n_x + j);
}

SheetSample sample_sheet(const GridSpec& grid, std::uint64_t seed, std::string_view stream) {
  grid.validate();
  const auto id = stream_id(stream);
  std::vector<double> data(static_cast<std::size_t>(grid.n_t) * grid.n_x);
  CounterNormal(seed, id).fill(0, data);
  const double scale = std::sqrt(grid.dt() * grid.dy());
  for (double& v : data) v *= scale;
  return SheetSample(grid, seed, id, std::move(data));
}

double sheet_line_integral(const SheetSource& sheet, const SmoothingKernel& kernel, int order, int i,
                           double center, double weight) {
  if (order < 0 || order > 2) throw Error("noise", "invalid-argument", "order must be 0, 1 or 2");
  if (!std::isfinite(center)) throw Error("noise", "invalid-argument", "non-finite center");
  const GridSpec& g = sheet.grid();
  if (i < 0 || i >= g.n_t) throw Error("noise", "invalid-argument", "time index out of range");
  if (kernel.is_zero() || weight == 0.0) return 0.0;
  const double radius = kernel.support_radius();
  const double dy = g.dy();
  const int j0 = std::max(0, static_cast<int>(std::ceil((center - radius - g.x_min) / dy - 0.5)));
  const int j1 = std::min(g.n_x, static_cast<int>(std::floor((center + radius - g.x_min) / dy - 0.5)) + 1);
  if (j1 <= j0) return 0.0;
  std::vector<double> scratch;
  const auto dw = sheet.row(i, j0, j1, scratch);
  double s = 0.0;
  for (int j = j0; j < j1; ++j) {
    s += kernel.eval_all(g.y(j) - center)[static_cast<std::size_t>(order)] * dw[static_cast<std::size_t>(j - j0)];
  }
  return weight * s;
}

void fill_bm_increments(const GridSpec& grid, std::uint64_t seed, std::uint64_t stream, int first,
                        std::span<double> out) {
  CounterNormal(seed, stream).fill(static_cast<std::uint64_t>(first), out);
  const double scale = std::sqrt(grid.dt());
  for (double& v : out) v *= scale;
}

BrownianPath sample_bm(const GridSpec& grid, std::uint64_t seed, std::string_view stream) {
  grid.validate();
  BrownianPath path;
  path.seed = seed;
  path.stream = stream_id(stream);
  path.increments.resize(static_cast<std::size_t>(grid.n_t));
  fill_bm_increments(grid, seed, path.stream, 0, path.increments);
  path.values.resize(path.increments.size() + 1, 0.0);
  for (std::size_t i = 0; i < path.increments.size(); ++i) path.values[i + 1] = path.values[i] + path.increments[i];
  return path;
}

std::string bm_stream_label(std::uint64_t path_index) { return "B/" + std::to_string(path_index); }

}  // namespace spdelab
