#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "leafwise/error.hpp"

namespace leafwise {

inline constexpr std::size_t kMaxDims = 3;
inline constexpr std::size_t kMinPoints = 4;
inline constexpr std::size_t kDenseCap = 4096;

using Coord = std::array<double, kMaxDims>;

struct GridDim {
  double length = 0.0;
  std::size_t points = 0;
  bool operator==(const GridDim&) const = default;
};

/**
 * Periodic uniform grid on S^1 or a flat torus of dimension <= 3.
 *
 * Points are stored row-major: the last dimension varies fastest. Point
 * index i_d in dimension d sits at coordinate i_d * spacing(d).
 */
class Grid {
 public:
  explicit Grid(std::span<const GridDim> dims) {
    if (dims.empty()) throw InvalidInput("grid needs at least one dimension");
    if (dims.size() > kMaxDims)
      throw InvalidInput("grid supports at most 3 dimensions, got " +
                         std::to_string(dims.size()));
    rank_ = dims.size();
    for (std::size_t d = 0; d < rank_; ++d) {
      const auto& g = dims[d];
      if (!(g.length > 0.0) || !std::isfinite(g.length))
        throw InvalidInput("grid length must be positive and finite");
      if (g.points < kMinPoints)
        throw InvalidInput("grid needs at least 4 points per dimension, got " +
                           std::to_string(g.points));
      dims_[d] = g;
      spacing_[d] = g.length / static_cast<double>(g.points);
    }
    std::size_t stride = 1;
    for (std::size_t d = rank_; d-- > 0;) {
      strides_[d] = stride;
      stride *= dims_[d].points;
    }
    total_ = stride;
  }
  Grid(std::initializer_list<GridDim> dims)
      : Grid(std::span<const GridDim>(dims.begin(), dims.size())) {}

  std::size_t rank() const noexcept { return rank_; }
  const GridDim& dim(std::size_t d) const { return dims_.at(d); }
  std::vector<GridDim> dims() const {
    return {dims_.begin(), dims_.begin() + static_cast<std::ptrdiff_t>(rank_)};
  }
  double spacing(std::size_t d) const { return spacing_.at(d); }
  std::size_t points(std::size_t d) const { return dims_.at(d).points; }
  double length(std::size_t d) const { return dims_.at(d).length; }
  std::size_t stride(std::size_t d) const { return strides_.at(d); }
  std::size_t total_points() const noexcept { return total_; }

  double cell_volume() const noexcept {
    double v = 1.0;
    for (std::size_t d = 0; d < rank_; ++d) v *= spacing_[d];
    return v;
  }
  double total_volume() const noexcept {
    double v = 1.0;
    for (std::size_t d = 0; d < rank_; ++d) v *= dims_[d].length;
    return v;
  }

  std::size_t index_along(std::size_t flat, std::size_t d) const {
    return (flat / strides_[d]) % dims_[d].points;
  }
  Coord coordinates(std::size_t flat) const {
    Coord x{};
    for (std::size_t d = 0; d < rank_; ++d)
      x[d] = static_cast<double>(index_along(flat, d)) * spacing_[d];
    return x;
  }
  /// Flat index of the neighbour `offset` steps away along d, wrapping.
  std::size_t neighbor(std::size_t flat, std::size_t d, long offset) const {
    const auto n = static_cast<long>(dims_[d].points);
    const auto i = static_cast<long>(index_along(flat, d));
    long j = (i + offset) % n;
    if (j < 0) j += n;
    return flat + static_cast<std::size_t>(j - i) * strides_[d];
  }

  bool operator==(const Grid& o) const {
    if (rank_ != o.rank_) return false;
    for (std::size_t d = 0; d < rank_; ++d)
      if (!(dims_[d] == o.dims_[d])) return false;
    return true;
  }

 private:
  std::size_t rank_ = 0;
  std::array<GridDim, kMaxDims> dims_{};
  std::array<double, kMaxDims> spacing_{};
  std::array<std::size_t, kMaxDims> strides_{};
  std::size_t total_ = 0;
};

inline Grid make_circle_grid(double length, std::size_t points) {
  return Grid{GridDim{length, points}};
}

inline Grid make_torus_grid(std::span<const GridDim> dims) { return Grid(dims); }
inline Grid make_torus_grid(std::initializer_list<GridDim> dims) { return Grid(dims); }

/// Product grid base x fiber: base dimensions first.
inline Grid product_grid(const Grid& base, const Grid& fiber) {
  auto dims = base.dims();
  auto f = fiber.dims();
  dims.insert(dims.end(), f.begin(), f.end());
  return Grid(dims);
}

/// Real values sampled at grid points. Immutable once built; every value finite.
class ScalarField {
 public:
  ScalarField(Grid grid, std::vector<double> values)
      : grid_(std::move(grid)), values_(std::move(values)) {
    if (values_.size() != grid_.total_points())
      throw InvalidInput("field has " + std::to_string(values_.size()) +
                         " values, grid has " + std::to_string(grid_.total_points()) +
                         " points");
    for (double v : values_)
      if (!std::isfinite(v)) throw InvalidInput("field contains a non-finite value");
  }

  static ScalarField constant(const Grid& grid, double c) {
    return {grid, std::vector<double>(grid.total_points(), c)};
  }
  /// Samples f(Coord) at every grid point.
  template <class F>
  static ScalarField sample(const Grid& grid, F&& f) {
    std::vector<double> v(grid.total_points());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(grid.coordinates(i));
    return {grid, std::move(v)};
  }

  const Grid& grid() const noexcept { return grid_; }
  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double min() const { return *std::min_element(values_.begin(), values_.end()); }
  double max() const { return *std::max_element(values_.begin(), values_.end()); }

 private:
  Grid grid_;
  std::vector<double> values_;
};

inline void require_same_grid(const ScalarField& a, const Grid& g, const char* what) {
  if (!(a.grid() == g)) throw InvalidInput(std::string(what) + " does not live on the grid");
}

// ---------------------------------------------------------------- norms

/// Discrete L2 inner product with cell-volume weights.
inline double inner(const Grid& g, std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s * g.cell_volume();
}
inline double l2_norm(const Grid& g, std::span<const double> a) {
  return std::sqrt(inner(g, a, a));
}
inline double sup_norm(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}
inline double sup_distance(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}
inline double sup_distance(const ScalarField& a, const ScalarField& b) {
  require_same_grid(b, a.grid(), "second field");
  return sup_distance(a.values(), b.values());
}

// ------------------------------------------------------------ Laplacian

namespace detail {

/// out = sum over d in [d_begin, d_end) of second central differences along d.
inline void laplacian_into(const Grid& g, std::span<const double> in, std::span<double> out,
                           std::size_t d_begin, std::size_t d_end) {
  const std::size_t n = g.total_points();
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t d = d_begin; d < d_end; ++d) {
    const double inv_h2 = 1.0 / (g.spacing(d) * g.spacing(d));
    const std::size_t pts = g.points(d);
    const std::size_t stride = g.stride(d);
    const std::size_t block = pts * stride;
    for (std::size_t outer = 0; outer < n; outer += block) {
      for (std::size_t inner_off = 0; inner_off < stride; ++inner_off) {
        const std::size_t base = outer + inner_off;
        for (std::size_t i = 0; i < pts; ++i) {
          const std::size_t c = base + i * stride;
          const std::size_t l = base + ((i + pts - 1) % pts) * stride;
          const std::size_t r = base + ((i + 1) % pts) * stride;
          out[c] += (in[r] - 2.0 * in[c] + in[l]) * inv_h2;
        }
      }
    }
  }
}

inline std::vector<double> laplacian(const Grid& g, std::span<const double> in) {
  std::vector<double> out(in.size());
  laplacian_into(g, in, out, 0, g.rank());
  return out;
}

}  // namespace detail

/// Second-order periodic finite-difference Laplacian.
inline ScalarField apply_laplacian(const Grid& grid, const ScalarField& f) {
  require_same_grid(f, grid, "field");
  return {grid, detail::laplacian(grid, f.values())};
}

/// Laplacian restricted to the dimensions [d_begin, d_end), e.g. the leaf
/// directions of a product grid.
inline ScalarField apply_partial_laplacian(const Grid& grid, const ScalarField& f,
                                           std::size_t d_begin, std::size_t d_end) {
  require_same_grid(f, grid, "field");
  if (d_begin > d_end || d_end > grid.rank()) throw InvalidInput("bad dimension range");
  std::vector<double> out(f.size());
  detail::laplacian_into(grid, f.values(), out, d_begin, d_end);
  return {grid, std::move(out)};
}

/// Dense matrix of apply_laplacian. Only for grids with at most 4096 points.
inline Eigen::MatrixXd laplacian_matrix(const Grid& grid) {
  const std::size_t n = grid.total_points();
  if (n > kDenseCap)
    throw InvalidInput("dense Laplacian capped at 4096 points, grid has " + std::to_string(n));
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                            static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (std::size_t d = 0; d < grid.rank(); ++d) {
      const double w = 1.0 / (grid.spacing(d) * grid.spacing(d));
      m(r, r) -= 2.0 * w;
      m(r, static_cast<Eigen::Index>(grid.neighbor(i, d, 1))) += w;
      m(r, static_cast<Eigen::Index>(grid.neighbor(i, d, -1))) += w;
    }
  }
  return m;
}

/// Samples a field on `coarse` by injection from a grid with exactly twice
/// the points in every dimension (same lengths).
inline ScalarField restrict_to_coarse(const ScalarField& fine, const Grid& coarse) {
  const Grid& fg = fine.grid();
  if (fg.rank() != coarse.rank()) throw InvalidInput("rank mismatch in restriction");
  for (std::size_t d = 0; d < coarse.rank(); ++d)
    if (fg.points(d) != 2 * coarse.points(d) || fg.length(d) != coarse.length(d))
      throw InvalidInput("fine grid must double the coarse grid in every dimension");
  std::vector<double> v(coarse.total_points());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::size_t j = 0;
    for (std::size_t d = 0; d < coarse.rank(); ++d) j += 2 * coarse.index_along(i, d) * fg.stride(d);
    v[i] = fine[j];
  }
  return {coarse, std::move(v)};
}

}  // namespace leafwise
