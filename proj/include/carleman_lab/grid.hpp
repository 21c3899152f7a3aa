#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "carleman_lab/errors.hpp"

namespace carleman_lab {

/// Uniform mesh 0 = x_0 < x_1 < ... < x_{N+1} = L with h = L/(N+1).
///
/// N counts interior nodes. G_h = {x_1..x_N}, G_h^- = {x_0..x_N},
/// boundary = {x_0, x_{N+1}}.
class GridSpec {
 public:
  GridSpec() = default;

  GridSpec(double length, int interior_nodes) : length_(length), n_(interior_nodes) {
    if (!(length > 0.0) || !std::isfinite(length)) {
      throw InvalidArgument("make_grid: L must be positive and finite, got " +
                            std::to_string(length));
    }
    if (interior_nodes < 2) {
      throw InvalidArgument("make_grid: N must be >= 2, got " +
                            std::to_string(interior_nodes));
    }
    h_ = length / static_cast<double>(interior_nodes + 1);
  }

  double length() const noexcept { return length_; }
  int interior() const noexcept { return n_; }
  double h() const noexcept { return h_; }
  std::size_t node_count() const noexcept { return static_cast<std::size_t>(n_) + 2; }

  /// x_i = i h, with x_{N+1} pinned to L exactly.
  double x(int i) const noexcept {
    return i == n_ + 1 ? length_ : static_cast<double>(i) * h_;
  }

  std::vector<double> nodes() const {
    std::vector<double> xs(node_count());
    for (int i = 0; i <= n_ + 1; ++i) xs[static_cast<std::size_t>(i)] = x(i);
    return xs;
  }

  bool operator==(const GridSpec&) const = default;

 private:
  double length_ = 1.0;
  int n_ = 2;
  double h_ = 1.0 / 3.0;
};

inline GridSpec make_grid(double length, int interior_nodes) {
  return GridSpec(length, interior_nodes);
}

/// Grid function living on nodes [Lo, N+1-Hi].
///
/// The index offsets make the domain part of the type:
///   GridFunction<0,0>  all of Ḡ_h          (DiscreteField)
///   GridFunction<0,1>  G_h^- = {0..N}      (FieldOnMinus)
///   GridFunction<1,0>  {1..N+1}            (FieldOnPlus)
///   GridFunction<1,1>  G_h = {1..N}        (InteriorField)
/// Elements are addressed by global node index.
template <int Lo, int Hi>
class GridFunction {
  static_assert(Lo >= 0 && Hi >= 0);

 public:
  static constexpr int lo_offset = Lo;
  static constexpr int hi_offset = Hi;

  GridFunction() = default;

  explicit GridFunction(const GridSpec& grid, double fill = 0.0)
      : grid_(grid), values_(size_for(grid), fill) {}

  GridFunction(const GridSpec& grid, std::vector<double> values)
      : grid_(grid), values_(std::move(values)) {
    if (values_.size() != size_for(grid)) {
      throw InvalidArgument("grid function: expected " + std::to_string(size_for(grid)) +
                            " values, got " + std::to_string(values_.size()));
    }
    for (double v : values_) {
      if (!std::isfinite(v)) throw InvalidArgument("grid function: non-finite value");
    }
  }

  /// Samples fn(x_i) over the domain.
  static GridFunction sample(const GridSpec& grid, const std::function<double(double)>& fn) {
    GridFunction out(grid);
    for (int i = out.first(); i <= out.last(); ++i) out[i] = fn(grid.x(i));
    return out;
  }

  static std::size_t size_for(const GridSpec& grid) {
    return static_cast<std::size_t>(grid.interior() + 2 - Lo - Hi);
  }

  const GridSpec& grid() const noexcept { return grid_; }
  int first() const noexcept { return Lo; }
  int last() const noexcept { return grid_.interior() + 1 - Hi; }
  std::size_t size() const noexcept { return values_.size(); }

  double& operator[](int i) {
    assert(i >= first() && i <= last());
    return values_[static_cast<std::size_t>(i - Lo)];
  }
  double operator[](int i) const {
    assert(i >= first() && i <= last());
    return values_[static_cast<std::size_t>(i - Lo)];
  }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  double max_abs() const noexcept {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  GridFunction& operator+=(const GridFunction& o) {
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += o.values_[k];
    return *this;
  }
  GridFunction& operator-=(const GridFunction& o) {
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] -= o.values_[k];
    return *this;
  }
  GridFunction& operator*=(double a) {
    for (double& v : values_) v *= a;
    return *this;
  }

  friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
  friend GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
  friend GridFunction operator*(GridFunction a, double s) { return a *= s; }
  friend GridFunction operator*(double s, GridFunction a) { return a *= s; }
  /// Pointwise product.
  friend GridFunction operator*(GridFunction a, const GridFunction& b) {
    for (std::size_t k = 0; k < a.values_.size(); ++k) a.values_[k] *= b.values_[k];
    return a;
  }

 private:
  GridSpec grid_;
  std::vector<double> values_;
};

using DiscreteField = GridFunction<0, 0>;
using FieldOnMinus = GridFunction<0, 1>;
using FieldOnPlus = GridFunction<1, 0>;
using InteriorField = GridFunction<1, 1>;

/// Restriction to a sub-domain (Lo2 >= Lo, Hi2 >= Hi).
template <int Lo2, int Hi2, int Lo, int Hi>
GridFunction<Lo2, Hi2> restrict_to(const GridFunction<Lo, Hi>& f) {
  static_assert(Lo2 >= Lo && Hi2 >= Hi, "restriction must shrink the domain");
  GridFunction<Lo2, Hi2> out(f.grid());
  for (int i = out.first(); i <= out.last(); ++i) out[i] = f[i];
  return out;
}

/// Uniform time grid t_n = n dt, n = 0..K, with K dt = T.
class TimeGrid {
 public:
  TimeGrid() = default;
  TimeGrid(double horizon, int steps) : horizon_(horizon), steps_(steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
      throw InvalidArgument("time grid: T must be positive, got " + std::to_string(horizon));
    }
    if (steps < 1) throw InvalidArgument("time grid: K must be >= 1");
    dt_ = horizon / static_cast<double>(steps);
  }

  double horizon() const noexcept { return horizon_; }
  int steps() const noexcept { return steps_; }
  double dt() const noexcept { return dt_; }
  double t(int n) const noexcept { return n == steps_ ? horizon_ : static_cast<double>(n) * dt_; }

  bool operator==(const TimeGrid&) const = default;

 private:
  double horizon_ = 1.0;
  int steps_ = 1;
  double dt_ = 1.0;
};

/// Smallest K with T/K <= dt_max.
inline TimeGrid time_grid_for_step(double horizon, double dt_max) {
  if (!(dt_max > 0.0)) throw InvalidArgument("time grid: dt must be positive");
  const double k = std::ceil(horizon / dt_max - 1e-9);
  return TimeGrid(horizon, std::max(1, static_cast<int>(k)));
}

/// One DiscreteField per time level, stored level-major.
class SpaceTimeField {
 public:
  SpaceTimeField() = default;
  SpaceTimeField(const GridSpec& grid, const TimeGrid& time)
      : grid_(grid),
        time_(time),
        values_(static_cast<std::size_t>(time.steps() + 1) * grid.node_count(), 0.0) {}

  const GridSpec& grid() const noexcept { return grid_; }
  const TimeGrid& time() const noexcept { return time_; }

  std::span<double> level(int n) {
    return {values_.data() + static_cast<std::size_t>(n) * grid_.node_count(), grid_.node_count()};
  }
  std::span<const double> level(int n) const {
    return {values_.data() + static_cast<std::size_t>(n) * grid_.node_count(), grid_.node_count()};
  }

  double& at(int n, int i) { return level(n)[static_cast<std::size_t>(i)]; }
  double at(int n, int i) const { return level(n)[static_cast<std::size_t>(i)]; }

  DiscreteField field(int n) const {
    auto lv = level(n);
    return DiscreteField(grid_, std::vector<double>(lv.begin(), lv.end()));
  }

  std::span<const double> raw() const noexcept { return values_; }
  std::span<double> raw() noexcept { return values_; }

  SpaceTimeField& operator*=(double a) {
    for (double& v : values_) v *= a;
    return *this;
  }

 private:
  GridSpec grid_;
  TimeGrid time_;
  std::vector<double> values_;
};

}  // namespace carleman_lab
