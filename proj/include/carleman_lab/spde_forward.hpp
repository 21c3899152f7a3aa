#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "carleman_lab/grid.hpp"
#include "carleman_lab/grid_calculus.hpp"
#include "carleman_lab/parallel.hpp"
#include "carleman_lab/rng.hpp"

namespace carleman_lab {

/// A coefficient or source given on the space-time grid.
///
/// Either identically zero, a constant, a time-independent profile x ↦ v(x),
/// a function (x, t) ↦ v, or an explicit table on one (grid, time grid) pair.
class SpaceTimeFunction {
 public:
  using Spatial = std::function<double(double)>;
  using General = std::function<double(double, double)>;

  SpaceTimeFunction() = default;

  static SpaceTimeFunction constant(double value) { return SpaceTimeFunction(Repr{value}); }
  static SpaceTimeFunction spatial(Spatial fn) { return SpaceTimeFunction(Repr{std::move(fn)}); }
  static SpaceTimeFunction space_time(General fn) { return SpaceTimeFunction(Repr{std::move(fn)}); }
  static SpaceTimeFunction table(SpaceTimeField values) {
    return SpaceTimeFunction(Repr{std::move(values)});
  }

  bool is_zero() const noexcept { return std::holds_alternative<std::monostate>(repr_); }

  /// Values at every node and level of (grid, time). Time-independent kinds
  /// produce one level.
  struct Compiled {
    bool zero = true;
    bool steady = true;
    std::size_t nodes = 0;
    std::vector<double> data;

    std::span<const double> at(int n) const {
      const std::size_t level = steady ? 0 : static_cast<std::size_t>(n);
      return {data.data() + level * nodes, nodes};
    }
    double at(int n, int i) const { return zero ? 0.0 : at(n)[static_cast<std::size_t>(i)]; }
  };

  Compiled compile(const GridSpec& grid, const TimeGrid& time) const {
    Compiled c;
    c.nodes = grid.node_count();
    const int levels = time.steps() + 1;
    std::visit(
        [&](const auto& v) {
          using V = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<V, std::monostate>) {
            c.zero = true;
          } else if constexpr (std::is_same_v<V, double>) {
            c.zero = false;
            c.data.assign(c.nodes, v);
          } else if constexpr (std::is_same_v<V, Spatial>) {
            c.zero = false;
            c.data.resize(c.nodes);
            for (int i = 0; i <= grid.interior() + 1; ++i) c.data[static_cast<std::size_t>(i)] = v(grid.x(i));
          } else if constexpr (std::is_same_v<V, General>) {
            c.zero = false;
            c.steady = false;
            c.data.resize(c.nodes * static_cast<std::size_t>(levels));
            for (int n = 0; n < levels; ++n) {
              const double t = time.t(n);
              for (int i = 0; i <= grid.interior() + 1; ++i) {
                c.data[static_cast<std::size_t>(n) * c.nodes + static_cast<std::size_t>(i)] = v(grid.x(i), t);
              }
            }
          } else {
            if (!(v.grid() == grid) || !(v.time() == time)) {
              throw InvalidArgument("coefficient table does not match the problem grid/time grid");
            }
            c.zero = false;
            c.steady = false;
            c.data.assign(v.raw().begin(), v.raw().end());
          }
        },
        repr_);
    for (double x : c.data) {
      if (!std::isfinite(x)) throw InvalidArgument("coefficient or source contains a non-finite value");
    }
    return c;
  }

 private:
  using Repr = std::variant<std::monostate, double, Spatial, General, SpaceTimeField>;
  explicit SpaceTimeFunction(Repr r) : repr_(std::move(r)) {}
  Repr repr_;
};

/// Semi-discrete stochastic parabolic system
///   dy - Δ_h y dt = (a y + b D_h^+ y + f) dt + (c y + g) dB,
///   y_0 = γ₁(t), y_{N+1} = γ₂(t), y(0) = y⁰.
struct SPDEProblem {
  GridSpec grid;
  TimeGrid time;
  SpaceTimeFunction a, b, c, f, g;
  /// Empty means homogeneous.
  std::function<double(double)> gamma_left;
  std::function<double(double)> gamma_right;
  /// Boundary entries are replaced by γ(0).
  std::optional<DiscreteField> initial;
};

/// Problem with every coefficient sampled on its grid; shared read-only by
/// all paths of an ensemble.
struct CompiledProblem {
  GridSpec grid;
  TimeGrid time;
  SpaceTimeFunction::Compiled a, b, c, f, g;
  std::vector<double> gamma_left;   // K+1 values
  std::vector<double> gamma_right;  // K+1 values
  std::vector<double> initial;      // N+2 values
};

inline CompiledProblem compile(const SPDEProblem& p) {
  CompiledProblem cp;
  cp.grid = p.grid;
  cp.time = p.time;
  cp.a = p.a.compile(p.grid, p.time);
  cp.b = p.b.compile(p.grid, p.time);
  cp.c = p.c.compile(p.grid, p.time);
  cp.f = p.f.compile(p.grid, p.time);
  cp.g = p.g.compile(p.grid, p.time);
  const int levels = p.time.steps() + 1;
  cp.gamma_left.assign(static_cast<std::size_t>(levels), 0.0);
  cp.gamma_right.assign(static_cast<std::size_t>(levels), 0.0);
  for (int n = 0; n < levels; ++n) {
    if (p.gamma_left) cp.gamma_left[static_cast<std::size_t>(n)] = p.gamma_left(p.time.t(n));
    if (p.gamma_right) cp.gamma_right[static_cast<std::size_t>(n)] = p.gamma_right(p.time.t(n));
  }
  for (double v : cp.gamma_left) {
    if (!std::isfinite(v)) throw InvalidArgument("left boundary data is non-finite");
  }
  for (double v : cp.gamma_right) {
    if (!std::isfinite(v)) throw InvalidArgument("right boundary data is non-finite");
  }

  cp.initial.assign(p.grid.node_count(), 0.0);
  bool zero_initial = true;
  if (p.initial) {
    if (!(p.initial->grid() == p.grid)) throw InvalidArgument("initial data grid mismatch");
    for (int i = 1; i <= p.grid.interior(); ++i) {
      cp.initial[static_cast<std::size_t>(i)] = (*p.initial)[i];
      if ((*p.initial)[i] != 0.0) zero_initial = false;
    }
  }
  if (zero_initial && (cp.gamma_left.front() != 0.0 || cp.gamma_right.front() != 0.0)) {
    throw InvalidArgument("boundary data must vanish at t = 0 when the initial data is zero");
  }
  cp.initial.front() = cp.gamma_left.front();
  cp.initial.back() = cp.gamma_right.front();
  return cp;
}

/// LU factors of the constant tridiagonal matrix I - dt Δ_h on the interior.
/// The matrix is strictly diagonally dominant, so elimination without
/// pivoting cannot break down.
class ImplicitDiffusion {
 public:
  ImplicitDiffusion(int interior, double ratio)
      : ratio_(ratio), upper_(static_cast<std::size_t>(interior)), inv_pivot_(static_cast<std::size_t>(interior)) {
    const double diag = 1.0 + 2.0 * ratio;
    const double off = -ratio;
    double prev = 0.0;
    for (std::size_t k = 0; k < upper_.size(); ++k) {
      const double pivot = diag - off * prev;
      inv_pivot_[k] = 1.0 / pivot;
      upper_[k] = off * inv_pivot_[k];
      prev = upper_[k];
    }
  }

  double ratio() const noexcept { return ratio_; }

  /// Solves in place; rhs holds the N interior values.
  void solve(std::span<double> rhs) const {
    const double off = -ratio_;
    const std::size_t n = upper_.size();
    rhs[0] *= inv_pivot_[0];
    for (std::size_t k = 1; k < n; ++k) rhs[k] = (rhs[k] - off * rhs[k - 1]) * inv_pivot_[k];
    for (std::size_t k = n - 1; k-- > 0;) rhs[k] -= upper_[k] * rhs[k + 1];
  }

 private:
  double ratio_;
  std::vector<double> upper_;
  std::vector<double> inv_pivot_;
};

/// Semi-implicit Euler–Maruyama: implicit in Δ_h, explicit (left endpoint)
/// in drift and noise,
///   (I - dt Δ_h) y^{n+1} = y^n + dt (a y^n + b D_h^+ y^n + f^n) + (c y^n + g^n) ΔB_n,
/// with y^{n+1}_0 = γ₁(t_{n+1}), y^{n+1}_{N+1} = γ₂(t_{n+1}).
///
/// `observe(n, level)` is called for n = 0..K with the full level (N+2 values).
template <class Observer>
void solve_forward(const CompiledProblem& p, const SamplePath& path, Observer&& observe) {
  if (!(path.time == p.time)) throw InvalidArgument("sample path time grid differs from the problem's");
  for (double db : path.increments) {
    if (!std::isfinite(db)) throw InvalidArgument("sample path contains a non-finite increment");
  }
  const int n_int = p.grid.interior();
  const double h = p.grid.h();
  const double dt = p.time.dt();
  const ImplicitDiffusion step(n_int, dt / (h * h));

  std::vector<double> y(p.initial);
  std::vector<double> next(y.size(), 0.0);
  observe(0, std::span<const double>(y));

  for (int n = 0; n < p.time.steps(); ++n) {
    const double db = path.increments[static_cast<std::size_t>(n)];
    for (int i = 1; i <= n_int; ++i) {
      const auto k = static_cast<std::size_t>(i);
      double drift = 0.0;
      if (!p.a.zero) drift += p.a.at(n)[k] * y[k];
      if (!p.b.zero) drift += p.b.at(n)[k] * (y[k + 1] - y[k]) / h;
      if (!p.f.zero) drift += p.f.at(n)[k];
      double noise = 0.0;
      if (!p.c.zero) noise += p.c.at(n)[k] * y[k];
      if (!p.g.zero) noise += p.g.at(n)[k];
      next[k] = y[k] + dt * drift + noise * db;
    }
    const double left = p.gamma_left[static_cast<std::size_t>(n + 1)];
    const double right = p.gamma_right[static_cast<std::size_t>(n + 1)];
    next[1] += step.ratio() * left;
    next[static_cast<std::size_t>(n_int)] += step.ratio() * right;
    step.solve(std::span<double>(next).subspan(1, static_cast<std::size_t>(n_int)));
    next.front() = left;
    next.back() = right;
    std::swap(y, next);
    observe(n + 1, std::span<const double>(y));
  }
}

inline SpaceTimeField solve_forward(const CompiledProblem& p, const SamplePath& path) {
  SpaceTimeField out(p.grid, p.time);
  solve_forward(p, path, [&](int n, std::span<const double> level) {
    std::copy(level.begin(), level.end(), out.level(n).begin());
  });
  return out;
}

inline SpaceTimeField solve_forward(const SPDEProblem& p, const SamplePath& path) {
  return solve_forward(compile(p), path);
}

// ---------------------------------------------------------------------------
// Boundary lifting

struct LiftingResult {
  SpaceTimeField u;
  /// (D_h^- u)_{N+1} at every level.
  std::vector<double> flux;
  double gamma_h1_sum = 0.0;        // ‖γ₁‖_{H¹(0,T)} + ‖γ₂‖_{H¹(0,T)}
  double gamma_h1_sq_sum = 0.0;     // ‖γ₁‖² + ‖γ₂‖²
  double solution_l2_h2 = 0.0;      // ‖u‖_{L²(0,T;H²(G_h))}
  double solution_sup_l2 = 0.0;     // max_n ‖u^n‖_{L²(G_h)}
  double flux_l2_sq = 0.0;          // ∫₀ᵀ |(D_h^- u)_{N+1}|² dt
  /// (solution_l2_h2 + solution_sup_l2) / gamma_h1_sum; 0 when γ ≡ 0.
  double solution_constant = 0.0;
  /// flux_l2_sq / gamma_h1_sq_sum; 0 when γ ≡ 0.
  double flux_constant = 0.0;
};

/// Solves du - Δ_h u dt = 0 with u_0 = γ₁, u_{N+1} = γ₂, u(0) = 0 by implicit
/// Euler and reports the norms that bound it.
inline LiftingResult solve_deterministic_lifting(const std::function<double(double)>& gamma_left,
                                                 const std::function<double(double)>& gamma_right,
                                                 const GridSpec& grid, const TimeGrid& time) {
  SPDEProblem p;
  p.grid = grid;
  p.time = time;
  p.gamma_left = gamma_left;
  p.gamma_right = gamma_right;
  const CompiledProblem cp = compile(p);  // rejects γ(0) ≠ 0

  LiftingResult r;
  r.u = solve_forward(cp, zero_path(time));
  const int n_int = grid.interior();
  const double h = grid.h();
  const double dt = time.dt();
  r.flux.resize(static_cast<std::size_t>(time.steps() + 1));
  double h2sum = 0.0;
  for (int n = 0; n <= time.steps(); ++n) {
    const auto lv = r.u.level(n);
    r.flux[static_cast<std::size_t>(n)] = (lv[static_cast<std::size_t>(n_int + 1)] - lv[static_cast<std::size_t>(n_int)]) / h;
    r.solution_sup_l2 = std::max(r.solution_sup_l2, std::sqrt(l2_energy(lv, h)));
    if (n < time.steps()) h2sum += dt * h2_energy(lv, h, 1, n_int);
  }
  r.solution_l2_h2 = std::sqrt(h2sum);
  const double fl = time_l2_norm(r.flux, dt);
  r.flux_l2_sq = fl * fl;
  const double g1 = time_h1_norm(cp.gamma_left, dt);
  const double g2 = time_h1_norm(cp.gamma_right, dt);
  r.gamma_h1_sum = g1 + g2;
  r.gamma_h1_sq_sum = g1 * g1 + g2 * g2;
  if (r.gamma_h1_sum > 0.0) {
    r.solution_constant = (r.solution_l2_h2 + r.solution_sup_l2) / r.gamma_h1_sum;
    r.flux_constant = r.flux_l2_sq / r.gamma_h1_sq_sum;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Ensembles

/// Runs fn(path_index, path) for M independent Brownian paths and returns the
/// results in path order, independent of the thread count.
template <class Fn>
auto map_paths(const TimeGrid& time, std::size_t paths, std::uint64_t master_seed, int threads, Fn&& fn) {
  return parallel_map(paths, threads, [&](std::size_t m) {
    const SamplePath path = sample_brownian(time, derive_path_seed(master_seed, m));
    return fn(m, path);
  });
}

struct Ensemble {
  GridSpec grid;
  TimeGrid time;
  std::uint64_t master_seed = 0;
  std::vector<SamplePath> paths;
  std::vector<SpaceTimeField> solutions;

  std::size_t size() const noexcept { return solutions.size(); }
};

inline Ensemble ensemble_run(const SPDEProblem& p, std::size_t paths, std::uint64_t master_seed,
                             int threads = 1) {
  if (paths < 1) throw InvalidArgument("ensemble_run: M must be >= 1");
  const CompiledProblem cp = compile(p);
  auto runs = map_paths(p.time, paths, master_seed, threads, [&](std::size_t, const SamplePath& path) {
    return std::pair<SamplePath, SpaceTimeField>(path, solve_forward(cp, path));
  });
  Ensemble e;
  e.grid = p.grid;
  e.time = p.time;
  e.master_seed = master_seed;
  for (auto& [path, sol] : runs) {
    e.paths.push_back(std::move(path));
    e.solutions.push_back(std::move(sol));
  }
  return e;
}

struct Estimate {
  double mean = 0.0;
  /// Sample standard deviation over sqrt(M); empty when M < 2.
  std::optional<double> std_error;
  std::size_t count = 0;
};

/// Mean and standard error of per-path values, summed in path order.
inline Estimate expectation(std::span<const double> values) {
  Estimate e;
  e.count = values.size();
  if (values.empty()) return e;
  double sum = 0.0;
  for (double v : values) sum += v;
  e.mean = sum / static_cast<double>(values.size());
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - e.mean) * (v - e.mean);
    const double var = ss / static_cast<double>(values.size() - 1);
    e.std_error = std::sqrt(var / static_cast<double>(values.size()));
  }
  return e;
}

template <class Functional>
Estimate expectation(const Functional& functional, const Ensemble& e) {
  std::vector<double> values;
  values.reserve(e.size());
  for (std::size_t m = 0; m < e.size(); ++m) values.push_back(functional(e.paths[m], e.solutions[m]));
  return expectation(values);
}

}  // namespace carleman_lab
