#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "carleman_lab/grid_calculus.hpp"
#include "carleman_lab/spde_forward.hpp"
#include "carleman_lab/weights.hpp"

namespace carleman_lab {

// ---------------------------------------------------------------------------
// Lateral data and restricted norms

/// ξ = (y)_{N+1} and η = (D⁻y)_{N+1} at every time level, one series per path.
struct CauchyData {
  TimeGrid time;
  double h = 0.0;
  std::vector<std::vector<double>> xi;
  std::vector<std::vector<double>> eta;
  /// Per-path ‖ξ‖_{H¹(0,T)} and ‖η‖_{L²(0,T)}.
  std::vector<double> xi_h1;
  std::vector<double> eta_l2;

  std::size_t paths() const noexcept { return xi.size(); }
  /// √E‖ξ‖²_{H¹}
  double xi_norm() const { return rms(xi_h1); }
  /// √E‖η‖²_{L²}
  double eta_norm() const { return rms(eta_l2); }
  double data_norm() const { return xi_norm() + eta_norm(); }

 private:
  static double rms(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s / static_cast<double>(v.size()));
  }
};

inline void append_cauchy_trace(CauchyData& data, const SpaceTimeField& y) {
  const int nn = y.grid().interior();
  const double h = y.grid().h();
  std::vector<double> xi(static_cast<std::size_t>(y.time().steps() + 1));
  std::vector<double> eta(xi.size());
  for (int n = 0; n <= y.time().steps(); ++n) {
    xi[static_cast<std::size_t>(n)] = y.at(n, nn + 1);
    eta[static_cast<std::size_t>(n)] = (y.at(n, nn + 1) - y.at(n, nn)) / h;
  }
  data.xi_h1.push_back(time_h1_norm(xi, y.time().dt()));
  data.eta_l2.push_back(time_l2_norm(eta, y.time().dt()));
  data.xi.push_back(std::move(xi));
  data.eta.push_back(std::move(eta));
}

inline CauchyData generate_cauchy_data(std::span<const SpaceTimeField> solutions) {
  if (solutions.empty()) throw InvalidArgument("generate_cauchy_data: empty ensemble");
  CauchyData d;
  d.time = solutions.front().time();
  d.h = solutions.front().grid().h();
  for (const auto& y : solutions) {
    if (!(y.time() == d.time) || !(y.grid() == solutions.front().grid())) {
      throw InvalidArgument("generate_cauchy_data: solutions on different grids");
    }
    append_cauchy_trace(d, y);
  }
  return d;
}

inline CauchyData generate_cauchy_data(const Ensemble& e) { return generate_cauchy_data(e.solutions); }

/// Smallest N whose grid has an interior node right of x_left.
inline int minimal_interior_for(double x_left, double length) {
  const double q = x_left / length;
  return static_cast<int>(std::floor(q / (1.0 - q))) + 1;
}

/// First interior node of G_{0,h} = (x_left, L) ∩ G_h.
inline int g0_first_node(const GridSpec& grid, double x_left) {
  if (!(x_left > 0.0 && x_left < grid.length())) {
    throw InvalidArgument("G0: need 0 < x_left < L, got x_left = " + std::to_string(x_left));
  }
  for (int i = 1; i <= grid.interior(); ++i) {
    if (grid.x(i) > x_left) return i;
  }
  throw InvalidArgument("G0 = (" + std::to_string(x_left) + ", L] contains no interior node at N = " +
                        std::to_string(grid.interior()) + "; need N >= " +
                        std::to_string(minimal_interior_for(x_left, grid.length())));
}

/// Levels n with t_n in [ε, T - ε).
inline std::pair<int, int> interior_time_window(const TimeGrid& time, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon < 0.5 * time.horizon())) {
    throw InvalidArgument("interior window: need 0 <= eps < T/2, got eps = " + std::to_string(epsilon));
  }
  const double slack = 1e-12 * time.horizon();
  int lo = 0;
  while (lo < time.steps() && time.t(lo) < epsilon - slack) ++lo;
  int hi = lo;
  while (hi < time.steps() && time.t(hi) < time.horizon() - epsilon - slack) ++hi;
  if (hi <= lo) throw InvalidArgument("interior window: no time level in [eps, T - eps)");
  return {lo, hi};
}

/// Σ_{n in window} dt ‖y(t_n)‖²_{H²(G_{0,h})} for one path.
inline double interior_norm_sq(const SpaceTimeField& y, double x_left, double epsilon) {
  const int first = g0_first_node(y.grid(), x_left);
  const auto [lo, hi] = interior_time_window(y.time(), epsilon);
  double sum = 0.0;
  for (int n = lo; n < hi; ++n) sum += h2_energy(y.level(n), y.grid().h(), first, y.grid().interior());
  return y.time().dt() * sum;
}

/// ‖y‖_{L²_F(ε,T-ε;H²(G_{0,h}))}
inline double interior_norm(std::span<const SpaceTimeField> solutions, double x_left, double epsilon) {
  if (solutions.empty()) throw InvalidArgument("interior_norm: empty ensemble");
  double s = 0.0;
  for (const auto& y : solutions) s += interior_norm_sq(y, x_left, epsilon);
  return std::sqrt(s / static_cast<double>(solutions.size()));
}

inline double interior_norm(const Ensemble& e, double x_left, double epsilon) {
  return interior_norm(e.solutions, x_left, epsilon);
}

/// ‖y‖²_{L²(0,T;H²(G_h))} for one path.
inline double global_h2_sq(const SpaceTimeField& y) {
  double sum = 0.0;
  for (int n = 0; n < y.time().steps(); ++n) sum += h2_energy(y.level(n), y.grid().h(), 1, y.grid().interior());
  return y.time().dt() * sum;
}

// ---------------------------------------------------------------------------
// Hölder fit

/// Parameters of the weight and level sets in force for a record. They do not
/// enter the measured norms.
struct HolderContext {
  double delta = 0.0;
  double beta = 0.0;
  int n_level = 0;
  std::vector<double> t0;
  bool inclusion_holds = true;
  std::size_t inclusion_checked = 0;
  std::size_t inclusion_violations = 0;
};

struct HolderRecord {
  double h = 0.0;
  double epsilon = 0.0;
  double x_left = 0.0;
  double param = 0.0;
  std::size_t paths = 0;
  double m_bound = 0.0;
  double xi_h1 = 0.0;
  double eta_l2 = 0.0;
  double data_norm = 0.0;
  double data_norm_std_error = 0.0;
  double interior_norm = 0.0;
  bool skipped = false;
  std::string skip_reason;
  double beta = 0.0;
  int n_level = 0;
  std::size_t t0_count = 0;
  bool inclusion_holds = true;
};

struct HolderFit {
  double slope = 0.0;
  double kappa = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t used = 0;
  /// log10 span of data_norm / M over the records used.
  double decades = 0.0;
  bool kappa_in_range = false;
  /// exp(intercept)
  double c_fit = 0.0;
  /// Smallest C with interior ≤ C M^κ data^{1-κ} on every record used.
  double c_envelope = 0.0;
  /// Records above the fitted line itself.
  std::size_t above_fit = 0;
};

/// Least-squares fit of log(interior/M) against log(data/M); slope = 1 - κ.
/// Empty when fewer than two usable records remain.
inline std::optional<HolderFit> fit_holder(std::span<const HolderRecord> records) {
  std::vector<double> lx, ly;
  for (const auto& r : records) {
    if (r.skipped || !(r.data_norm > 0.0) || !(r.interior_norm > 0.0) || !(r.m_bound > 0.0)) continue;
    lx.push_back(std::log(r.data_norm / r.m_bound));
    ly.push_back(std::log(r.interior_norm / r.m_bound));
  }
  if (lx.size() < 2) return std::nullopt;
  const double n = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    sxx += (lx[k] - mx) * (lx[k] - mx);
    sxy += (lx[k] - mx) * (ly[k] - my);
    syy += (ly[k] - my) * (ly[k] - my);
  }
  if (!(sxx > 0.0)) return std::nullopt;
  HolderFit f;
  f.used = lx.size();
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.kappa = 1.0 - f.slope;
  f.kappa_in_range = f.kappa > 0.0 && f.kappa < 1.0;
  double sse = 0.0, worst = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < lx.size(); ++k) {
    const double res = ly[k] - (f.intercept + f.slope * lx[k]);
    sse += res * res;
    worst = std::max(worst, res);
    if (res > 0.0) ++f.above_fit;
  }
  f.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  f.decades = (*std::max_element(lx.begin(), lx.end()) - *std::min_element(lx.begin(), lx.end())) / std::log(10.0);
  f.c_fit = std::exp(f.intercept);
  f.c_envelope = std::exp(f.intercept + worst);
  return f;
}

// ---------------------------------------------------------------------------
// Families and the experiment

struct CauchyCoefficients {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
};

/// One-parameter family of solutions; build(grid, param) returns the problem
/// whose solution is the family member.
struct CauchyFamily {
  std::string name;
  double length = 1.0;
  double horizon = 1.0;
  int steps = 0;
  std::vector<double> params;
  std::function<SPDEProblem(const GridSpec&, double)> build;
};

/// Time-harmonic members y ≈ Re(e^{iωt} e^{σ(L-x)}), σ = √(iω): initial data
/// Re e^{σ(L-x)} with the matching Dirichlet traces at both ends. Data at x = L
/// stay O(ω) while the solution grows like e^{√(ω/2) (L-x)} inland.
inline CauchyFamily sideways_family(double length, double horizon, int steps, std::vector<double> omegas,
                                    CauchyCoefficients coef = {}) {
  for (double w : omegas) {
    if (!(w > 0.0)) throw InvalidArgument("sideways family: frequencies must be positive");
  }
  CauchyFamily f;
  f.name = "sideways";
  f.length = length;
  f.horizon = horizon;
  f.steps = steps;
  f.params = std::move(omegas);
  f.build = [length, horizon, steps, coef](const GridSpec& grid, double omega) {
    const std::complex<double> sigma = std::sqrt(std::complex<double>(0.0, omega));
    SPDEProblem p;
    p.grid = grid;
    p.time = TimeGrid(horizon, steps);
    if (coef.a != 0.0) p.a = SpaceTimeFunction::constant(coef.a);
    if (coef.b != 0.0) p.b = SpaceTimeFunction::constant(coef.b);
    if (coef.c != 0.0) p.c = SpaceTimeFunction::constant(coef.c);
    const std::complex<double> far = std::exp(sigma * length);
    p.gamma_left = [omega, far](double t) { return (std::exp(std::complex<double>(0.0, omega * t)) * far).real(); };
    p.gamma_right = [omega](double t) { return std::cos(omega * t); };
    p.initial = DiscreteField::sample(grid, [sigma, length](double x) { return std::exp(sigma * (length - x)).real(); });
    return p;
  };
  return f;
}

inline CauchyFamily zero_cauchy_family(double length, double horizon, int steps) {
  CauchyFamily f;
  f.name = "zero";
  f.length = length;
  f.horizon = horizon;
  f.steps = steps;
  f.params = {1.0, 2.0, 3.0};
  f.build = [horizon, steps](const GridSpec& grid, double) {
    SPDEProblem p;
    p.grid = grid;
    p.time = TimeGrid(horizon, steps);
    return p;
  };
  return f;
}

struct HolderOptions {
  double x_left = 0.5;
  double epsilon = 0.1;
  /// d(x) = x(L + δ - x) with δ = delta_fraction·L
  double delta_fraction = 0.1;
  double lambda = 1.0;
  int threads = 1;
};

struct HolderExperiment {
  std::vector<HolderRecord> records;
  std::optional<HolderFit> fit;
  HolderContext context;
};

inline HolderContext holder_context(const GridSpec& grid, const TimeGrid& time, const HolderOptions& o) {
  HolderContext c;
  c.delta = o.delta_fraction * grid.length();
  const auto d = GeneralProfile::quadratic(grid.length(), c.delta);
  c.beta = beta_band(d.sup_norm, o.epsilon).mid();
  c.n_level = minimal_level_count(d, o.x_left, grid.length());
  c.t0 = t0_tiling(o.epsilon, c.n_level, time.horizon());
  for (double t0 : c.t0) {
    const auto ls = level_sets(d, o.lambda, c.beta, o.epsilon, c.n_level, t0, grid, time);
    const auto inc = check_inner_inclusion(ls, o.x_left);
    c.inclusion_checked += inc.checked;
    c.inclusion_violations += inc.violations;
  }
  c.inclusion_holds = c.inclusion_violations == 0;
  return c;
}

/// Runs every family member on the same M paths at one grid and fits κ.
inline HolderExperiment holder_experiment(const CauchyFamily& family, int interior, std::size_t paths,
                                          std::uint64_t master_seed, const HolderOptions& o = {}) {
  if (paths < 1) throw InvalidArgument("holder_experiment: M must be >= 1");
  if (family.params.empty()) throw InvalidArgument("holder_experiment: family has no members");
  const GridSpec grid(family.length, interior);
  const TimeGrid time(family.horizon, family.steps);
  const int first = g0_first_node(grid, o.x_left);
  const auto [lo, hi] = interior_time_window(time, o.epsilon);

  HolderExperiment out;
  out.context = holder_context(grid, time, o);

  std::vector<CompiledProblem> problems;
  for (double p : family.params) problems.push_back(compile(family.build(grid, p)));

  struct PathNorms {
    double m_sq = 0.0, xi_sq = 0.0, eta_sq = 0.0, inner_sq = 0.0;
  };
  const int nn = grid.interior();
  const double h = grid.h();
  const double dt = time.dt();
  const auto per_path = map_paths(time, paths, master_seed, o.threads, [&](std::size_t, const SamplePath& path) {
    std::vector<PathNorms> v(problems.size());
    std::vector<double> xi(static_cast<std::size_t>(time.steps() + 1)), eta(xi.size());
    for (std::size_t k = 0; k < problems.size(); ++k) {
      PathNorms& pn = v[k];
      solve_forward(problems[k], path, [&](int n, std::span<const double> y) {
        xi[static_cast<std::size_t>(n)] = y[static_cast<std::size_t>(nn + 1)];
        eta[static_cast<std::size_t>(n)] = (y[static_cast<std::size_t>(nn + 1)] - y[static_cast<std::size_t>(nn)]) / h;
        if (n < time.steps()) pn.m_sq += dt * h2_energy(y, h, 1, nn);
        if (n >= lo && n < hi) pn.inner_sq += dt * h2_energy(y, h, first, nn);
      });
      const double a = time_h1_norm(xi, dt);
      const double b = time_l2_norm(eta, dt);
      pn.xi_sq = a * a;
      pn.eta_sq = b * b;
    }
    return v;
  });

  for (std::size_t k = 0; k < problems.size(); ++k) {
    HolderRecord r;
    r.h = h;
    r.epsilon = o.epsilon;
    r.x_left = o.x_left;
    r.param = family.params[k];
    r.paths = paths;
    r.beta = out.context.beta;
    r.n_level = out.context.n_level;
    r.t0_count = out.context.t0.size();
    r.inclusion_holds = out.context.inclusion_holds;
    std::vector<double> m(paths), xs(paths), es(paths), in(paths);
    for (std::size_t j = 0; j < paths; ++j) {
      m[j] = per_path[j][k].m_sq;
      xs[j] = per_path[j][k].xi_sq;
      es[j] = per_path[j][k].eta_sq;
      in[j] = per_path[j][k].inner_sq;
    }
    r.m_bound = std::sqrt(expectation(m).mean);
    r.xi_h1 = std::sqrt(expectation(xs).mean);
    r.eta_l2 = std::sqrt(expectation(es).mean);
    r.interior_norm = std::sqrt(expectation(in).mean);
    r.data_norm = r.xi_h1 + r.eta_l2;
    if (paths >= 2 && r.data_norm > 0.0) {
      std::vector<double> lin(paths);
      for (std::size_t j = 0; j < paths; ++j) {
        lin[j] = (r.xi_h1 > 0.0 ? xs[j] / (2.0 * r.xi_h1) : 0.0) + (r.eta_l2 > 0.0 ? es[j] / (2.0 * r.eta_l2) : 0.0);
      }
      r.data_norm_std_error = *expectation(lin).std_error;
    }
    if (!(r.data_norm > 3.0 * r.data_norm_std_error)) {
      r.skipped = true;
      r.skip_reason = "data norm statistically zero";
    }
    out.records.push_back(r);
  }
  out.fit = fit_holder(out.records);
  return out;
}

// ---------------------------------------------------------------------------
// Continuation

/// Path-wise affine map y⁰ ↦ √dt (D⁻y)_{N+1}(t_n), n = 0..K-1, with ξ imposed as
/// Dirichlet data at x_{N+1} and zero data at x₀. y⁰ holds the N interior values.
class CauchyForwardMap {
 public:
  CauchyForwardMap(const SPDEProblem& coefficients, const SamplePath& path, std::span<const double> xi)
      : cp_(compile(strip(coefficients))), path_(path) {
    if (xi.size() != static_cast<std::size_t>(cp_.time.steps() + 1)) {
      throw InvalidArgument("continuation: xi must have K+1 values");
    }
    xi_.assign(xi.begin(), xi.end());
    const auto n = static_cast<std::size_t>(cp_.grid.interior());
    const auto rows = static_cast<std::size_t>(cp_.time.steps());
    offset_ = run(std::vector<double>(n, 0.0), xi_);
    matrix_.assign(rows * n, 0.0);
    const std::vector<double> zero_xi(xi_.size(), 0.0);
    std::vector<double> e(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      e[j] = 1.0;
      const auto col = run(e, zero_xi);
      for (std::size_t r = 0; r < rows; ++r) matrix_[r * n + j] = col[r];
      e[j] = 0.0;
    }
  }

  std::size_t rows() const noexcept { return static_cast<std::size_t>(cp_.time.steps()); }
  std::size_t cols() const noexcept { return static_cast<std::size_t>(cp_.grid.interior()); }
  const std::vector<double>& offset() const noexcept { return offset_; }

  /// Linear part by a forward solve.
  std::vector<double> apply(std::span<const double> u) const {
    return run(std::vector<double>(u.begin(), u.end()), std::vector<double>(xi_.size(), 0.0));
  }

  /// Transpose from the assembled columns.
  std::vector<double> apply_transpose(std::span<const double> v) const {
    std::vector<double> out(cols(), 0.0);
    for (std::size_t r = 0; r < rows(); ++r) {
      for (std::size_t j = 0; j < cols(); ++j) out[j] += matrix_[r * cols() + j] * v[r];
    }
    return out;
  }

  /// Full affine map: flux rows of the solution with initial data u.
  std::vector<double> observe(std::span<const double> u) const {
    return run(std::vector<double>(u.begin(), u.end()), xi_);
  }

  SpaceTimeField solve(std::span<const double> u) const {
    CompiledProblem p = cp_;
    load(p, u, xi_);
    return solve_forward(p, path_);
  }

  const std::vector<double>& matrix() const noexcept { return matrix_; }

 private:
  static SPDEProblem strip(const SPDEProblem& p) {
    SPDEProblem q;
    q.grid = p.grid;
    q.time = p.time;
    q.a = p.a;
    q.b = p.b;
    q.c = p.c;
    return q;
  }

  static void load(CompiledProblem& p, std::span<const double> u, const std::vector<double>& xi) {
    std::fill(p.initial.begin(), p.initial.end(), 0.0);
    std::copy(u.begin(), u.end(), p.initial.begin() + 1);
    p.gamma_right = xi;
    p.initial.back() = xi.front();
  }

  std::vector<double> run(const std::vector<double>& u, const std::vector<double>& xi) const {
    CompiledProblem p = cp_;
    load(p, u, xi);
    const int nn = p.grid.interior();
    const double h = p.grid.h();
    const double sdt = std::sqrt(p.time.dt());
    std::vector<double> out(rows());
    solve_forward(p, path_, [&](int n, std::span<const double> y) {
      if (n < p.time.steps()) {
        out[static_cast<std::size_t>(n)] =
            sdt * (y[static_cast<std::size_t>(nn + 1)] - y[static_cast<std::size_t>(nn)]) / h;
      }
    });
    return out;
  }

  CompiledProblem cp_;
  SamplePath path_;
  std::vector<double> xi_;
  std::vector<double> offset_;
  std::vector<double> matrix_;
};

/// |⟨Au, v⟩ - ⟨u, Aᵀv⟩| / (‖Au‖‖v‖ + ‖u‖‖Aᵀv‖)
inline double adjoint_residual(const CauchyForwardMap& map, std::span<const double> u, std::span<const double> v) {
  const auto au = map.apply(u);
  const auto atv = map.apply_transpose(v);
  const double lhs = std::inner_product(au.begin(), au.end(), v.begin(), 0.0);
  const double rhs = std::inner_product(u.begin(), u.end(), atv.begin(), 0.0);
  auto norm = [](const auto& x) { return std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0)); };
  const double scale = norm(au) * norm(v) + norm(u) * norm(atv);
  return scale > 0.0 ? std::abs(lhs - rhs) / scale : 0.0;
}

struct ContinuationOptions {
  double alpha = 1e-4;
  double x_left = 0.5;
  double epsilon = 0.1;
  /// 0 means 20 N.
  int max_iterations = 0;
  double tolerance = 1e-12;
};

struct ContinuationResult {
  std::vector<double> initial;
  /// Estimated solution on the whole grid; the target region is
  /// nodes first_node..N and levels [first_level, end_level).
  SpaceTimeField field;
  int first_node = 0;
  int first_level = 0;
  int end_level = 0;
  int iterations = 0;
  std::vector<double> residuals;
  double misfit = 0.0;
};

/// min ‖A y⁰ + offset - √dt η‖² + α‖y⁰‖²_{H¹}, solved by CG on the normal
/// equations, with H¹ the discrete norm of y⁰ extended by zero.
inline ContinuationResult continue_solution(const SPDEProblem& coefficients, const SamplePath& path,
                                            std::span<const double> xi, std::span<const double> eta,
                                            const ContinuationOptions& o) {
  if (!(o.alpha > 0.0)) throw InvalidArgument("continue_solution: alpha must be positive");
  if (eta.size() != xi.size()) throw InvalidArgument("continue_solution: xi and eta lengths differ");
  const CauchyForwardMap map(coefficients, path, xi);
  const std::size_t n = map.cols();
  const std::size_t rows = map.rows();
  const double h = coefficients.grid.h();
  const double sdt = std::sqrt(coefficients.time.dt());

  std::vector<double> d(rows);
  for (std::size_t r = 0; r < rows; ++r) d[r] = sdt * eta[r] - map.offset()[r];
  const auto b = map.apply_transpose(d);

  // Normal matrix AᵀA + α G, G = h I + (1/h) tridiag(-1, 2, -1).
  const auto& a = map.matrix();
  std::vector<double> nm(n * n, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      const double ai = a[r * n + i];
      if (ai == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) nm[i * n + j] += ai * a[r * n + j];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    nm[i * n + i] += o.alpha * (h + 2.0 / h);
    if (i + 1 < n) {
      nm[i * n + i + 1] -= o.alpha / h;
      nm[(i + 1) * n + i] -= o.alpha / h;
    }
  }
  auto mul = [&](const std::vector<double>& x) {
    std::vector<double> y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) y[i] += nm[i * n + j] * x[j];
    }
    return y;
  };
  auto dot = [](const std::vector<double>& x, const std::vector<double>& y) {
    return std::inner_product(x.begin(), x.end(), y.begin(), 0.0);
  };

  ContinuationResult res;
  std::vector<double> x(n, 0.0), r = b, p = b;
  const double bnorm = std::sqrt(dot(b, b));
  double rr = dot(r, r);
  res.residuals.push_back(bnorm);
  const int budget = o.max_iterations > 0 ? o.max_iterations : 20 * static_cast<int>(n);
  if (bnorm > 0.0) {
    int it = 0;
    while (std::sqrt(rr) > o.tolerance * bnorm) {
      if (it == budget) {
        throw ConvergenceError("continue_solution: CG did not converge in " + std::to_string(budget) + " iterations",
                               res.residuals);
      }
      const auto ap = mul(p);
      const double step = rr / dot(p, ap);
      for (std::size_t i = 0; i < n; ++i) {
        x[i] += step * p[i];
        r[i] -= step * ap[i];
      }
      const double rr_new = dot(r, r);
      for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + (rr_new / rr) * p[i];
      rr = rr_new;
      res.residuals.push_back(std::sqrt(rr));
      ++it;
    }
    res.iterations = it;
  }
  const auto pred = map.observe(x);
  for (std::size_t k = 0; k < rows; ++k) res.misfit += (pred[k] - sdt * eta[k]) * (pred[k] - sdt * eta[k]);
  res.misfit = std::sqrt(res.misfit);
  res.field = map.solve(x);
  res.initial = std::move(x);
  res.first_node = g0_first_node(coefficients.grid, o.x_left);
  std::tie(res.first_level, res.end_level) = interior_time_window(coefficients.time, o.epsilon);
  return res;
}

/// ‖u - v‖ over G_{0,h} × [ε, T - ε) in the H² sense.
inline double interior_error(const SpaceTimeField& u, const SpaceTimeField& v, double x_left, double epsilon) {
  SpaceTimeField diff = u;
  for (std::size_t k = 0; k < diff.raw().size(); ++k) diff.raw()[k] -= v.raw()[k];
  return std::sqrt(interior_norm_sq(diff, x_left, epsilon));
}

}  // namespace carleman_lab
