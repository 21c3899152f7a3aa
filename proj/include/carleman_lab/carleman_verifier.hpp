#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "carleman_lab/rng.hpp"
#include "carleman_lab/spde_forward.hpp"
#include "carleman_lab/weights.hpp"

namespace carleman_lab {

/// Weight tables in scaled form: theta2 holds θ² e^{-log_scale}, with
/// log_scale = 2s max φ, so every entry lies in (0, 1]. Tests may inject
/// frozen tables directly.
struct CarlemanWeights {
  GridSpec grid;
  TimeGrid time;
  double s = 1.0;
  double lambda = 1.0;
  double log_scale = 0.0;
  SpaceTimeField phi;
  SpaceTimeField theta2;

  static CarlemanWeights from_spec(const WeightSpec& w, const GridSpec& grid, const TimeGrid& time) {
    const WeightFunction wf(w);
    wf.validate(grid, time);
    CarlemanWeights cw;
    cw.grid = grid;
    cw.time = time;
    cw.s = w.s;
    cw.lambda = w.lambda;
    cw.phi = SpaceTimeField(grid, time);
    cw.theta2 = SpaceTimeField(grid, time);
    double phi_ref = 0.0;
    double psi_max = -std::numeric_limits<double>::infinity();
    for (int n = 0; n <= time.steps(); ++n) {
      for (int i = 0; i <= grid.interior() + 1; ++i) {
        cw.phi.at(n, i) = wf.phi(grid.x(i), time.t(n));
        phi_ref = std::max(phi_ref, cw.phi.at(n, i));
        psi_max = std::max(psi_max, wf.psi(grid.x(i), time.t(n)));
      }
    }
    // Same bound as max_admissible_s: e^{s phi} must stay representable.
    if (w.s * phi_ref >= std::log(DBL_MAX)) {
      throw RangeError("carleman weights: e^{s phi} overflows (s = " + std::to_string(w.s) +
                           ", lambda = " + std::to_string(w.lambda) + ", max psi = " + std::to_string(psi_max) +
                           "); shrink s below " + std::to_string(std::log(DBL_MAX) / phi_ref),
                       w.s, w.lambda, psi_max);
    }
    cw.log_scale = 2.0 * w.s * phi_ref;
    for (std::size_t k = 0; k < cw.phi.raw().size(); ++k) {
      cw.theta2.raw()[k] = std::exp(2.0 * w.s * (cw.phi.raw()[k] - phi_ref));
    }
    return cw;
  }
};

/// Per-path weighted integrals (scaled by e^{-log_scale}).
struct PathTerms {
  /// ∫(1/(sφ))θ²|Δy|², ∫_{Q⁻} sλ²φθ²|D⁺y|², ∫ s³λ⁴φ³θ²|y|², ∫_{Q⁻} sλ²φθ²|g|²
  std::array<double, 4> lhs{};
  /// ∫θ²|f|², ∫_{Q⁻} sφθ²|D⁺g|², ∫ sλφθ²(x_{N+1})|(D⁻y)_{N+1}|²
  std::array<double, 3> rhs{};
  /// ‖y(T)‖²_{L²(G_h)} (unweighted)
  double terminal_sq = 0.0;
  /// ∫_{G_h} θ²(T)|y(T)|², scaled
  double terminal_weighted = 0.0;
  /// ‖γ₁‖²_{H¹(0,T)} + ‖γ₂‖²_{H¹(0,T)}
  double gamma_h1_sq = 0.0;
};

/// Streams the levels of one solution into PathTerms. Time integrals use the
/// left-endpoint rule over n = 0..K-1.
class CarlemanAccumulator {
 public:
  CarlemanAccumulator(const CarlemanWeights& w, const SpaceTimeFunction::Compiled& f,
                      const SpaceTimeFunction::Compiled& g)
      : w_(w), f_(f), g_(g) {}

  void operator()(int n, std::span<const double> y) {
    const int nn = w_.grid.interior();
    const double h = w_.grid.h();
    const double dt = w_.time.dt();
    const double s = w_.s;
    const double lam = w_.lambda;
    const auto phi = w_.phi.level(n);
    const auto th = w_.theta2.level(n);
    if (n == w_.time.steps()) {
      for (int i = 1; i <= nn; ++i) {
        const auto k = static_cast<std::size_t>(i);
        t_.terminal_sq += h * y[k] * y[k];
        t_.terminal_weighted += h * th[k] * y[k] * y[k];
      }
      return;
    }
    const double c = h * dt;
    for (int i = 1; i <= nn; ++i) {
      const auto k = static_cast<std::size_t>(i);
      const double lap = (y[k + 1] - 2.0 * y[k] + y[k - 1]) / (h * h);
      t_.lhs[0] += c * th[k] / (s * phi[k]) * lap * lap;
      t_.lhs[2] += c * s * s * s * lam * lam * lam * lam * phi[k] * phi[k] * phi[k] * th[k] * y[k] * y[k];
      if (!f_.zero) {
        const double fv = f_.at(n)[k];
        t_.rhs[0] += c * th[k] * fv * fv;
      }
    }
    for (int i = 0; i <= nn; ++i) {
      const auto k = static_cast<std::size_t>(i);
      const double dp = (y[k + 1] - y[k]) / h;
      t_.lhs[1] += c * s * lam * lam * phi[k] * th[k] * dp * dp;
      if (!g_.zero) {
        const auto gl = g_.at(n);
        const double dg = (gl[k + 1] - gl[k]) / h;
        t_.lhs[3] += c * s * lam * lam * phi[k] * th[k] * gl[k] * gl[k];
        t_.rhs[1] += c * s * phi[k] * th[k] * dg * dg;
      }
    }
    const auto b = static_cast<std::size_t>(nn + 1);
    const double flux = (y[b] - y[b - 1]) / h;
    t_.rhs[2] += dt * s * lam * phi[b] * th[b] * flux * flux;
  }

  void set_boundary(std::span<const double> gamma_left, std::span<const double> gamma_right) {
    const double a = time_h1_norm(gamma_left, w_.time.dt());
    const double b = time_h1_norm(gamma_right, w_.time.dt());
    t_.gamma_h1_sq = a * a + b * b;
  }

  const PathTerms& terms() const noexcept { return t_; }

 private:
  const CarlemanWeights& w_;
  const SpaceTimeFunction::Compiled& f_;
  const SpaceTimeFunction::Compiled& g_;
  PathTerms t_;
};

inline void require_same_grids(const CarlemanWeights& w, const GridSpec& grid, const TimeGrid& time) {
  if (!(w.grid == grid) || !(w.time == time)) {
    throw InvalidArgument("weights and solutions must share the grid and time grid");
  }
}

inline PathTerms path_terms(const CarlemanWeights& w, const SpaceTimeField& y, const SpaceTimeFunction::Compiled& f,
                            const SpaceTimeFunction::Compiled& g) {
  require_same_grids(w, y.grid(), y.time());
  CarlemanAccumulator acc(w, f, g);
  for (int n = 0; n <= y.time().steps(); ++n) acc(n, y.level(n));
  return acc.terms();
}

/// The four left-side integrals over the ensemble, scaled by e^{-log_scale}.
inline std::array<Estimate, 4> weighted_lhs(const Ensemble& e, const CarlemanWeights& w, const SpaceTimeFunction& g) {
  require_same_grids(w, e.grid, e.time);
  const auto gc = g.compile(e.grid, e.time);
  const SpaceTimeFunction::Compiled none;
  std::array<std::vector<double>, 4> v;
  for (const auto& y : e.solutions) {
    const auto t = path_terms(w, y, none, gc);
    for (std::size_t j = 0; j < 4; ++j) v[j].push_back(t.lhs[j]);
  }
  std::array<Estimate, 4> out;
  for (std::size_t j = 0; j < 4; ++j) out[j] = expectation(v[j]);
  return out;
}

struct RhsOptions {
  double c_lambda = 1.0;
  /// Replace the c_λ terminal term by s² ∫θ²(T)|y(T)|².
  bool suppressed_terminal = false;
  std::function<double(double)> gamma_left;
  std::function<double(double)> gamma_right;
};

inline std::array<double, 5> rhs_from_terms(const PathTerms& t, const CarlemanWeights& w, const RhsOptions& o) {
  const double s = w.s;
  const double growth = std::exp(o.c_lambda * s - w.log_scale);
  std::array<double, 5> r{t.rhs[0], t.rhs[1], t.rhs[2], 0.0, 0.0};
  r[3] = o.suppressed_terminal ? s * s * t.terminal_weighted : s * s * growth * t.terminal_sq;
  r[4] = s * s * s * growth * t.gamma_h1_sq;
  return r;
}

/// The right-side integrals without the unknown constants, scaled by
/// e^{-log_scale}: θ²|f|², sφθ²|D⁺g|², boundary flux, terminal, boundary data.
inline std::array<Estimate, 5> weighted_rhs(const Ensemble& e, const CarlemanWeights& w, const SpaceTimeFunction& f,
                                            const SpaceTimeFunction& g, const RhsOptions& o = {}) {
  require_same_grids(w, e.grid, e.time);
  const auto fc = f.compile(e.grid, e.time);
  const auto gc = g.compile(e.grid, e.time);
  std::vector<double> gl(static_cast<std::size_t>(e.time.steps() + 1), 0.0), gr = gl;
  for (int n = 0; n <= e.time.steps(); ++n) {
    if (o.gamma_left) gl[static_cast<std::size_t>(n)] = o.gamma_left(e.time.t(n));
    if (o.gamma_right) gr[static_cast<std::size_t>(n)] = o.gamma_right(e.time.t(n));
  }
  std::array<std::vector<double>, 5> v;
  for (const auto& y : e.solutions) {
    CarlemanAccumulator acc(w, fc, gc);
    for (int n = 0; n <= y.time().steps(); ++n) acc(n, y.level(n));
    acc.set_boundary(gl, gr);
    const auto r = rhs_from_terms(acc.terms(), w, o);
    for (std::size_t j = 0; j < 5; ++j) v[j].push_back(r[j]);
  }
  std::array<Estimate, 5> out;
  for (std::size_t j = 0; j < 5; ++j) out[j] = expectation(v[j]);
  return out;
}

struct CarlemanReport {
  double s = 0.0;
  double lambda = 0.0;
  double h = 0.0;
  double beta = 0.0;
  double c_lambda = 1.0;
  bool suppressed_terminal = false;
  std::size_t paths = 0;
  /// Every term below is the expectation times e^{-log_scale}.
  double log_scale = 0.0;
  std::array<Estimate, 4> lhs{};
  std::array<Estimate, 5> rhs{};
  double lhs_sum = 0.0;
  double rhs_sum = 0.0;
  /// lhs_sum / rhs_sum; empty when both vanish.
  std::optional<double> ratio;
  /// Delta-method standard error of the ratio (paths share each estimate).
  std::optional<double> ratio_std_error;
  bool degenerate = false;
};

inline CarlemanReport make_report(const std::vector<PathTerms>& paths, const CarlemanWeights& w, const RhsOptions& o) {
  CarlemanReport rep;
  rep.s = w.s;
  rep.lambda = w.lambda;
  rep.h = w.grid.h();
  rep.c_lambda = o.c_lambda;
  rep.suppressed_terminal = o.suppressed_terminal;
  rep.paths = paths.size();
  rep.log_scale = w.log_scale;
  std::array<std::vector<double>, 4> lv;
  std::array<std::vector<double>, 5> rv;
  std::vector<double> lsum, rsum;
  for (const auto& t : paths) {
    const auto r = rhs_from_terms(t, w, o);
    double a = 0.0, b = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      lv[j].push_back(t.lhs[j]);
      a += t.lhs[j];
    }
    for (std::size_t j = 0; j < 5; ++j) {
      rv[j].push_back(r[j]);
      b += r[j];
    }
    lsum.push_back(a);
    rsum.push_back(b);
  }
  for (std::size_t j = 0; j < 4; ++j) rep.lhs[j] = expectation(lv[j]);
  for (std::size_t j = 0; j < 5; ++j) rep.rhs[j] = expectation(rv[j]);
  rep.lhs_sum = expectation(lsum).mean;
  rep.rhs_sum = expectation(rsum).mean;
  if (rep.lhs_sum == 0.0 && rep.rhs_sum == 0.0) {
    rep.degenerate = true;
    return rep;
  }
  if (rep.rhs_sum == 0.0) {
    rep.ratio = std::numeric_limits<double>::infinity();
    return rep;
  }
  const double ratio = rep.lhs_sum / rep.rhs_sum;
  rep.ratio = ratio;
  if (paths.size() >= 2) {
    std::vector<double> lin(paths.size());
    for (std::size_t m = 0; m < paths.size(); ++m) lin[m] = (lsum[m] - ratio * rsum[m]) / rep.rhs_sum;
    rep.ratio_std_error = expectation(lin).std_error;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Problem families and sweeps

/// Builds the problem on a given grid; the sweep requires y(0) = 0 and
/// homogeneous boundary data.
struct CarlemanFamily {
  std::string name;
  double length = 0.5;
  double horizon = 1.0;
  int steps = 1024;
  std::function<SPDEProblem(const GridSpec&, const TimeGrid&)> build;
};

inline CarlemanFamily zero_family(double length, double horizon, int steps) {
  return {"zero", length, horizon, steps, [](const GridSpec& g, const TimeGrid& t) {
            SPDEProblem p;
            p.grid = g;
            p.time = t;
            return p;
          }};
}

/// dy - Δy dt = f dt + g dB with y(0) = 0 and zero boundary data, where
///   f = Σ_k a_k sin(kπx/L) cos(ω_k t + α_k),  g = Σ_k b_k sin(kπx/L) (1 + ½ sin(ν_k t + β_k)).
/// Coefficients are drawn once from `family_seed`, so every grid sees the
/// same continuous f, g.
inline CarlemanFamily driven_noise_family(double length, double horizon, int steps, int modes,
                                          std::uint64_t family_seed) {
  if (modes < 1) throw InvalidArgument("driven noise family: need at least one mode");
  struct Mode {
    double a, omega, alpha, b, nu, beta;
  };
  std::vector<Mode> ms;
  const CounterStream rng(family_seed);
  std::uint64_t c = 0;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (int k = 1; k <= modes; ++k) {
    Mode m{};
    m.a = rng.normal(c++) / k;
    m.omega = two_pi * (0.5 + 2.0 * rng.uniform(c++));
    m.alpha = two_pi * rng.uniform(c++);
    m.b = rng.normal(c++) / k;
    m.nu = two_pi * (0.5 + 2.0 * rng.uniform(c++));
    m.beta = two_pi * rng.uniform(c++);
    ms.push_back(m);
  }
  auto build = [ms, length](const GridSpec& g, const TimeGrid& t) {
    SPDEProblem p;
    p.grid = g;
    p.time = t;
    p.f = SpaceTimeFunction::space_time([ms, length](double x, double tt) {
      double v = 0.0;
      for (std::size_t k = 0; k < ms.size(); ++k) {
        v += ms[k].a * std::sin((k + 1.0) * std::numbers::pi * x / length) * std::cos(ms[k].omega * tt + ms[k].alpha);
      }
      return v;
    });
    p.g = SpaceTimeFunction::space_time([ms, length](double x, double tt) {
      double v = 0.0;
      for (std::size_t k = 0; k < ms.size(); ++k) {
        v += ms[k].b * std::sin((k + 1.0) * std::numbers::pi * x / length) *
             (1.0 + 0.5 * std::sin(ms[k].nu * tt + ms[k].beta));
      }
      return v;
    });
    return p;
  };
  return {"driven-noise", length, horizon, steps, build};
}

struct SweepOptions {
  double x_star = -0.05;
  double t0 = 0.5;
  /// Used when suppression is off.
  double beta = 1.0;
  /// Choose β per cell so that θ(·,T) ≤ suppression_ratio · max θ.
  bool suppress_terminal = true;
  double suppression_ratio = 1e-8;
  std::vector<double> c_lambda_grid{1.0};
  int threads = 1;
};

struct SweepCell {
  int interior = 0;
  double h = 0.0;
  double s = 0.0;
  double lambda = 0.0;
  double c_lambda = 1.0;
  /// Empty when skipped.
  std::optional<CarlemanReport> report;
  std::string skip_reason;
  /// Ratio exceeded the running maximum (same λ, c_λ) by more than 3σ.
  bool flagged = false;
};

struct PerHMax {
  double lambda = 0.0;
  double c_lambda = 1.0;
  double h = 0.0;
  /// Empty when no admissible non-degenerate cell exists at this h.
  std::optional<double> max_ratio;
  double s_at_max = 0.0;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::vector<PerHMax> per_h_max;

  /// max/min of the per-h maxima for one (λ, c_λ); empty if any h lacks data.
  std::optional<double> spread(double lambda, double c_lambda) const {
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    bool any = false;
    for (const auto& p : per_h_max) {
      if (p.lambda != lambda || p.c_lambda != c_lambda) continue;
      if (!p.max_ratio) return std::nullopt;
      any = true;
      lo = std::min(lo, *p.max_ratio);
      hi = std::max(hi, *p.max_ratio);
    }
    if (!any || !(lo > 0.0)) return std::nullopt;
    return hi / lo;
  }
};

/// Sweeps (h, λ, s, c_λ) over one family. Each path is solved once per h and
/// every cell at that h is accumulated from the same solve, so all cells share
/// one ensemble. Cells with s > √(eps_cfg/h), or where terminal suppression is
/// infeasible, are recorded as skipped.
inline SweepResult carleman_sweep(const CarlemanFamily& family, const std::vector<double>& s_grid,
                                  const std::vector<double>& lambda_grid, const std::vector<int>& interior_grid,
                                  std::size_t paths, double eps_cfg, std::uint64_t master_seed,
                                  const SweepOptions& opt = {}) {
  if (paths < 1) throw InvalidArgument("carleman_sweep: M must be >= 1");
  if (!(eps_cfg > 0.0)) throw InvalidArgument("carleman_sweep: eps_cfg must be positive");
  SweepResult out;
  const TimeGrid time(family.horizon, family.steps);
  for (int nint : interior_grid) {
    const GridSpec grid(family.length, nint);
    const double h = grid.h();
    const SPDEProblem problem = family.build(grid, time);
    const CompiledProblem cp = compile(problem);
    for (double v : cp.initial) {
      if (v != 0.0) throw InvalidArgument("carleman_sweep: family must have y(0) = 0");
    }
    for (std::size_t n = 0; n < cp.gamma_left.size(); ++n) {
      if (cp.gamma_left[n] != 0.0 || cp.gamma_right[n] != 0.0) {
        throw InvalidArgument("carleman_sweep: family must have homogeneous boundary data");
      }
    }

    struct Job {
      std::size_t first_cell;
      double s, lambda, beta;
      CarlemanWeights weights;
    };
    std::vector<Job> jobs;
    for (double lambda : lambda_grid) {
      for (double s : s_grid) {
        const std::size_t first = out.cells.size();
        std::string skip;
        double beta = opt.beta;
        const double s_max = max_admissible_s(WeightSpec{RegularProfile{opt.x_star}, opt.t0, 0.0, lambda, s}, grid, time);
        if (s > std::sqrt(eps_cfg / h)) {
          skip = "s exceeds sqrt(eps_cfg/h) = " + std::to_string(std::sqrt(eps_cfg / h));
        } else if (s >= s_max) {
          skip = "s exceeds the overflow-safe bound " + std::to_string(s_max);
        } else if (opt.suppress_terminal) {
          WeightSpec w{RegularProfile{opt.x_star}, opt.t0, 0.0, lambda, s};
          const auto b = suppression_beta(w, family.length, family.horizon, opt.suppression_ratio);
          if (!b) skip = "terminal suppression infeasible (s*max phi too small)";
          else beta = *b;
        }
        for (double cl : opt.c_lambda_grid) {
          SweepCell cell;
          cell.interior = nint;
          cell.h = h;
          cell.s = s;
          cell.lambda = lambda;
          cell.c_lambda = cl;
          cell.skip_reason = skip;
          out.cells.push_back(cell);
        }
        if (skip.empty()) {
          const WeightSpec w{RegularProfile{opt.x_star}, opt.t0, beta, lambda, s};
          jobs.push_back({first, s, lambda, beta, CarlemanWeights::from_spec(w, grid, time)});
        }
      }
    }

    auto per_path = map_paths(time, paths, master_seed, opt.threads, [&](std::size_t, const SamplePath& path) {
      std::vector<CarlemanAccumulator> accs;
      accs.reserve(jobs.size());
      for (const auto& j : jobs) accs.emplace_back(j.weights, cp.f, cp.g);
      solve_forward(cp, path, [&](int n, std::span<const double> lv) {
        for (auto& a : accs) a(n, lv);
      });
      std::vector<PathTerms> t;
      t.reserve(accs.size());
      for (const auto& a : accs) t.push_back(a.terms());
      return t;
    });

    for (std::size_t j = 0; j < jobs.size(); ++j) {
      std::vector<PathTerms> terms(paths);
      for (std::size_t m = 0; m < paths; ++m) terms[m] = per_path[m][j];
      for (std::size_t c = 0; c < opt.c_lambda_grid.size(); ++c) {
        RhsOptions ro;
        ro.c_lambda = opt.c_lambda_grid[c];
        ro.suppressed_terminal = opt.suppress_terminal;
        auto rep = make_report(terms, jobs[j].weights, ro);
        rep.beta = jobs[j].beta;
        out.cells[jobs[j].first_cell + c].report = rep;
      }
    }
  }

  // Per-h maxima per (λ, c_λ). A cell is flagged when its ratio exceeds the
  // running maximum over coarser grids by more than its 3σ band.
  for (double lambda : lambda_grid) {
    for (double cl : opt.c_lambda_grid) {
      std::optional<double> running;
      for (int nint : interior_grid) {
        PerHMax ph;
        ph.lambda = lambda;
        ph.c_lambda = cl;
        ph.h = GridSpec(family.length, nint).h();
        for (auto& cell : out.cells) {
          if (cell.interior != nint || cell.lambda != lambda || cell.c_lambda != cl || !cell.report) continue;
          const auto& r = *cell.report;
          if (!r.ratio) continue;
          const double band = 3.0 * r.ratio_std_error.value_or(0.0);
          if (running && *r.ratio > *running + band) cell.flagged = true;
          if (!ph.max_ratio || *r.ratio > *ph.max_ratio) {
            ph.max_ratio = *r.ratio;
            ph.s_at_max = r.s;
          }
        }
        if (ph.max_ratio) running = std::max(running.value_or(*ph.max_ratio), *ph.max_ratio);
        out.per_h_max.push_back(ph);
      }
    }
  }
  return out;
}

}  // namespace carleman_lab
