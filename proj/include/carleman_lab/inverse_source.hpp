#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "carleman_lab/rng.hpp"
#include "carleman_lab/spde_forward.hpp"

namespace carleman_lab {

/// g = r(t) R(x) with min |R_i| = R0 > 0 and max |(D⁺R)_i| = R1 over
/// i = 0..N (R0 taken over all of Ḡ_h).
struct SeparableSource {
  std::function<double(double)> r;
  DiscreteField R;
  double R0 = 0.0;
  double R1 = 0.0;

  /// Bound R1/R0 on |D⁺g̃| / |g̃| for any pair sharing R.
  double constant() const { return R1 / R0; }

  SpaceTimeField table(const TimeGrid& time) const {
    SpaceTimeField g(R.grid(), time);
    for (int n = 0; n <= time.steps(); ++n) {
      const double rn = r(time.t(n));
      for (int i = 0; i <= R.grid().interior() + 1; ++i) g.at(n, i) = rn * R[i];
    }
    return g;
  }
};

inline SeparableSource make_separable_source(std::function<double(double)> r, DiscreteField R) {
  if (!r) throw InvalidArgument("make_separable_source: empty time profile");
  SeparableSource s;
  s.R0 = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= R.grid().interior() + 1; ++i) s.R0 = std::min(s.R0, std::abs(R[i]));
  if (!(s.R0 > 0.0)) throw InvalidArgument("make_separable_source: R vanishes at a node (R0 = 0)");
  const auto d = diff_plus(R);
  s.R1 = d.max_abs();
  s.r = std::move(r);
  s.R = std::move(R);
  return s;
}

struct DifferenceDominance {
  bool holds = true;
  /// max |D⁺g̃_i| / |g̃_i| over points with g̃_i ≠ 0.
  double best_constant = 0.0;
  /// (time level, node) where g̃_i = 0 but (D⁺g̃)_i ≠ 0.
  std::vector<std::pair<int, int>> violations;
};

/// Scans |D⁺(g¹ - g²)_i| ≤ C |(g¹ - g²)_i| over i = 0..N and every level.
inline DifferenceDominance check_difference_dominance(const SpaceTimeField& g1, const SpaceTimeField& g2) {
  if (!(g1.grid() == g2.grid()) || !(g1.time() == g2.time())) {
    throw InvalidArgument("check_difference_dominance: sources live on different grids");
  }
  DifferenceDominance out;
  const double h = g1.grid().h();
  const int nn = g1.grid().interior();
  for (int n = 0; n <= g1.time().steps(); ++n) {
    for (int i = 0; i <= nn; ++i) {
      const double d0 = g1.at(n, i) - g2.at(n, i);
      const double d1 = g1.at(n, i + 1) - g2.at(n, i + 1);
      const double num = std::abs(d1 - d0) / h;
      if (d0 == 0.0) {
        if (num != 0.0) {
          out.holds = false;
          out.violations.emplace_back(n, i);
        }
        continue;
      }
      out.best_constant = std::max(out.best_constant, num / std::abs(d0));
    }
  }
  return out;
}

struct StabilityRecord {
  double h = 0.0;
  std::size_t paths = 0;
  /// ‖g̃‖_{L²(0,T;L²(G_h))}
  double source_gap = 0.0;
  /// ‖(D⁻ỹ)_{N+1}‖_{L²(Ω;L²(0,T))}
  double flux_gap = 0.0;
  /// ‖ỹ(T)‖_{L²(Ω;L²(G_h))}
  double terminal_gap = 0.0;
  double data_gap = 0.0;
  double data_gap_std_error = 0.0;
  /// source_gap / data_gap; set only when data_gap > 3 std errors.
  std::optional<double> ratio;
  std::optional<double> ratio_std_error;
  double dominance_constant = 0.0;
  bool dominance_holds = true;
  /// source_gap = data_gap = 0
  bool degenerate = false;
  /// data_gap indistinguishable from 0 while source_gap > 0
  bool violation_candidate = false;
};

/// Solves the base problem with sources g1 and g2 on identical Brownian paths
/// and compares the source gap with the observation gaps.
inline StabilityRecord stability_experiment(const SPDEProblem& base, const SpaceTimeFunction& g1,
                                            const SpaceTimeFunction& g2, std::size_t paths,
                                            std::uint64_t master_seed, int threads = 1) {
  if (paths < 1) throw InvalidArgument("stability_experiment: M must be >= 1");
  SPDEProblem p1 = base;
  SPDEProblem p2 = base;
  p1.g = g1;
  p2.g = g2;
  const CompiledProblem c1 = compile(p1);
  const CompiledProblem c2 = compile(p2);
  const GridSpec& grid = base.grid;
  const TimeGrid& time = base.time;
  const double h = grid.h();
  const double dt = time.dt();
  const int nn = grid.interior();

  StabilityRecord rec;
  rec.h = h;
  rec.paths = paths;

  SpaceTimeField t1(grid, time), t2(grid, time);
  for (int n = 0; n <= time.steps(); ++n) {
    for (int i = 0; i <= nn + 1; ++i) {
      t1.at(n, i) = c1.g.at(n, i);
      t2.at(n, i) = c2.g.at(n, i);
    }
  }
  const auto dom = check_difference_dominance(t1, t2);
  rec.dominance_holds = dom.holds;
  rec.dominance_constant = dom.best_constant;
  double src = 0.0;
  for (int n = 0; n < time.steps(); ++n) {
    for (int i = 1; i <= nn; ++i) {
      const double d = t1.at(n, i) - t2.at(n, i);
      src += dt * h * d * d;
    }
  }
  rec.source_gap = std::sqrt(src);

  struct Gaps {
    double flux_sq = 0.0;
    double terminal_sq = 0.0;
  };
  const auto gaps = map_paths(time, paths, master_seed, threads, [&](std::size_t, const SamplePath& path) {
    const auto y1 = solve_forward(c1, path);
    const auto y2 = solve_forward(c2, path);
    Gaps g;
    for (int n = 0; n < time.steps(); ++n) {
      const double f1 = (y1.at(n, nn + 1) - y1.at(n, nn)) / h;
      const double f2 = (y2.at(n, nn + 1) - y2.at(n, nn)) / h;
      g.flux_sq += dt * (f1 - f2) * (f1 - f2);
    }
    for (int i = 1; i <= nn; ++i) {
      const double d = y1.at(time.steps(), i) - y2.at(time.steps(), i);
      g.terminal_sq += h * d * d;
    }
    return g;
  });

  std::vector<double> fl(paths), te(paths);
  for (std::size_t m = 0; m < paths; ++m) {
    fl[m] = gaps[m].flux_sq;
    te[m] = gaps[m].terminal_sq;
  }
  const double mf = expectation(fl).mean;
  const double mt = expectation(te).mean;
  rec.flux_gap = std::sqrt(mf);
  rec.terminal_gap = std::sqrt(mt);
  rec.data_gap = rec.flux_gap + rec.terminal_gap;
  if (paths >= 2 && rec.data_gap > 0.0) {
    // Delta method on √E[F] + √E[T].
    std::vector<double> lin(paths);
    for (std::size_t m = 0; m < paths; ++m) {
      lin[m] = (mf > 0.0 ? fl[m] / (2.0 * rec.flux_gap) : 0.0) + (mt > 0.0 ? te[m] / (2.0 * rec.terminal_gap) : 0.0);
    }
    rec.data_gap_std_error = *expectation(lin).std_error;
  }

  if (rec.source_gap == 0.0 && rec.data_gap == 0.0) {
    rec.degenerate = true;
    return rec;
  }
  if (rec.data_gap > 3.0 * rec.data_gap_std_error) {
    rec.ratio = rec.source_gap / rec.data_gap;
    rec.ratio_std_error = rec.source_gap * rec.data_gap_std_error / (rec.data_gap * rec.data_gap);
  } else if (rec.source_gap > 0.0) {
    rec.violation_candidate = true;
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Default separable family and the uniformity sweep

/// Equation data shared by every pair: constant a, b and y⁰(x) = sin(πx/L).
struct InverseSourceBase {
  double length = 1.0;
  double horizon = 1.0;
  int steps = 1024;
  double a = 0.5;
  double b = 0.2;

  SPDEProblem problem(const GridSpec& grid) const {
    SPDEProblem p;
    p.grid = grid;
    p.time = TimeGrid(horizon, steps);
    p.a = SpaceTimeFunction::constant(a);
    p.b = SpaceTimeFunction::constant(b);
    const double ell = length;
    p.initial = DiscreteField::sample(grid, [ell](double x) { return std::sin(std::numbers::pi * x / ell); });
    return p;
  }
};

/// A pair g⁽ʲ⁾ = r⁽ʲ⁾(t) R(x) with R = 1.5 + u₁ sin(πx/L)/2 + u₂ cos(2πx/L)/2,
/// |u| ≤ 1, so R ≥ 0.5. r⁽ʲ⁾ are random cosine series in t.
struct SourcePair {
  std::function<double(double)> r1;
  std::function<double(double)> r2;
  std::function<double(double)> R;
};

inline std::vector<SourcePair> random_separable_pairs(std::size_t count, double length, double horizon,
                                                      std::uint64_t family_seed) {
  std::vector<SourcePair> out;
  const CounterStream rng(family_seed);
  std::uint64_t c = 0;
  constexpr int modes = 4;
  for (std::size_t p = 0; p < count; ++p) {
    std::vector<double> a1(modes), a2(modes);
    for (int k = 0; k < modes; ++k) {
      a1[static_cast<std::size_t>(k)] = rng.normal(c++) / (k + 1.0);
      a2[static_cast<std::size_t>(k)] = rng.normal(c++) / (k + 1.0);
    }
    const double u1 = 2.0 * rng.uniform(c++) - 1.0;
    const double u2 = 2.0 * rng.uniform(c++) - 1.0;
    auto series = [horizon](std::vector<double> coef) {
      return [coef = std::move(coef), horizon](double t) {
        double v = 0.0;
        for (std::size_t k = 0; k < coef.size(); ++k) v += coef[k] * std::cos(k * std::numbers::pi * t / horizon);
        return v;
      };
    };
    SourcePair sp;
    sp.r1 = series(a1);
    sp.r2 = series(a2);
    sp.R = [u1, u2, length](double x) {
      return 1.5 + 0.5 * u1 * std::sin(std::numbers::pi * x / length) +
             0.5 * u2 * std::cos(2.0 * std::numbers::pi * x / length);
    };
    out.push_back(std::move(sp));
  }
  return out;
}

struct UniformityRow {
  int interior = 0;
  double h = 0.0;
  std::size_t pair = 0;
  StabilityRecord record;
};

struct UniformityResult {
  std::vector<UniformityRow> rows;
  /// Per h: max ratio over pairs and its std error; empty when no pair has a ratio.
  std::vector<std::pair<double, std::optional<std::pair<double, double>>>> per_h_max;
  /// "uniform", "non-uniform", "inconclusive", "insufficient data"; empty for a single h.
  std::optional<std::string> verdict;
  std::optional<double> spread;
};

inline UniformityResult uniformity_sweep(const InverseSourceBase& base, const std::vector<int>& interior_grid,
                                         const std::vector<SourcePair>& pairs, std::size_t paths,
                                         std::uint64_t master_seed, int threads = 1, double band = 2.0) {
  UniformityResult out;
  for (int nint : interior_grid) {
    const GridSpec grid(base.length, nint);
    const SPDEProblem p = base.problem(grid);
    std::optional<std::pair<double, double>> best;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const auto R = DiscreteField::sample(grid, pairs[k].R);
      const auto s1 = make_separable_source(pairs[k].r1, R);
      const auto s2 = make_separable_source(pairs[k].r2, R);
      auto rec = stability_experiment(p, SpaceTimeFunction::table(s1.table(p.time)),
                                      SpaceTimeFunction::table(s2.table(p.time)), paths, master_seed, threads);
      if (rec.ratio && (!best || *rec.ratio > best->first)) best = {{*rec.ratio, rec.ratio_std_error.value_or(0.0)}};
      out.rows.push_back({nint, grid.h(), k, rec});
    }
    out.per_h_max.emplace_back(grid.h(), best);
  }
  if (out.per_h_max.size() < 2) return out;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0, lo_se = 0.0, hi_se = 0.0;
  for (const auto& [h, v] : out.per_h_max) {
    if (!v) {
      out.verdict = "insufficient data";
      return out;
    }
    if (v->first < lo) {
      lo = v->first;
      lo_se = v->second;
    }
    if (v->first > hi) {
      hi = v->first;
      hi_se = v->second;
    }
  }
  out.spread = hi / lo;
  if (hi / lo <= band) out.verdict = "uniform";
  else if ((hi - 3.0 * hi_se) / (lo + 3.0 * lo_se) > band) out.verdict = "non-uniform";
  else out.verdict = "inconclusive";
  return out;
}

// ---------------------------------------------------------------------------
// Ridge reconstruction of r(t) for g = r(t)R with known R (plumbing, not part
// of the stability experiment).

struct TimeProfileEstimate {
  /// r at t_0..t_{K-1}
  std::vector<double> r;
};

/// Recovers r from flux and terminal observations of M paths by
///   min Σ_m ‖A_m r - d_m‖² + α‖r‖²,
/// where d_m is the data minus the source-free response. Requires steady a, b
/// and c = f = 0, so the discrete propagator is time invariant.
inline TimeProfileEstimate reconstruct_time_profile(const SPDEProblem& base, const DiscreteField& R,
                                                    const std::vector<SamplePath>& paths,
                                                    const std::vector<std::vector<double>>& flux_data,
                                                    const std::vector<std::vector<double>>& terminal_data,
                                                    double alpha) {
  if (!(alpha > 0.0)) throw InvalidArgument("reconstruct_time_profile: alpha must be positive");
  if (paths.size() != flux_data.size() || paths.size() != terminal_data.size() || paths.empty()) {
    throw InvalidArgument("reconstruct_time_profile: one data set per path required");
  }
  const CompiledProblem cp = compile(base);
  if (!cp.a.steady || !cp.b.steady || !cp.c.zero || !cp.f.zero) {
    throw InvalidArgument("reconstruct_time_profile: needs time-independent a, b and c = f = 0");
  }
  const GridSpec& grid = base.grid;
  const TimeGrid& time = base.time;
  const int nn = grid.interior();
  const int kk = time.steps();
  const double h = grid.h();

  // Source-free response.
  const auto free = solve_forward(cp, zero_path(time));
  // z^j: response j steps after a unit impulse R at one step.
  SPDEProblem imp = base;
  imp.initial.reset();
  imp.g = SpaceTimeFunction();
  const CompiledProblem ci = compile(imp);
  const ImplicitDiffusion step(nn, time.dt() / (h * h));
  std::vector<std::vector<double>> z(static_cast<std::size_t>(kk + 1), std::vector<double>(grid.node_count(), 0.0));
  {
    std::vector<double> v(grid.node_count(), 0.0);
    for (int i = 1; i <= nn; ++i) v[static_cast<std::size_t>(i)] = R[i];
    step.solve(std::span<double>(v).subspan(1, static_cast<std::size_t>(nn)));
    z[1] = v;
    for (int j = 1; j < kk; ++j) {
      std::vector<double> w(grid.node_count(), 0.0);
      for (int i = 1; i <= nn; ++i) {
        const auto k = static_cast<std::size_t>(i);
        w[k] = v[k] + time.dt() * (ci.a.at(0)[k] * v[k] + ci.b.at(0)[k] * (v[k + 1] - v[k]) / h);
      }
      step.solve(std::span<double>(w).subspan(1, static_cast<std::size_t>(nn)));
      v = w;
      z[static_cast<std::size_t>(j + 1)] = v;
    }
  }
  auto zflux = [&](int j) {
    const auto& v = z[static_cast<std::size_t>(j)];
    return (v[static_cast<std::size_t>(nn + 1)] - v[static_cast<std::size_t>(nn)]) / h;
  };

  const auto ku = static_cast<std::size_t>(kk);
  std::vector<double> normal(ku * ku, 0.0), rhs(ku, 0.0);
  for (std::size_t m = 0; m < paths.size(); ++m) {
    const auto& db = paths[m].increments;
    // Flux rows m' = 1..K-1: Σ_{n<m'} r_n ΔB_n zflux(m'-n).
    std::vector<double> row(ku);
    for (int mm = 1; mm < kk; ++mm) {
      std::fill(row.begin(), row.end(), 0.0);
      for (int n = 0; n < mm; ++n) row[static_cast<std::size_t>(n)] = db[static_cast<std::size_t>(n)] * zflux(mm - n);
      const double d = flux_data[m][static_cast<std::size_t>(mm)] -
                       (free.at(mm, nn + 1) - free.at(mm, nn)) / h;
      for (std::size_t a = 0; a < static_cast<std::size_t>(mm); ++a) {
        rhs[a] += row[a] * d;
        for (std::size_t b = 0; b < static_cast<std::size_t>(mm); ++b) normal[a * ku + b] += row[a] * row[b];
      }
    }
    // Terminal rows, one per interior node, weighted by √h.
    const double sh = std::sqrt(h);
    for (int i = 1; i <= nn; ++i) {
      for (int n = 0; n < kk; ++n) {
        row[static_cast<std::size_t>(n)] = sh * db[static_cast<std::size_t>(n)] *
                                           z[static_cast<std::size_t>(kk - n)][static_cast<std::size_t>(i)];
      }
      const double d = sh * (terminal_data[m][static_cast<std::size_t>(i)] - free.at(kk, i));
      for (std::size_t a = 0; a < ku; ++a) {
        rhs[a] += row[a] * d;
        for (std::size_t b = 0; b < ku; ++b) normal[a * ku + b] += row[a] * row[b];
      }
    }
  }
  for (std::size_t a = 0; a < ku; ++a) normal[a * ku + a] += alpha;

  // Cholesky; the matrix is SPD by construction.
  std::vector<double> L(normal);
  for (std::size_t j = 0; j < ku; ++j) {
    double d = L[j * ku + j];
    for (std::size_t k = 0; k < j; ++k) d -= L[j * ku + k] * L[j * ku + k];
    if (!(d > 0.0)) throw ConvergenceError("reconstruct_time_profile: normal matrix not positive definite", {});
    d = std::sqrt(d);
    L[j * ku + j] = d;
    for (std::size_t i = j + 1; i < ku; ++i) {
      double v = L[i * ku + j];
      for (std::size_t k = 0; k < j; ++k) v -= L[i * ku + k] * L[j * ku + k];
      L[i * ku + j] = v / d;
    }
  }
  std::vector<double> x(rhs);
  for (std::size_t i = 0; i < ku; ++i) {
    for (std::size_t k = 0; k < i; ++k) x[i] -= L[i * ku + k] * x[k];
    x[i] /= L[i * ku + i];
  }
  for (std::size_t i = ku; i-- > 0;) {
    for (std::size_t k = i + 1; k < ku; ++k) x[i] -= L[k * ku + i] * x[k];
    x[i] /= L[i * ku + i];
  }
  TimeProfileEstimate est;
  est.r = std::move(x);
  return est;
}

}  // namespace carleman_lab
