#pragma once

#include <array>
#include <cfloat>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "carleman_lab/grid.hpp"
#include "carleman_lab/grid_calculus.hpp"

namespace carleman_lab {

/// ψ(x,t) = |x - x*|² - β|t - t₀|², with x* outside [0, L].
struct RegularProfile {
  double x_star = -0.5;
};

/// ψ(x,t) = d(x) - β(t - t₀)² for a caller-supplied d with analytic
/// derivatives. `sup_norm` is ‖d‖_∞ over the extended interval on which d is
/// defined (it may exceed max over [0, L]).
struct GeneralProfile {
  std::function<double(double)> d;
  std::function<double(double)> dx;
  std::function<double(double)> dxx;
  double sup_norm = 0.0;

  /// d(x) = x((L + δ) - x), positive on (0, L + δ) and vanishing at its ends.
  static GeneralProfile quadratic(double length, double delta) {
    const double ell = length + delta;
    GeneralProfile p;
    p.d = [ell](double x) { return x * (ell - x); };
    p.dx = [ell](double x) { return ell - 2.0 * x; };
    p.dxx = [](double) { return -2.0; };
    p.sup_norm = ell * ell / 4.0;
    return p;
  }
};

struct WeightSpec {
  std::variant<RegularProfile, GeneralProfile> profile = RegularProfile{};
  double t0 = 0.5;
  double beta = 0.1;
  double lambda = 1.0;
  double s = 1.0;
};

/// Pointwise evaluation of ψ, φ = e^{λψ} and log θ = sφ.
class WeightFunction {
 public:
  explicit WeightFunction(WeightSpec spec) : spec_(std::move(spec)) {}

  const WeightSpec& spec() const noexcept { return spec_; }
  double lambda() const noexcept { return spec_.lambda; }
  double s() const noexcept { return spec_.s; }

  double spatial(double x) const {
    if (const auto* r = std::get_if<RegularProfile>(&spec_.profile)) {
      return (x - r->x_star) * (x - r->x_star);
    }
    return std::get<GeneralProfile>(spec_.profile).d(x);
  }
  double psi_x(double x) const {
    if (const auto* r = std::get_if<RegularProfile>(&spec_.profile)) return 2.0 * (x - r->x_star);
    return std::get<GeneralProfile>(spec_.profile).dx(x);
  }
  double psi_xx(double x) const {
    if (std::holds_alternative<RegularProfile>(spec_.profile)) return 2.0;
    return std::get<GeneralProfile>(spec_.profile).dxx(x);
  }
  double psi(double x, double t) const {
    const double dt = t - spec_.t0;
    return spatial(x) - spec_.beta * dt * dt;
  }
  double phi(double x, double t) const { return std::exp(spec_.lambda * psi(x, t)); }
  double log_theta(double x, double t) const { return spec_.s * phi(x, t); }
  /// ∂_t φ
  double phi_t(double x, double t) const {
    return spec_.lambda * phi(x, t) * (-2.0 * spec_.beta * (t - spec_.t0));
  }

  /// max over x ∈ [0, L] of the spatial part of ψ (analytic for the regular
  /// profile, dense sampling otherwise). Grid independent.
  double spatial_max(double length) const {
    if (const auto* r = std::get_if<RegularProfile>(&spec_.profile)) {
      return std::max(r->x_star * r->x_star, (length - r->x_star) * (length - r->x_star));
    }
    double m = -std::numeric_limits<double>::infinity();
    constexpr int samples = 20000;
    for (int k = 0; k <= samples; ++k) m = std::max(m, spatial(length * k / samples));
    return m;
  }

  /// Checks parameter ranges and the gradient condition |∂_x ψ| > 0.
  void validate(const GridSpec& grid, const std::optional<TimeGrid>& time = std::nullopt) const {
    if (!std::isfinite(spec_.lambda) || spec_.lambda < 1.0) {
      throw InvalidArgument("weight: lambda must be >= 1, got " + std::to_string(spec_.lambda));
    }
    if (!std::isfinite(spec_.s) || spec_.s < 0.0) {
      throw InvalidArgument("weight: s must be >= 0, got " + std::to_string(spec_.s));
    }
    if (!std::isfinite(spec_.beta) || spec_.beta < 0.0) {
      throw InvalidArgument("weight: beta must be >= 0, got " + std::to_string(spec_.beta));
    }
    if (time && !(spec_.t0 > 0.0 && spec_.t0 < time->horizon())) {
      throw InvalidArgument("weight: t0 must lie in (0, T), got " + std::to_string(spec_.t0));
    }
    if (const auto* r = std::get_if<RegularProfile>(&spec_.profile)) {
      if (r->x_star >= 0.0 && r->x_star <= grid.length()) {
        throw PreconditionViolation("weight: x* = " + std::to_string(r->x_star) +
                                    " lies in [0, L]; the spatial gradient of psi would vanish");
      }
      return;
    }
    const auto& g = std::get<GeneralProfile>(spec_.profile);
    if (!g.d || !g.dx || !g.dxx) throw InvalidArgument("weight: general profile needs d, d', d''");
    for (int i = 1; i <= grid.interior(); ++i) {
      if (!(std::abs(g.dx(grid.x(i))) > 0.0)) {
        throw PreconditionViolation("weight: d'(x) vanishes at x = " + std::to_string(grid.x(i)) +
                                    "; the spatial gradient of psi must not vanish on G");
      }
    }
  }

 private:
  WeightSpec spec_;
};

/// Largest s for which θ = e^{sφ} stays finite on (grid, time).
inline double max_admissible_s(const WeightSpec& w, const GridSpec& grid, const TimeGrid& time) {
  const WeightFunction wf(w);
  double phi_max = 0.0;
  for (int n = 0; n <= time.steps(); ++n) {
    for (int i = 0; i <= grid.interior() + 1; ++i) phi_max = std::max(phi_max, wf.phi(grid.x(i), time.t(n)));
  }
  return std::log(DBL_MAX) / phi_max;
}

struct WeightTables {
  SpaceTimeField psi;
  SpaceTimeField phi;
  SpaceTimeField theta;
  SpaceTimeField r;
};

/// Tabulates ψ, φ, θ, r on every node and time level.
inline WeightTables eval_weights(const WeightSpec& w, const GridSpec& grid, const TimeGrid& time) {
  const WeightFunction wf(w);
  wf.validate(grid, time);
  WeightTables t{SpaceTimeField(grid, time), SpaceTimeField(grid, time), SpaceTimeField(grid, time),
                 SpaceTimeField(grid, time)};
  double max_psi = -std::numeric_limits<double>::infinity();
  double max_log_theta = 0.0;
  for (int n = 0; n <= time.steps(); ++n) {
    for (int i = 0; i <= grid.interior() + 1; ++i) {
      const double psi = wf.psi(grid.x(i), time.t(n));
      const double phi = std::exp(w.lambda * psi);
      t.psi.at(n, i) = psi;
      t.phi.at(n, i) = phi;
      max_psi = std::max(max_psi, psi);
      max_log_theta = std::max(max_log_theta, w.s * phi);
      t.theta.at(n, i) = std::exp(w.s * phi);
      t.r.at(n, i) = std::exp(-w.s * phi);
    }
  }
  if (!(max_log_theta < std::log(DBL_MAX))) {
    throw RangeError("eval_weights: e^{s phi} overflows (s = " + std::to_string(w.s) +
                         ", lambda = " + std::to_string(w.lambda) + ", max psi = " + std::to_string(max_psi) +
                         "); reduce s or lambda",
                     w.s, w.lambda, max_psi);
  }
  return t;
}

struct ExpansionResiduals {
  /// max |θ D_h r + sλ f₁|, f₁ = φ ∂_xψ
  double first = 0.0;
  /// max |θ Δ_h r - (s²λ² f₂ - sλ² f₃ - sλ f₄)|
  double second = 0.0;
};

/// Distance between the discrete weight derivatives and their leading-order
/// symbols, over interior nodes and all time levels. θ r_{i±1} is formed as
/// e^{-s(φ_{i±1} - φ_i)}, so large θ never materializes.
inline ExpansionResiduals expansion_residuals(const WeightSpec& w, const GridSpec& grid, const TimeGrid& time) {
  const WeightFunction wf(w);
  wf.validate(grid, time);
  const double h = grid.h();
  const double s = w.s;
  const double lam = w.lambda;
  ExpansionResiduals out;
  std::vector<double> phi(grid.node_count());
  for (int n = 0; n <= time.steps(); ++n) {
    const double t = time.t(n);
    for (int i = 0; i <= grid.interior() + 1; ++i) phi[static_cast<std::size_t>(i)] = wf.phi(grid.x(i), t);
    for (int i = 1; i <= grid.interior(); ++i) {
      const auto k = static_cast<std::size_t>(i);
      const double x = grid.x(i);
      const double up = std::exp(-s * (phi[k + 1] - phi[k]));
      const double down = std::exp(-s * (phi[k - 1] - phi[k]));
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw RangeError("expansion_residuals: neighbour weight ratio overflows", s, lam, wf.psi(x, t));
      }
      const double theta_dr = (up - down) / (2.0 * h);
      const double theta_lap_r = (up - 2.0 + down) / (h * h);
      const double px = wf.psi_x(x);
      const double f1 = phi[k] * px;
      const double f2 = phi[k] * phi[k] * px * px;
      const double f3 = phi[k] * px * px;
      const double f4 = phi[k] * wf.psi_xx(x);
      out.first = std::max(out.first, std::abs(theta_dr + s * lam * f1));
      out.second = std::max(out.second, std::abs(theta_lap_r - (s * s * lam * lam * f2 - s * lam * lam * f3 - s * lam * f4)));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Level sets of φ for the general weight and the localizing cut-offs

struct LevelSetSpec {
  int n_level = 2;
  double epsilon = 0.0;
  double beta = 0.0;
  double lambda = 1.0;
  double t0 = 0.0;
  double d_sup = 0.0;
  /// μ_k = exp(λ(k ‖d‖/n_level - βε²/n_level)), k = 1..4
  std::array<double, 4> mu{};
};

struct BetaBand {
  double lower = 0.0;  // exclusive
  double upper = 0.0;  // exclusive
  double mid() const { return 0.5 * (lower + upper); }
};

/// β with βε² < ‖d‖ < 2βε².
inline BetaBand beta_band(double d_sup, double epsilon) {
  return {d_sup / (2.0 * epsilon * epsilon), d_sup / (epsilon * epsilon)};
}

inline LevelSetSpec make_level_set_spec(double d_sup, double lambda, double beta, double epsilon, int n_level,
                                        double t0) {
  if (n_level <= 1) throw InvalidArgument("level sets: level count must exceed 1");
  if (!(epsilon > 0.0)) throw InvalidArgument("level sets: epsilon must be positive");
  const double be2 = beta * epsilon * epsilon;
  if (!(be2 < d_sup && d_sup < 2.0 * be2)) {
    throw InvalidArgument("level sets: need beta*eps^2 < ||d|| < 2*beta*eps^2, got beta*eps^2 = " +
                          std::to_string(be2) + ", ||d|| = " + std::to_string(d_sup) +
                          ", 2*beta*eps^2 = " + std::to_string(2.0 * be2));
  }
  LevelSetSpec spec;
  spec.n_level = n_level;
  spec.epsilon = epsilon;
  spec.beta = beta;
  spec.lambda = lambda;
  spec.t0 = t0;
  spec.d_sup = d_sup;
  for (int k = 1; k <= 4; ++k) {
    spec.mu[static_cast<std::size_t>(k - 1)] =
        std::exp(lambda * (k * d_sup / n_level - be2 / n_level));
  }
  return spec;
}

/// Membership masks of Q^(k) = {(x,t) : φ(x,t) > μ_k} on Ḡ_h × time levels.
struct LevelSets {
  LevelSetSpec spec;
  GridSpec grid;
  TimeGrid time;
  std::array<std::vector<std::uint8_t>, 4> masks;

  bool contains(int k, int n, int i) const {
    return masks[static_cast<std::size_t>(k - 1)]
                [static_cast<std::size_t>(n) * grid.node_count() + static_cast<std::size_t>(i)] != 0;
  }
};

inline LevelSets level_sets(const GeneralProfile& d, double lambda, double beta, double epsilon, int n_level,
                            double t0, const GridSpec& grid, const TimeGrid& time) {
  LevelSets out;
  out.spec = make_level_set_spec(d.sup_norm, lambda, beta, epsilon, n_level, t0);
  out.grid = grid;
  out.time = time;
  const WeightFunction wf(WeightSpec{d, t0, beta, lambda, 0.0});
  const std::size_t cells = grid.node_count() * static_cast<std::size_t>(time.steps() + 1);
  for (auto& m : out.masks) m.assign(cells, 0);
  for (int n = 0; n <= time.steps(); ++n) {
    for (int i = 0; i <= grid.interior() + 1; ++i) {
      const double phi = wf.phi(grid.x(i), time.t(n));
      const std::size_t c = static_cast<std::size_t>(n) * grid.node_count() + static_cast<std::size_t>(i);
      for (std::size_t k = 0; k < 4; ++k) out.masks[k][c] = phi > out.spec.mu[k] ? 1 : 0;
    }
  }
  return out;
}

struct InclusionCheck {
  bool holds = true;
  std::size_t checked = 0;
  std::size_t violations = 0;
};

/// Scans every node of G_{0,h} = (x_left, L) ∩ G_h and every time level in
/// (t₀ - ε/√n_level, t₀ + ε/√n_level) for membership in Q^(4).
inline InclusionCheck check_inner_inclusion(const LevelSets& ls, double x_left) {
  InclusionCheck r;
  const double half = ls.spec.epsilon / std::sqrt(static_cast<double>(ls.spec.n_level));
  for (int n = 0; n <= ls.time.steps(); ++n) {
    const double t = ls.time.t(n);
    if (!(t > ls.spec.t0 - half && t < ls.spec.t0 + half)) continue;
    for (int i = 1; i <= ls.grid.interior(); ++i) {
      if (!(ls.grid.x(i) > x_left)) continue;
      ++r.checked;
      if (!ls.contains(4, n, i)) ++r.violations;
    }
  }
  r.holds = r.violations == 0;
  return r;
}

/// Smallest level count n > 1 with d(x) > 4‖d‖/n on (x_left, L].
inline int minimal_level_count(const GeneralProfile& d, double x_left, double length) {
  double d_min = std::numeric_limits<double>::infinity();
  constexpr int samples = 20000;
  for (int k = 0; k <= samples; ++k) d_min = std::min(d_min, d.d(x_left + (length - x_left) * k / samples));
  if (!(d_min > 0.0)) throw InvalidArgument("minimal_level_count: d must be positive on (x_left, L]");
  return std::max(2, static_cast<int>(std::floor(4.0 * d.sup_norm / d_min)) + 1);
}

/// t₀ = √2ε + jε/√n_level, j = 0..m, covering [√2ε, T - √2ε].
inline std::vector<double> t0_tiling(double epsilon, int n_level, double horizon) {
  const double start = std::sqrt(2.0) * epsilon;
  const double stop = horizon - start;
  if (stop < start) throw InvalidArgument("t0_tiling: need T >= 2*sqrt(2)*eps");
  const double step = epsilon / std::sqrt(static_cast<double>(n_level));
  std::vector<double> out;
  for (int j = 0;; ++j) {
    const double t0 = start + j * step;
    if (t0 > stop + 1e-12 * horizon) break;
    out.push_back(t0);
  }
  if (out.back() < stop - 1e-12 * horizon) out.push_back(stop);
  return out;
}

/// Quintic smoothstep 6σ⁵ - 15σ⁴ + 10σ³ on [0,1], clamped outside.
inline double smoothstep(double sigma) {
  if (sigma <= 0.0) return 0.0;
  if (sigma >= 1.0) return 1.0;
  return sigma * sigma * sigma * (sigma * (6.0 * sigma - 15.0) + 10.0);
}

inline double smoothstep_derivative(double sigma) {
  if (sigma <= 0.0 || sigma >= 1.0) return 0.0;
  const double q = sigma * (1.0 - sigma);
  return 30.0 * q * q;
}

/// χ with χ = 0 on [x₀, x₁], χ = 1 on [x_N, x_{N+1}] and a smoothstep between.
struct SpatialCutoff {
  DiscreteField value;
  FieldOnMinus diff_plus;
  InteriorField diff_center;
  InteriorField laplacian;
};

inline SpatialCutoff build_cutoff_chi(const GridSpec& grid) {
  if (grid.interior() < 4) {
    throw InvalidArgument("build_cutoff_chi: need N >= 4, got " + std::to_string(grid.interior()));
  }
  const double x1 = grid.x(1);
  const double xn = grid.x(grid.interior());
  auto chi = DiscreteField::sample(grid, [&](double x) { return smoothstep((x - x1) / (xn - x1)); });
  chi[0] = 0.0;
  chi[1] = 0.0;
  chi[grid.interior()] = 1.0;
  chi[grid.interior() + 1] = 1.0;
  return {chi, carleman_lab::diff_plus(chi), carleman_lab::diff_center(chi), carleman_lab::laplacian(chi)};
}

/// χ̃ = 1 where φ > μ₃, 0 where φ < μ₂, smoothstep in φ between. Stencil
/// evaluations are stored on the full node range (entries outside an
/// operator's domain are zero); ∂_t χ̃ is analytic.
struct SpaceTimeCutoff {
  SpaceTimeField value;
  SpaceTimeField diff_plus;
  SpaceTimeField diff_center;
  SpaceTimeField laplacian;
  SpaceTimeField time_derivative;
};

inline SpaceTimeCutoff build_cutoff_chitilde(const LevelSets& levels, const GeneralProfile& d) {
  const double mu2 = levels.spec.mu[1];
  const double mu3 = levels.spec.mu[2];
  if (!(mu2 < mu3)) throw InvalidArgument("build_cutoff_chitilde: need mu2 < mu3");
  const GridSpec& grid = levels.grid;
  const TimeGrid& time = levels.time;
  const WeightFunction wf(WeightSpec{d, levels.spec.t0, levels.spec.beta, levels.spec.lambda, 0.0});
  SpaceTimeCutoff c{SpaceTimeField(grid, time), SpaceTimeField(grid, time), SpaceTimeField(grid, time),
                    SpaceTimeField(grid, time), SpaceTimeField(grid, time)};
  const double h = grid.h();
  const int last = grid.interior() + 1;
  for (int n = 0; n <= time.steps(); ++n) {
    const double t = time.t(n);
    for (int i = 0; i <= last; ++i) {
      const double x = grid.x(i);
      const double sigma = (wf.phi(x, t) - mu2) / (mu3 - mu2);
      c.value.at(n, i) = smoothstep(sigma);
      c.time_derivative.at(n, i) = smoothstep_derivative(sigma) * wf.phi_t(x, t) / (mu3 - mu2);
    }
    for (int i = 0; i < last; ++i) c.diff_plus.at(n, i) = (c.value.at(n, i + 1) - c.value.at(n, i)) / h;
    for (int i = 1; i < last; ++i) {
      c.diff_center.at(n, i) = (c.value.at(n, i + 1) - c.value.at(n, i - 1)) / (2.0 * h);
      c.laplacian.at(n, i) = (c.value.at(n, i + 1) - 2.0 * c.value.at(n, i) + c.value.at(n, i - 1)) / (h * h);
    }
  }
  return c;
}

/// β making θ(·, T) ≤ ratio · max θ, i.e. s(φ_max - max_x φ(x, T)) ≥ ln(1/ratio),
/// using the grid-independent spatial maximum of ψ. Empty when no β can
/// achieve it (s φ_max ≤ ln(1/ratio)).
inline std::optional<double> suppression_beta(const WeightSpec& w, double length, double horizon,
                                              double ratio = 1e-8) {
  const WeightFunction wf(w);
  const double phi_max = std::exp(w.lambda * wf.spatial_max(length));
  const double gap = std::log(1.0 / ratio) / (w.s * phi_max);
  const double tau = horizon - w.t0;
  if (!(gap < 1.0) || !(tau > 0.0)) return std::nullopt;
  return -std::log1p(-gap) / (w.lambda * tau * tau);
}

}  // namespace carleman_lab
