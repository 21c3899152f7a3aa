#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "carleman_lab/grid.hpp"

namespace carleman_lab {

// One-sided and centered stencils. Each operator shrinks the index range by
// the nodes its stencil needs, so the result type records where it lives.

/// (m_h^+ u)_i = (u_{i+1} + u_i)/2
template <int Lo, int Hi>
GridFunction<Lo, Hi + 1> avg_plus(const GridFunction<Lo, Hi>& u) {
  GridFunction<Lo, Hi + 1> out(u.grid());
  for (int i = out.first(); i <= out.last(); ++i) out[i] = 0.5 * (u[i + 1] + u[i]);
  return out;
}

/// (m_h^- u)_i = (u_i + u_{i-1})/2
template <int Lo, int Hi>
GridFunction<Lo + 1, Hi> avg_minus(const GridFunction<Lo, Hi>& u) {
  GridFunction<Lo + 1, Hi> out(u.grid());
  for (int i = out.first(); i <= out.last(); ++i) out[i] = 0.5 * (u[i] + u[i - 1]);
  return out;
}

/// (m_h u)_i = (u_{i+1} + 2u_i + u_{i-1})/4
template <int Lo, int Hi>
GridFunction<Lo + 1, Hi + 1> avg_center(const GridFunction<Lo, Hi>& u) {
  GridFunction<Lo + 1, Hi + 1> out(u.grid());
  for (int i = out.first(); i <= out.last(); ++i) {
    out[i] = 0.25 * (u[i + 1] + 2.0 * u[i] + u[i - 1]);
  }
  return out;
}

/// (D_h^+ u)_i = (u_{i+1} - u_i)/h
template <int Lo, int Hi>
GridFunction<Lo, Hi + 1> diff_plus(const GridFunction<Lo, Hi>& u) {
  GridFunction<Lo, Hi + 1> out(u.grid());
  const double h = u.grid().h();
  for (int i = out.first(); i <= out.last(); ++i) out[i] = (u[i + 1] - u[i]) / h;
  return out;
}

/// (D_h^- u)_i = (u_i - u_{i-1})/h
template <int Lo, int Hi>
GridFunction<Lo + 1, Hi> diff_minus(const GridFunction<Lo, Hi>& u) {
  GridFunction<Lo + 1, Hi> out(u.grid());
  const double h = u.grid().h();
  for (int i = out.first(); i <= out.last(); ++i) out[i] = (u[i] - u[i - 1]) / h;
  return out;
}

/// (D_h u)_i = (u_{i+1} - u_{i-1})/(2h)
template <int Lo, int Hi>
GridFunction<Lo + 1, Hi + 1> diff_center(const GridFunction<Lo, Hi>& u) {
  GridFunction<Lo + 1, Hi + 1> out(u.grid());
  const double h = u.grid().h();
  for (int i = out.first(); i <= out.last(); ++i) out[i] = (u[i + 1] - u[i - 1]) / (2.0 * h);
  return out;
}

/// (Δ_h u)_i = (u_{i+1} - 2u_i + u_{i-1})/h²
template <int Lo, int Hi>
GridFunction<Lo + 1, Hi + 1> laplacian(const GridFunction<Lo, Hi>& u) {
  GridFunction<Lo + 1, Hi + 1> out(u.grid());
  const double h = u.grid().h();
  for (int i = out.first(); i <= out.last(); ++i) {
    out[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (h * h);
  }
  return out;
}

/// h Σ_{i=1}^{N} u_i
template <int Lo, int Hi>
double integrate_Gh(const GridFunction<Lo, Hi>& u) {
  static_assert(Lo <= 1 && Hi <= 1, "field must cover G_h");
  double sum = 0.0;
  for (int i = 1; i <= u.grid().interior(); ++i) sum += u[i];
  return u.grid().h() * sum;
}

/// h Σ_{i=0}^{N} v_i
template <int Lo, int Hi>
double integrate_Gh_minus(const GridFunction<Lo, Hi>& v) {
  static_assert(Lo == 0 && Hi <= 1, "field must cover G_h^-");
  double sum = 0.0;
  for (int i = 0; i <= v.grid().interior(); ++i) sum += v[i];
  return v.grid().h() * sum;
}

struct Norms {
  double l2 = 0.0;
  double linf = 0.0;
  double h1 = 0.0;
  /// Square root of ∫|Δ_h u|² + ‖u‖²_{H¹}.
  double h2 = 0.0;
};

inline Norms norms(const DiscreteField& u) {
  const auto sq = u * u;
  const auto dp = diff_plus(u);
  const auto lap = laplacian(u);
  const double l2sq = integrate_Gh(sq);
  const double h1sq = integrate_Gh_minus(dp * dp) + l2sq;
  const double h2sq = integrate_Gh(lap * lap) + h1sq;
  Norms out;
  out.l2 = std::sqrt(l2sq);
  out.h1 = std::sqrt(h1sq);
  out.h2 = std::sqrt(h2sq);
  for (int i = 1; i <= u.grid().interior(); ++i) out.linf = std::max(out.linf, std::abs(u[i]));
  return out;
}

// ---------------------------------------------------------------------------
// Summation-by-parts and product-rule identities

struct IdentityResult {
  std::string name;
  /// max|LHS - RHS| / (1 + max|LHS| + max|RHS|); empty when skipped.
  std::optional<double> residual;
  double max_abs_difference = 0.0;
  /// Set when the identity's boundary precondition failed.
  std::string violation;
};

struct IdentityReport {
  std::vector<IdentityResult> results;

  std::vector<std::string> skipped() const {
    std::vector<std::string> out;
    for (const auto& r : results) {
      if (!r.residual) out.push_back(r.name);
    }
    return out;
  }

  double max_residual() const {
    double m = 0.0;
    for (const auto& r : results) {
      if (r.residual) m = std::max(m, *r.residual);
    }
    return m;
  }

  /// Throws PreconditionViolation naming every skipped identity.
  void require_complete() const {
    const auto names = skipped();
    if (names.empty()) return;
    std::string msg = "identity check skipped (v must vanish at x_0 and x_{N+1}):";
    for (const auto& n : names) msg += " " + n;
    throw PreconditionViolation(msg);
  }
};

namespace detail {

template <int Lo, int Hi>
IdentityResult compare_fields(std::string name, const GridFunction<Lo, Hi>& lhs,
                              const GridFunction<Lo, Hi>& rhs) {
  IdentityResult r;
  r.name = std::move(name);
  for (int i = lhs.first(); i <= lhs.last(); ++i) {
    r.max_abs_difference = std::max(r.max_abs_difference, std::abs(lhs[i] - rhs[i]));
  }
  r.residual = r.max_abs_difference / (1.0 + lhs.max_abs() + rhs.max_abs());
  return r;
}

inline IdentityResult compare_scalars(std::string name, double lhs, double rhs) {
  IdentityResult r;
  r.name = std::move(name);
  r.max_abs_difference = std::abs(lhs - rhs);
  r.residual = r.max_abs_difference / (1.0 + std::abs(lhs) + std::abs(rhs));
  return r;
}

}  // namespace detail

/// Evaluates both sides of each discrete identity by direct summation and
/// reports normalized residuals.
///
/// The three identities that need v_0 = v_{N+1} = 0 are reported as skipped
/// (with a violation message) when v does not satisfy it. The Laplacian
/// integration-by-parts identity carries explicit boundary terms and is
/// checked for arbitrary v.
inline IdentityReport verify_identities(const DiscreteField& u, const DiscreteField& v) {
  if (!(u.grid() == v.grid())) throw InvalidArgument("verify_identities: grids differ");
  const GridSpec& g = u.grid();
  const double h = g.h();
  const int n = g.interior();
  IdentityReport report;

  const auto u_int = restrict_to<1, 1>(u);
  const auto dp_u = diff_plus(u);
  const auto dp_v = diff_plus(v);
  const auto dm_v = diff_minus(v);
  const auto lap_u = laplacian(u);
  const auto lap_v = laplacian(v);
  const auto dc_u = diff_center(u);
  const auto dc_v = diff_center(v);

  // Pointwise operator relations.
  report.results.push_back(
      detail::compare_fields("avg_plus_expansion", avg_plus(u), restrict_to<0, 1>(u) + (h / 2.0) * dp_u));
  report.results.push_back(
      detail::compare_fields("avg_center_expansion", avg_center(u), u_int + (h * h / 4.0) * lap_u));
  report.results.push_back(
      detail::compare_fields("diff_center_factorization", dc_u, avg_minus(dp_u)));
  report.results.push_back(
      detail::compare_fields("laplacian_factorization", lap_u, diff_plus(diff_minus(u))));

  // Product rules.
  const auto uv = u * v;
  const auto mp_u = avg_plus(u);
  const auto mp_v = avg_plus(v);
  report.results.push_back(detail::compare_fields(
      "avg_plus_product", avg_plus(uv), mp_u * mp_v + (h * h / 4.0) * (dp_u * dp_v)));
  report.results.push_back(
      detail::compare_fields("diff_plus_product", diff_plus(uv), dp_u * mp_v + mp_u * dp_v));
  report.results.push_back(detail::compare_fields(
      "laplacian_product", laplacian(uv),
      lap_u * avg_center(v) + 2.0 * (dc_u * dc_v) + avg_center(u) * lap_v));

  const bool v_vanishes = v[0] == 0.0 && v[n + 1] == 0.0;
  auto skipped = [&](std::string name) {
    IdentityResult r;
    r.name = std::move(name);
    r.violation = "v_0 = " + std::to_string(v[0]) + ", v_{N+1} = " + std::to_string(v[n + 1]) +
                  " (both must be 0)";
    return r;
  };

  const auto v_int = restrict_to<1, 1>(v);
  const auto dp_v_sq = dp_v * dp_v;

  // 2∫ u v D_h v = -∫ D_h u |v|² + h²/2 ∫^- D_h^+u |D_h^+ v|²
  if (v_vanishes) {
    const double lhs = 2.0 * integrate_Gh(u_int * v_int * dc_v);
    const double rhs = -integrate_Gh(dc_u * (v_int * v_int)) +
                       (h * h / 2.0) * integrate_Gh_minus(dp_u * dp_v_sq);
    report.results.push_back(detail::compare_scalars("sbp_advective", lhs, rhs));
  } else {
    report.results.push_back(skipped("sbp_advective"));
  }

  // ∫ u Δ_h v = -∫^- D_h^+u D_h^+v - u_0 (D_h^+v)_0 + u_{N+1} (D_h^-v)_{N+1}
  {
    const double lhs = integrate_Gh(u_int * lap_v);
    const double rhs = -integrate_Gh_minus(dp_u * dp_v) - u[0] * dp_v[0] + u[n + 1] * dm_v[n + 1];
    report.results.push_back(detail::compare_scalars("sbp_laplacian", lhs, rhs));
  }

  // ∫ u v Δ_h v = -∫^- m_h^+u |D_h^+v|² + 1/2 ∫ Δ_h u |v|²
  if (v_vanishes) {
    const double lhs = integrate_Gh(u_int * v_int * lap_v);
    const double rhs = -integrate_Gh_minus(mp_u * dp_v_sq) + 0.5 * integrate_Gh(lap_u * (v_int * v_int));
    report.results.push_back(detail::compare_scalars("sbp_energy", lhs, rhs));
  } else {
    report.results.push_back(skipped("sbp_energy"));
  }

  // 2∫ u D_h v Δ_h v = -∫^- D_h^+u |D_h^+v|² + u_{N+1}|(D_h^-v)_{N+1}|² - u_0 |(D_h^+v)_0|²
  if (v_vanishes) {
    const double lhs = 2.0 * integrate_Gh(u_int * dc_v * lap_v);
    const double rhs = -integrate_Gh_minus(dp_u * dp_v_sq) + u[n + 1] * dm_v[n + 1] * dm_v[n + 1] -
                       u[0] * dp_v[0] * dp_v[0];
    report.results.push_back(detail::compare_scalars("sbp_transport_laplacian", lhs, rhs));
  } else {
    report.results.push_back(skipped("sbp_transport_laplacian"));
  }

  return report;
}

}  // namespace carleman_lab

namespace carleman_lab {

// ---------------------------------------------------------------------------
// Raw-span kernels used by the solvers and labs on whole time levels.

/// Discrete H² energy of one level restricted to nodes [first, last] ⊂ G_h:
/// h Σ_{first..last} (|Δ_h y|² + |y|²) + h Σ_{first-1..last} |D_h^+ y|².
/// With first = 1, last = N this is the squared H²(G_h) norm.
inline double h2_energy(std::span<const double> y, double h, int first, int last) {
  double lap = 0.0;
  double val = 0.0;
  double grad = 0.0;
  for (int i = first; i <= last; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double l = (y[k + 1] - 2.0 * y[k] + y[k - 1]) / (h * h);
    lap += l * l;
    val += y[k] * y[k];
  }
  for (int i = first - 1; i <= last; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double d = (y[k + 1] - y[k]) / h;
    grad += d * d;
  }
  return h * (lap + val + grad);
}

/// h Σ_{i=1}^{N} |y_i|²
inline double l2_energy(std::span<const double> y, double h) {
  double sum = 0.0;
  for (std::size_t k = 1; k + 1 < y.size(); ++k) sum += y[k] * y[k];
  return h * sum;
}

/// Left-endpoint rectangle rule: sqrt(Σ_{n<K} dt |v_n|²) for v of length K+1.
inline double time_l2_norm(std::span<const double> v, double dt) {
  double sum = 0.0;
  for (std::size_t n = 0; n + 1 < v.size(); ++n) sum += v[n] * v[n];
  return std::sqrt(dt * sum);
}

/// H¹(0,T) norm with forward differences in time:
/// sqrt(Σ_{n<K} dt (|v_n|² + |(v_{n+1} - v_n)/dt|²)).
inline double time_h1_norm(std::span<const double> v, double dt) {
  double sum = 0.0;
  for (std::size_t n = 0; n + 1 < v.size(); ++n) {
    const double d = (v[n + 1] - v[n]) / dt;
    sum += v[n] * v[n] + d * d;
  }
  return std::sqrt(dt * sum);
}

}  // namespace carleman_lab
