#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "carleman_lab/inverse_source.hpp"

using namespace carleman_lab;

namespace {

constexpr double pi = std::numbers::pi;

SPDEProblem small_base(int n, int k) {
  InverseSourceBase b;
  b.steps = k;
  return b.problem(make_grid(1.0, n));
}

}  // namespace

TEST(SeparableSource, Bounds) {
  const auto g = make_grid(1.0, 7);
  const auto one = make_separable_source([](double) { return 1.0; }, DiscreteField(g, 1.0));
  EXPECT_EQ(one.R0, 1.0);
  EXPECT_EQ(one.R1, 0.0);
  EXPECT_EQ(one.constant(), 0.0);

  const auto R = DiscreteField::sample(g, [](double x) { return 2.0 + std::sin(pi * x); });
  const auto s = make_separable_source([](double t) { return t; }, R);
  double r0 = 1e300, r1 = 0.0;
  for (int i = 0; i <= 8; ++i) r0 = std::min(r0, R[i]);
  for (int i = 0; i <= 7; ++i) r1 = std::max(r1, std::abs(R[i + 1] - R[i]) / g.h());
  EXPECT_DOUBLE_EQ(s.R0, r0);
  EXPECT_DOUBLE_EQ(s.R0, 2.0);
  EXPECT_DOUBLE_EQ(s.R1, r1);

  auto bad = R;
  bad[3] = 0.0;
  EXPECT_THROW(make_separable_source([](double) { return 1.0; }, bad), InvalidArgument);
}

TEST(Dominance, IdenticalSeparableAndViolating) {
  const auto g = make_grid(1.0, 9);
  const TimeGrid tg(1.0, 6);
  const auto R = DiscreteField::sample(g, [](double x) { return 1.5 + 0.4 * std::cos(3 * x); });
  const auto s1 = make_separable_source([](double t) { return 1.0 + t; }, R);
  const auto s2 = make_separable_source([](double t) { return std::sin(5 * t); }, R);
  const auto t1 = s1.table(tg);

  const auto same = check_difference_dominance(t1, t1);
  EXPECT_TRUE(same.holds);
  EXPECT_EQ(same.best_constant, 0.0);

  const auto sep = check_difference_dominance(t1, s2.table(tg));
  EXPECT_TRUE(sep.holds);
  EXPECT_LE(sep.best_constant, s1.constant() * (1 + 1e-12));

  auto t2 = t1;
  for (int n = 0; n <= 6; ++n) t2.at(n, 4) += 0.5;  // gap is zero except at node 4
  const auto v = check_difference_dominance(t1, t2);
  EXPECT_FALSE(v.holds);
  ASSERT_EQ(v.violations.size(), 7u);
  EXPECT_EQ(v.violations[0].second, 3);
}

TEST(Stability, IdenticalSourcesAreDegenerate) {
  const auto p = small_base(8, 16);
  const auto g = SpaceTimeFunction::spatial([](double x) { return 1.0 + x; });
  const auto rec = stability_experiment(p, g, g, 5, 1);
  EXPECT_EQ(rec.source_gap, 0.0);
  EXPECT_EQ(rec.data_gap, 0.0);
  EXPECT_TRUE(rec.degenerate);
  EXPECT_FALSE(rec.ratio.has_value());
}

TEST(Stability, ScalingInvarianceAndDeterminism) {
  const auto p = small_base(15, 64);
  const auto pairs = random_separable_pairs(1, 1.0, 1.0, 4);
  const auto R = DiscreteField::sample(p.grid, pairs[0].R);
  const auto t1 = make_separable_source(pairs[0].r1, R).table(p.time);
  const auto t2 = make_separable_source(pairs[0].r2, R).table(p.time);
  auto scaled = t2;
  for (std::size_t k = 0; k < scaled.raw().size(); ++k) {
    scaled.raw()[k] = t2.raw()[k] + 1e-3 * (t1.raw()[k] - t2.raw()[k]);
  }
  const auto a = stability_experiment(p, SpaceTimeFunction::table(t1), SpaceTimeFunction::table(t2), 40, 8);
  const auto b = stability_experiment(p, SpaceTimeFunction::table(scaled), SpaceTimeFunction::table(t2), 40, 8);
  ASSERT_TRUE(a.ratio && b.ratio);
  EXPECT_NEAR(*b.ratio, *a.ratio, 1e-10 * *a.ratio);
  EXPECT_NEAR(b.source_gap, 1e-3 * a.source_gap, 1e-10 * a.source_gap);
  EXPECT_NEAR(b.flux_gap, 1e-3 * a.flux_gap, 1e-9 * a.flux_gap);

  const auto again = stability_experiment(p, SpaceTimeFunction::table(t1), SpaceTimeFunction::table(t2), 40, 8, 3);
  EXPECT_EQ(again.flux_gap, a.flux_gap);
  EXPECT_EQ(again.terminal_gap, a.terminal_gap);
  EXPECT_EQ(*again.ratio, *a.ratio);
}

TEST(Stability, BruteForceTinyInstance) {
  const auto p = small_base(4, 4);
  auto g1 = [](double x, double t) { return (1.0 + t) * (2.0 + x); };
  auto g2 = [](double x, double t) { return (0.5 - t) * (2.0 + x); };
  const auto rec = stability_experiment(p, SpaceTimeFunction::space_time(g1), SpaceTimeFunction::space_time(g2), 1, 21);

  // Independent: explicit elimination of the tridiagonal system.
  const auto path = sample_brownian(p.time, derive_path_seed(21, 0));
  const double h = p.grid.h(), dt = p.time.dt();
  auto solve = [&](auto gfun) {
    std::vector<std::vector<double>> y(5, std::vector<double>(6, 0.0));
    for (int i = 1; i <= 4; ++i) y[0][static_cast<std::size_t>(i)] = std::sin(pi * p.grid.x(i));
    for (int n = 0; n < 4; ++n) {
      const double r = dt / (h * h);
      double rhs[4];
      for (int i = 1; i <= 4; ++i) {
        const auto& v = y[static_cast<std::size_t>(n)];
        const auto k = static_cast<std::size_t>(i);
        rhs[i - 1] = v[k] + dt * (0.5 * v[k] + 0.2 * (v[k + 1] - v[k]) / h) +
                     gfun(p.grid.x(i), p.time.t(n)) * path.increments[static_cast<std::size_t>(n)];
      }
      // (1+2r) on the diagonal, -r off it.
      double c[4], d[4];
      c[0] = -r / (1 + 2 * r);
      d[0] = rhs[0] / (1 + 2 * r);
      for (int i = 1; i < 4; ++i) {
        const double m = (1 + 2 * r) + r * c[i - 1];
        c[i] = -r / m;
        d[i] = (rhs[i] + r * d[i - 1]) / m;
      }
      auto& nx = y[static_cast<std::size_t>(n + 1)];
      nx[4] = d[3];
      for (int i = 2; i >= 0; --i) nx[static_cast<std::size_t>(i + 1)] = d[i] - c[i] * nx[static_cast<std::size_t>(i + 2)];
    }
    return y;
  };
  const auto y1 = solve(g1);
  const auto y2 = solve(g2);
  double flux = 0, term = 0, src = 0;
  for (int n = 0; n < 4; ++n) {
    const double f = ((y1[static_cast<std::size_t>(n)][5] - y1[static_cast<std::size_t>(n)][4]) -
                      (y2[static_cast<std::size_t>(n)][5] - y2[static_cast<std::size_t>(n)][4])) / h;
    flux += dt * f * f;
    for (int i = 1; i <= 4; ++i) {
      const double d = g1(p.grid.x(i), p.time.t(n)) - g2(p.grid.x(i), p.time.t(n));
      src += dt * h * d * d;
    }
  }
  for (int i = 1; i <= 4; ++i) {
    const double d = y1[4][static_cast<std::size_t>(i)] - y2[4][static_cast<std::size_t>(i)];
    term += h * d * d;
  }
  EXPECT_NEAR(rec.source_gap, std::sqrt(src), 1e-12 * std::sqrt(src));
  EXPECT_NEAR(rec.flux_gap, std::sqrt(flux), 1e-12 * std::sqrt(flux));
  EXPECT_NEAR(rec.terminal_gap, std::sqrt(term), 1e-12 * std::sqrt(term));
}

TEST(Uniformity, SingleHAndInsufficientData) {
  InverseSourceBase base;
  base.steps = 32;
  const auto pairs = random_separable_pairs(1, 1.0, 1.0, 2);
  const auto one = uniformity_sweep(base, {15}, pairs, 4, 1);
  EXPECT_EQ(one.rows.size(), 1u);
  EXPECT_FALSE(one.verdict.has_value());

  auto same = pairs;
  same[0].r2 = same[0].r1;
  const auto zero = uniformity_sweep(base, {7, 15}, same, 4, 1);
  for (const auto& r : zero.rows) EXPECT_TRUE(r.record.degenerate);
  ASSERT_TRUE(zero.verdict.has_value());
  EXPECT_EQ(*zero.verdict, "insufficient data");
}

TEST(Uniformity, SmallSweepIsUniform) {
  InverseSourceBase base;
  base.steps = 128;
  const auto pairs = random_separable_pairs(3, 1.0, 1.0, 9);
  const auto r = uniformity_sweep(base, {15, 31}, pairs, 30, 5, 2);
  ASSERT_TRUE(r.verdict.has_value());
  EXPECT_EQ(*r.verdict, "uniform");
  for (const auto& row : r.rows) {
    EXPECT_TRUE(row.record.dominance_holds);
    EXPECT_GE(row.record.source_gap, 0.0);
    EXPECT_GE(row.record.data_gap, 0.0);
  }
}

TEST(Reconstruction, RecoversTimeProfile) {
  SPDEProblem p = small_base(15, 24);
  const auto R = DiscreteField::sample(p.grid, [](double x) { return 1.5 + 0.3 * std::sin(pi * x); });
  auto r_true = [](double t) { return 1.0 + std::cos(3.0 * t); };
  const auto src = make_separable_source(r_true, R);
  p.g = SpaceTimeFunction::table(src.table(p.time));
  const int nn = 15;
  std::vector<SamplePath> paths;
  std::vector<std::vector<double>> flux, terminal;
  for (std::uint64_t m = 0; m < 30; ++m) {
    paths.push_back(sample_brownian(p.time, derive_path_seed(3, m)));
    const auto y = solve_forward(p, paths.back());
    std::vector<double> f(25);
    for (int n = 0; n <= 24; ++n) f[static_cast<std::size_t>(n)] = (y.at(n, nn + 1) - y.at(n, nn)) / p.grid.h();
    flux.push_back(f);
    const auto lv = y.level(24);
    terminal.emplace_back(lv.begin(), lv.end());
  }
  SPDEProblem base = p;
  base.g = SpaceTimeFunction();
  const auto est = reconstruct_time_profile(base, R, paths, flux, terminal, 1e-10);
  ASSERT_EQ(est.r.size(), 24u);
  for (int n = 0; n < 24; ++n) EXPECT_NEAR(est.r[static_cast<std::size_t>(n)], r_true(p.time.t(n)), 1e-5) << n;

  EXPECT_THROW(reconstruct_time_profile(base, R, paths, flux, terminal, 0.0), InvalidArgument);
}
