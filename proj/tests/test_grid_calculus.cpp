#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "carleman_lab/grid_calculus.hpp"

using namespace carleman_lab;

namespace {

DiscreteField random_field(const GridSpec& g, std::mt19937_64& rng, bool vanish_at_ends) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  DiscreteField f(g);
  for (int i = 0; i <= g.interior() + 1; ++i) f[i] = dist(rng);
  if (vanish_at_ends) {
    f[0] = 0.0;
    f[g.interior() + 1] = 0.0;
  }
  return f;
}

}  // namespace

TEST(Grid, StepAndNodes) {
  const auto g = make_grid(1.0, 3);
  EXPECT_DOUBLE_EQ(g.h(), 0.25);
  const auto xs = g.nodes();
  ASSERT_EQ(xs.size(), 5u);
  const double expected[] = {0.0, 0.25, 0.5, 0.75, 1.0};
  for (int i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(xs[static_cast<std::size_t>(i)], expected[i]);

  const auto g7 = make_grid(1.0, 7);
  EXPECT_DOUBLE_EQ(g7.h(), 0.125);
  EXPECT_DOUBLE_EQ(g7.x(4), 0.5);
}

TEST(Grid, RejectsBadArguments) {
  EXPECT_THROW(make_grid(2.0, 1), InvalidArgument);
  EXPECT_THROW(make_grid(0.0, 4), InvalidArgument);
  EXPECT_THROW(make_grid(-1.0, 4), InvalidArgument);
}

TEST(Grid, LastNodeIsLengthAndNodesIncrease) {
  for (int n : {2, 5, 31, 100, 511}) {
    const auto g = make_grid(0.7, n);
    EXPECT_LE(std::abs(g.x(n + 1) - 0.7), 1e-16 * 0.7);
    for (int i = 0; i <= n; ++i) EXPECT_LT(g.x(i), g.x(i + 1));
  }
}

TEST(Grid, FieldRejectsWrongLengthAndNonFinite) {
  const auto g = make_grid(1.0, 3);
  EXPECT_THROW(DiscreteField(g, std::vector<double>(4, 0.0)), InvalidArgument);
  EXPECT_THROW(FieldOnMinus(g, std::vector<double>(5, 0.0)), InvalidArgument);
  EXPECT_THROW(DiscreteField(g, std::vector<double>{0, 1, NAN, 2, 3}), InvalidArgument);
}

TEST(Operators, ConstantAndLinearFields) {
  const auto g = make_grid(1.0, 3);
  const DiscreteField c(g, 3.5);
  const auto dc = diff_plus(c);
  for (double v : dc.values()) EXPECT_EQ(v, 0.0);

  const auto lin = DiscreteField::sample(g, [](double x) { return x; });
  const auto dp = diff_plus(lin);
  EXPECT_EQ(dp.first(), 0);
  EXPECT_EQ(dp.last(), 3);
  for (int i = 0; i <= 3; ++i) EXPECT_DOUBLE_EQ(dp[i], 1.0);
}

TEST(Operators, LaplacianOfQuadraticIsTwo) {
  for (int n : {3, 7}) {  // dyadic h: exact arithmetic
    const auto g = make_grid(1.0, n);
    const auto q = DiscreteField::sample(g, [](double x) { return x * x; });
    const auto lap = laplacian(q);
    for (int i = 1; i <= n; ++i) EXPECT_EQ(lap[i], 2.0);
  }
  const auto g = make_grid(1.3, 40);
  const auto lap = laplacian(DiscreteField::sample(g, [](double x) { return x * x; }));
  for (int i = 1; i <= 40; ++i) EXPECT_NEAR(lap[i], 2.0, 1e-9);
}

TEST(Operators, ForwardDifferenceByHand) {
  const auto g = make_grid(1.0, 3);
  const DiscreteField u(g, {0.0, 1.0 / 16, 4.0 / 16, 9.0 / 16, 16.0 / 16});
  const auto dp = diff_plus(u);
  const double expected[] = {0.25, 0.75, 1.25, 1.75};
  for (int i = 0; i <= 3; ++i) EXPECT_DOUBLE_EQ(dp[i], expected[i]);
}

TEST(Operators, IndexRanges) {
  const auto g = make_grid(1.0, 6);
  const DiscreteField u(g, 1.0);
  EXPECT_EQ(avg_plus(u).first(), 0);
  EXPECT_EQ(avg_plus(u).last(), 6);
  EXPECT_EQ(avg_minus(u).first(), 1);
  EXPECT_EQ(avg_minus(u).last(), 7);
  EXPECT_EQ(diff_minus(u).first(), 1);
  EXPECT_EQ(diff_minus(u).last(), 7);
  EXPECT_EQ(avg_center(u).first(), 1);
  EXPECT_EQ(avg_center(u).last(), 6);
  EXPECT_EQ(diff_center(u).size(), 6u);
  EXPECT_EQ(laplacian(u).size(), 6u);
}

TEST(Operators, CompositionsMatchNodeByNode) {
  std::mt19937_64 rng(7);
  const auto g = make_grid(1.0, 50);
  const auto u = random_field(g, rng, false);
  const auto lap = laplacian(u);
  const auto composed = diff_plus(diff_minus(u));
  const auto dc = diff_center(u);
  const auto am = avg_minus(diff_plus(u));
  for (int i = 1; i <= 50; ++i) {
    EXPECT_NEAR(lap[i], composed[i], 1e-12 * (1.0 + std::abs(lap[i])));
    EXPECT_NEAR(dc[i], am[i], 1e-12 * (1.0 + std::abs(dc[i])));
  }
}

TEST(Operators, Linearity) {
  std::mt19937_64 rng(11);
  const auto g = make_grid(2.0, 33);
  const auto u = random_field(g, rng, false);
  const auto v = random_field(g, rng, false);
  const double alpha = 1.7;
  const double beta = -0.3;
  const auto w = alpha * u + beta * v;
  auto check = [&](const auto& lhs, const auto& a, const auto& b) {
    for (int i = lhs.first(); i <= lhs.last(); ++i) {
      const double rhs = alpha * a[i] + beta * b[i];
      EXPECT_NEAR(lhs[i], rhs, 1e-12 * (1.0 + std::abs(rhs)));
    }
  };
  check(avg_plus(w), avg_plus(u), avg_plus(v));
  check(avg_minus(w), avg_minus(u), avg_minus(v));
  check(avg_center(w), avg_center(u), avg_center(v));
  check(diff_plus(w), diff_plus(u), diff_plus(v));
  check(diff_minus(w), diff_minus(u), diff_minus(v));
  check(diff_center(w), diff_center(u), diff_center(v));
  check(laplacian(w), laplacian(u), laplacian(v));
}

TEST(Integrals, ByHand) {
  const auto g = make_grid(1.0, 3);
  EXPECT_DOUBLE_EQ(integrate_Gh(DiscreteField(g, 1.0)), 0.75);
  EXPECT_DOUBLE_EQ(integrate_Gh_minus(FieldOnMinus(g, 1.0)), 1.0);
  const auto lin = DiscreteField::sample(g, [](double x) { return x; });
  EXPECT_DOUBLE_EQ(integrate_Gh(lin), 0.375);
}

TEST(Norms, ByHand) {
  const auto g = make_grid(1.0, 3);
  const auto z = norms(DiscreteField(g, 0.0));
  EXPECT_EQ(z.l2, 0.0);
  EXPECT_EQ(z.linf, 0.0);
  EXPECT_EQ(z.h1, 0.0);
  EXPECT_EQ(z.h2, 0.0);

  const auto one = norms(DiscreteField(g, 1.0));
  EXPECT_DOUBLE_EQ(one.l2, std::sqrt(0.75));
  EXPECT_DOUBLE_EQ(one.linf, 1.0);

  // u = x: ∫_{G_h^-}|D⁺u|² = 4 · 0.25 · 1 = 1, ∫_{G_h}|u|² = 0.25 (1/16 + 4/16 + 9/16).
  const auto lin = norms(DiscreteField::sample(g, [](double x) { return x; }));
  EXPECT_DOUBLE_EQ(lin.h1 * lin.h1, 1.0 + 0.21875);
  EXPECT_DOUBLE_EQ(lin.h2 * lin.h2, 1.0 + 0.21875);  // Δ_h of a linear field vanishes
  EXPECT_DOUBLE_EQ(lin.linf, 0.75);
}

TEST(Identities, ZeroFieldsGiveZeroResiduals) {
  const auto g = make_grid(1.0, 8);
  const auto rep = verify_identities(DiscreteField(g, 0.0), DiscreteField(g, 0.0));
  EXPECT_EQ(rep.results.size(), 11u);
  for (const auto& r : rep.results) {
    ASSERT_TRUE(r.residual.has_value()) << r.name;
    EXPECT_EQ(*r.residual, 0.0) << r.name;
  }
}

TEST(Identities, LinearAndBoundaryVanishingQuadratic) {
  const auto g = make_grid(1.0, 15);
  const auto u = DiscreteField::sample(g, [](double x) { return 2.0 * x - 0.3; });
  auto v = DiscreteField::sample(g, [](double x) { return x * (1.0 - x); });
  v[16] = 0.0;
  const auto rep = verify_identities(u, v);
  EXPECT_TRUE(rep.skipped().empty());
  EXPECT_LE(rep.max_residual(), 1e-12);
}

TEST(Identities, RandomFieldsAcrossResolutions) {
  std::mt19937_64 rng(2024);
  for (int n : {4, 8, 16, 32, 64, 128, 256, 512}) {
    const auto g = make_grid(1.0, n);
    for (int trial = 0; trial < 5; ++trial) {
      const auto u = random_field(g, rng, false);
      const auto v = random_field(g, rng, true);
      const auto rep = verify_identities(u, v);
      ASSERT_TRUE(rep.skipped().empty());
      for (const auto& r : rep.results) EXPECT_LE(*r.residual, 1e-12) << r.name << " N=" << n;
    }
  }
}

TEST(Identities, BoundaryViolationSkipsThreeIdentities) {
  std::mt19937_64 rng(3);
  const auto g = make_grid(1.0, 10);
  const auto u = random_field(g, rng, false);
  const auto v = random_field(g, rng, false);
  const auto rep = verify_identities(u, v);
  const auto skipped = rep.skipped();
  ASSERT_EQ(skipped.size(), 3u);
  EXPECT_EQ(skipped[0], "sbp_advective");
  EXPECT_EQ(skipped[1], "sbp_energy");
  EXPECT_EQ(skipped[2], "sbp_transport_laplacian");
  // The Laplacian integration by parts carries its own boundary terms.
  for (const auto& r : rep.results) {
    if (r.name == "sbp_laplacian") {
      EXPECT_LE(*r.residual, 1e-12);
    }
  }
  EXPECT_THROW(rep.require_complete(), PreconditionViolation);
}

TEST(TimeNorms, RectangleRule) {
  const std::vector<double> v{1.0, 2.0, 3.0};
  EXPECT_DOUBLE_EQ(time_l2_norm(v, 0.5), std::sqrt(0.5 * (1.0 + 4.0)));
  // differences (2-1)/0.5 = 2, (3-2)/0.5 = 2
  EXPECT_DOUBLE_EQ(time_h1_norm(v, 0.5), std::sqrt(0.5 * (1.0 + 4.0 + 4.0 + 4.0)));
}

TEST(RawKernels, MatchFieldNorms) {
  std::mt19937_64 rng(5);
  const auto g = make_grid(1.0, 20);
  const auto u = random_field(g, rng, false);
  const auto nm = norms(u);
  EXPECT_NEAR(h2_energy(u.values(), g.h(), 1, 20), nm.h2 * nm.h2, 1e-10 * nm.h2 * nm.h2);
  EXPECT_NEAR(l2_energy(u.values(), g.h()), nm.l2 * nm.l2, 1e-14);
}
