#include <gtest/gtest.h>

#include <cfloat>
#include <cmath>

#include "carleman_lab/carleman_verifier.hpp"

using namespace carleman_lab;

namespace {

WeightSpec regular(double x_star, double beta, double lambda, double s) {
  return WeightSpec{RegularProfile{x_star}, 0.5, beta, lambda, s};
}

SPDEProblem tiny_problem(const GridSpec& g, const TimeGrid& tg) {
  SPDEProblem p;
  p.grid = g;
  p.time = tg;
  p.f = SpaceTimeFunction::space_time([](double x, double t) { return 1.0 + x - t; });
  p.g = SpaceTimeFunction::space_time([](double x, double t) { return x * x + 0.5 * t; });
  p.initial = DiscreteField::sample(g, [](double x) { return x * (1.0 - x); });
  return p;
}

struct Oracle {
  double lhs[4] = {0, 0, 0, 0};
  double rhs[3] = {0, 0, 0};
  double terminal_sq = 0;
  double terminal_weighted = 0;
};

// Unscaled θ² = e^{2sφ}, each integrand written out on its own.
Oracle brute_force(const WeightSpec& w, const SpaceTimeField& y, const GridSpec& g, const TimeGrid& tg) {
  Oracle o;
  const double h = g.h();
  const double dt = tg.dt();
  const double s = w.s;
  const double lam = w.lambda;
  const int nn = g.interior();
  auto phi = [&](int n, int i) {
    const double x = g.x(i);
    const double t = tg.t(n);
    const double xs = std::get<RegularProfile>(w.profile).x_star;
    return std::exp(lam * ((x - xs) * (x - xs) - w.beta * (t - w.t0) * (t - w.t0)));
  };
  auto th2 = [&](int n, int i) { return std::exp(2 * s * phi(n, i)); };
  auto f = [&](int n, int i) { return 1.0 + g.x(i) - tg.t(n); };
  auto gg = [&](int n, int i) { return g.x(i) * g.x(i) + 0.5 * tg.t(n); };
  for (int n = 0; n < tg.steps(); ++n) {
    for (int i = 1; i <= nn; ++i) {
      const double lap = (y.at(n, i + 1) - 2 * y.at(n, i) + y.at(n, i - 1)) / (h * h);
      o.lhs[0] += dt * h * (1.0 / (s * phi(n, i))) * th2(n, i) * lap * lap;
      o.lhs[2] += dt * h * std::pow(s, 3) * std::pow(lam, 4) * std::pow(phi(n, i), 3) * th2(n, i) * y.at(n, i) * y.at(n, i);
      o.rhs[0] += dt * h * th2(n, i) * f(n, i) * f(n, i);
    }
    for (int i = 0; i <= nn; ++i) {
      const double dp = (y.at(n, i + 1) - y.at(n, i)) / h;
      const double dg = (gg(n, i + 1) - gg(n, i)) / h;
      o.lhs[1] += dt * h * s * lam * lam * phi(n, i) * th2(n, i) * dp * dp;
      o.lhs[3] += dt * h * s * lam * lam * phi(n, i) * th2(n, i) * gg(n, i) * gg(n, i);
      o.rhs[1] += dt * h * s * phi(n, i) * th2(n, i) * dg * dg;
    }
    const double flux = (y.at(n, nn + 1) - y.at(n, nn)) / h;
    o.rhs[2] += dt * s * lam * phi(n, nn + 1) * th2(n, nn + 1) * flux * flux;
  }
  for (int i = 1; i <= nn; ++i) {
    const double v = y.at(tg.steps(), i);
    o.terminal_sq += h * v * v;
    o.terminal_weighted += h * th2(tg.steps(), i) * v * v;
  }
  return o;
}

void expect_rel(double got, double want, double tol) {
  EXPECT_LE(std::abs(got - want), tol * std::abs(want)) << got << " vs " << want;
}

}  // namespace

TEST(CarlemanTerms, ZeroSolutionAndSources) {
  const auto g = make_grid(1.0, 8);
  const TimeGrid tg(1.0, 10);
  SPDEProblem p;
  p.grid = g;
  p.time = tg;
  const auto e = ensemble_run(p, 3, 1);
  const auto w = CarlemanWeights::from_spec(regular(-0.2, 1.0, 1.0, 2.0), g, tg);
  for (const auto& est : weighted_lhs(e, w, SpaceTimeFunction())) EXPECT_EQ(est.mean, 0.0);
  for (const auto& est : weighted_rhs(e, w, SpaceTimeFunction(), SpaceTimeFunction())) EXPECT_EQ(est.mean, 0.0);
}

TEST(CarlemanTerms, BruteForceTinyInstance) {
  const auto g = make_grid(1.0, 4);
  const TimeGrid tg(1.0, 2);
  const auto p = tiny_problem(g, tg);
  const auto e = ensemble_run(p, 1, 9);
  const auto spec = regular(-0.3, 0.8, 1.5, 2.5);
  const auto w = CarlemanWeights::from_spec(spec, g, tg);
  const double scale = std::exp(w.log_scale);
  const auto lhs = weighted_lhs(e, w, p.g);
  RhsOptions o;
  o.c_lambda = 1.7;
  const auto rhs = weighted_rhs(e, w, p.f, p.g, o);
  const auto ref = brute_force(spec, e.solutions[0], g, tg);
  for (std::size_t j = 0; j < 4; ++j) expect_rel(lhs[j].mean * scale, ref.lhs[j], 1e-12);
  for (std::size_t j = 0; j < 3; ++j) expect_rel(rhs[j].mean * scale, ref.rhs[j], 1e-12);
  expect_rel(rhs[3].mean * scale, 2.5 * 2.5 * std::exp(1.7 * 2.5) * ref.terminal_sq, 1e-12);

  o.suppressed_terminal = true;
  const auto rs = weighted_rhs(e, w, p.f, p.g, o);
  expect_rel(rs[3].mean * scale, 2.5 * 2.5 * ref.terminal_weighted, 1e-12);
}

TEST(CarlemanTerms, BoundaryDataTerm) {
  const auto g = make_grid(1.0, 6);
  const TimeGrid tg(1.0, 8);
  SPDEProblem p;
  p.grid = g;
  p.time = tg;
  p.gamma_right = [](double t) { return t * t; };
  const auto e = ensemble_run(p, 1, 2);
  const auto w = CarlemanWeights::from_spec(regular(-0.3, 0.8, 1.0, 2.0), g, tg);
  RhsOptions o;
  o.gamma_right = p.gamma_right;
  const auto rhs = weighted_rhs(e, w, SpaceTimeFunction(), SpaceTimeFunction(), o);
  std::vector<double> gam(9);
  for (int n = 0; n <= 8; ++n) gam[static_cast<std::size_t>(n)] = tg.t(n) * tg.t(n);
  const double h1 = time_h1_norm(gam, tg.dt());
  expect_rel(rhs[4].mean * std::exp(w.log_scale), 8.0 * std::exp(2.0) * h1 * h1, 1e-12);
}

TEST(CarlemanTerms, FrozenWeightsPrefactorScaling) {
  const auto g = make_grid(1.0, 6);
  const TimeGrid tg(1.0, 4);
  const auto p = tiny_problem(g, tg);
  const auto e = ensemble_run(p, 2, 4);
  CarlemanWeights w;
  w.grid = g;
  w.time = tg;
  w.lambda = 1.0;
  w.phi = SpaceTimeField(g, tg);
  w.theta2 = SpaceTimeField(g, tg);
  for (double& v : w.phi.raw()) v = 1.0;
  for (double& v : w.theta2.raw()) v = 1.0;
  w.s = 1.5;
  const auto a = weighted_lhs(e, w, p.g);
  w.s = 3.0;
  const auto b = weighted_lhs(e, w, p.g);
  EXPECT_NEAR(b[2].mean / a[2].mean, 8.0, 1e-12);
  EXPECT_NEAR(b[1].mean / a[1].mean, 2.0, 1e-12);
  EXPECT_NEAR(b[0].mean / a[0].mean, 0.5, 1e-12);
}

TEST(CarlemanTerms, SpatiallyConstantSourceHasNoDifferenceTerm) {
  const auto g = make_grid(1.0, 10);
  const TimeGrid tg(1.0, 20);
  SPDEProblem p;
  p.grid = g;
  p.time = tg;
  p.g = SpaceTimeFunction::constant(0.7);
  const auto e = ensemble_run(p, 4, 3);
  const auto w = CarlemanWeights::from_spec(regular(-0.2, 1.0, 1.0, 2.0), g, tg);
  const auto rhs = weighted_rhs(e, w, SpaceTimeFunction(), p.g);
  EXPECT_EQ(rhs[1].mean, 0.0);
  for (const auto& t : weighted_lhs(e, w, p.g)) EXPECT_GE(t.mean, 0.0);
  for (const auto& t : rhs) EXPECT_GE(t.mean, 0.0);
}

TEST(CarlemanTerms, MismatchedGridsRejected) {
  const TimeGrid tg(1.0, 4);
  SPDEProblem p;
  p.grid = make_grid(1.0, 6);
  p.time = tg;
  const auto e = ensemble_run(p, 1, 1);
  const auto w = CarlemanWeights::from_spec(regular(-0.2, 1.0, 1.0, 2.0), make_grid(1.0, 7), tg);
  EXPECT_THROW(weighted_lhs(e, w, SpaceTimeFunction()), InvalidArgument);
}

TEST(CarlemanReport, DegenerateAndRatio) {
  const auto g = make_grid(1.0, 6);
  const TimeGrid tg(1.0, 4);
  const auto w = CarlemanWeights::from_spec(regular(-0.2, 1.0, 1.0, 2.0), g, tg);
  const auto zero = make_report(std::vector<PathTerms>(5), w, {});
  EXPECT_TRUE(zero.degenerate);
  EXPECT_FALSE(zero.ratio.has_value());

  std::vector<PathTerms> t(3);
  for (std::size_t m = 0; m < 3; ++m) {
    t[m].lhs = {1.0, 0.0, 1.0, 0.0};
    t[m].rhs = {2.0 + m, 0.0, 0.0};
  }
  const auto r = make_report(t, w, {});
  ASSERT_TRUE(r.ratio.has_value());
  EXPECT_NEAR(*r.ratio, 2.0 / 3.0, 1e-15);
  EXPECT_GT(*r.ratio_std_error, 0.0);
  EXPECT_FALSE(r.degenerate);
}

TEST(CarlemanSweep, ZeroFamilyIsDegenerateEverywhere) {
  const auto fam = zero_family(0.5, 1.0, 16);
  const auto r = carleman_sweep(fam, {14.0, 20.0}, {1.0}, {7, 15}, 3, 100.0, 1);
  ASSERT_EQ(r.cells.size(), 4u);
  for (const auto& c : r.cells) {
    ASSERT_TRUE(c.report.has_value());
    EXPECT_TRUE(c.report->degenerate);
  }
  EXPECT_FALSE(r.spread(1.0, 1.0).has_value());
}

TEST(CarlemanSweep, WindowAndSuppressionSkips) {
  const auto fam = driven_noise_family(0.5, 1.0, 32, 3, 5);
  const auto r = carleman_sweep(fam, {5.0, 14.0, 30.0}, {1.0}, {15}, 4, 12.5, 1);
  ASSERT_EQ(r.cells.size(), 3u);
  EXPECT_FALSE(r.cells[0].report.has_value());  // s φ_max too small to suppress
  EXPECT_NE(r.cells[0].skip_reason.find("suppression"), std::string::npos);
  ASSERT_TRUE(r.cells[1].report.has_value());
  EXPECT_FALSE(r.cells[2].report.has_value());
  EXPECT_NE(r.cells[2].skip_reason.find("sqrt(eps_cfg/h)"), std::string::npos);

  const auto& rep = *r.cells[1].report;
  ASSERT_TRUE(rep.ratio.has_value());
  EXPECT_TRUE(std::isfinite(*rep.ratio));
  EXPECT_GT(*rep.ratio, 0.0);
  // Suppressed terminal term is negligible next to the integrals.
  EXPECT_LT(rep.rhs[3].mean, 1e-6 * rep.rhs_sum);
}

TEST(CarlemanSweep, SerialAndParallelAgree) {
  const auto fam = driven_noise_family(0.5, 1.0, 64, 3, 5);
  SweepOptions serial;
  SweepOptions par;
  par.threads = 4;
  par.c_lambda_grid = serial.c_lambda_grid = {0.5, 1.0, 2.0};
  serial.suppress_terminal = par.suppress_terminal = false;
  const auto a = carleman_sweep(fam, {4.0, 8.0}, {1.0, 2.0}, {15, 31}, 9, 12.5, 3, serial);
  const auto b = carleman_sweep(fam, {4.0, 8.0}, {1.0, 2.0}, {15, 31}, 9, 12.5, 3, par);
  ASSERT_EQ(a.cells.size(), b.cells.size());
  for (std::size_t k = 0; k < a.cells.size(); ++k) {
    ASSERT_TRUE(a.cells[k].report && b.cells[k].report);
    EXPECT_EQ(*a.cells[k].report->ratio, *b.cells[k].report->ratio);
  }
  // Only the terminal term depends on c_λ.
  EXPECT_EQ(a.cells[0].report->lhs_sum, a.cells[1].report->lhs_sum);
  EXPECT_LT(a.cells[0].report->rhs[3].mean, a.cells[2].report->rhs[3].mean);
}

TEST(CarlemanSweep, RejectsNonzeroInitialData) {
  CarlemanFamily fam = zero_family(0.5, 1.0, 8);
  fam.build = [](const GridSpec& g, const TimeGrid& t) {
    SPDEProblem p;
    p.grid = g;
    p.time = t;
    p.initial = DiscreteField(g, 1.0);
    return p;
  };
  EXPECT_THROW(carleman_sweep(fam, {14.0}, {1.0}, {7}, 2, 12.5, 1), InvalidArgument);
}

TEST(CarlemanWeights, OverflowRaisesRangeError) {
  const auto g = make_grid(0.5, 7);
  const TimeGrid tg(1.0, 8);
  const auto w = regular(-0.05, 1.0, 10.0, 50.0);
  // φ_max = e^{10 * 0.55^2}, so s_max = log(DBL_MAX) / φ_max ≈ 34.46
  const double s_max = std::log(DBL_MAX) / std::exp(10.0 * 0.55 * 0.55);
  EXPECT_NEAR(max_admissible_s(w, g, tg), s_max, 1e-9 * s_max);
  try {
    CarlemanWeights::from_spec(w, g, tg);
    FAIL() << "expected RangeError";
  } catch (const RangeError& e) {
    EXPECT_EQ(e.s(), 50.0);
    EXPECT_EQ(e.lambda(), 10.0);
  }
  EXPECT_NO_THROW(CarlemanWeights::from_spec(regular(-0.05, 1.0, 10.0, 30.0), g, tg));
}

TEST(CarlemanSweep, OverflowBoundSkipsAndReports) {
  const auto fam = driven_noise_family(0.5, 1.0, 8, 3, 5);
  const auto r = carleman_sweep(fam, {20.0, 50.0}, {10.0}, {7}, 2, 1e7, 1);
  ASSERT_EQ(r.cells.size(), 2u);
  ASSERT_TRUE(r.cells[0].report.has_value());
  ASSERT_TRUE(r.cells[0].report->ratio.has_value());
  EXPECT_TRUE(std::isfinite(*r.cells[0].report->ratio));
  EXPECT_FALSE(r.cells[1].report.has_value());
  EXPECT_NE(r.cells[1].skip_reason.find("overflow-safe bound 34.4"), std::string::npos) << r.cells[1].skip_reason;
}
