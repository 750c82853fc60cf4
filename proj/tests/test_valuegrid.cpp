#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "impact/closedform.hpp"
#include "impact/parallel.hpp"
#include "impact/valuegrid.hpp"
#include "oracles.hpp"

using namespace impact;

namespace {

std::vector<double> samples(double lo, double hi, int m) {
  std::vector<double> g(m);
  for (int i = 0; i < m; ++i) g[i] = lo + (hi - lo) * i / (m - 1);
  return g;
}

}  // namespace

TEST(LvOperator, QuadraticClosedFormMatchesSearch) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> vx(0.1, 5.0), vxx(-5.0, -0.1), ax(-1.0, 1.0);
  for (const auto& d : {Driver::entropic(1.0), Driver::drifted_quadratic(1.0, 0.3), Driver::linear(0.4), Driver::zero()})
    for (int i = 0; i < 30; ++i) {
      const double a = vx(rng), b = vxx(rng), c = ax(rng);
      const auto exact = lv_at(d, 0.0, a, b, c, ControlSpec::interval());
      const auto search = lv_at(d, 0.0, a, b, c, ControlSpec::interval(), true, 10.0);
      EXPECT_NEAR(exact.lv, search.lv, 1e-6) << d.name();
      EXPECT_NEAR(exact.upsilon, search.upsilon, 1e-6) << d.name();
    }
}

TEST(LvOperator, HomogeneousThetaPlusClosedFormMatchesSearch) {
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> vx(0.1, 5.0), vxx(-5.0, -0.1), ax(-1.0, 1.0);
  const auto d = Driver::homogeneous(0.1);
  for (double zm : {1.0, 0.5})
    for (int i = 0; i < 30; ++i) {
      const double a = vx(rng), b = vxx(rng), c = ax(rng);
      const auto exact = lv_at(d, 0.0, a, b, c, ControlSpec::theta_plus(zm));
      const auto search = lv_at(d, 0.0, a, b, c, ControlSpec::theta_plus(zm), true, 10.0);
      EXPECT_NEAR(exact.lv, search.lv, 1e-6);
      EXPECT_NEAR(exact.theta_hat, search.theta_hat, 1e-6);
      EXPECT_GE(exact.theta_hat, 0.0);
    }
}

TEST(LvOperator, NoDriftGivesZeroControl) {
  const auto r = lv_at(Driver::entropic(1.0), 0.0, 2.0, -4.0, 0.0, ControlSpec::interval());
  EXPECT_EQ(r.upsilon, 0.0);
  EXPECT_EQ(r.lv, 0.0);
}

TEST(LvOperator, RequiresConcavity) {
  try {
    (void)lv_at(Driver::entropic(1.0), 0.0, 1.0, 0.0, 0.0, ControlSpec::interval());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::concavity_violation);
  }
}

TEST(AnalyticCara, SurfaceSolvesTheEquation) {
  const auto ts = samples(0.0, 1.0, 11), xs = samples(-2.0, 2.0, 21);
  const auto s = cara_value_surface(1.0, PiecewiseConstant::constant(0.3), 2.0, 1.0);
  EXPECT_LE(bspde_residual(s, Driver::drifted_quadratic(1.0, 0.3), ts, xs), 1e-13);
  const PiecewiseConstant eta({0.0, 0.5}, {0.3, -0.2});
  const auto s2 = cara_value_surface(1.0, eta, 2.0, 1.0);
  EXPECT_LE(bspde_residual(s2, Driver::drifted_quadratic(1.0, eta), ts, xs), 1e-13);
  // the wrong driver leaves a residual
  EXPECT_GT(bspde_residual(s, Driver::drifted_quadratic(1.0, 0.5), ts, xs), 1e-3);
}

TEST(ValueSurfaceTest, StencilOrder) {
  auto f = [](double x) { return -std::exp(-2.0 * x); };
  auto fx = [](double x) { return 2.0 * std::exp(-2.0 * x); };
  auto fxx = [](double x) { return -4.0 * std::exp(-2.0 * x); };
  std::vector<double> ex, exx;
  for (int nx : {51, 101, 201, 401}) {
    ValueSurface s(TimeGrid(1.0, 1), XGrid{-1.0, 1.0, nx});
    for (int i = 0; i < nx; ++i) s.row(0)[i] = f(s.xgrid().x(i));
    // fixed abscissae shared by every grid, so the error constant does not move
    double e1 = 0.0, e2 = 0.0;
    for (double x : {-0.6, 0.0, 0.6}) {
      const int i = static_cast<int>(std::lround((x + 1.0) / s.xgrid().dx()));
      e1 = std::max(e1, std::abs(s.vx(0, i) - fx(x)));
      e2 = std::max(e2, std::abs(s.vxx(0, i) - fxx(x)));
    }
    ex.push_back(e1);
    exx.push_back(e2);
  }
  for (std::size_t i = 1; i < ex.size(); ++i) {
    EXPECT_GE(std::log2(ex[i - 1] / ex[i]), 1.9);
    EXPECT_GE(std::log2(exx[i - 1] / exx[i]), 1.9);
  }
}

TEST(ValueSurfaceTest, GridValidation) {
  EXPECT_THROW(ValueSurface(TimeGrid(1.0, 2), XGrid{-1.0, 1.0, 5}), Error);
  EXPECT_THROW(ValueSurface(TimeGrid(1.0, 2), XGrid{1.0, -1.0, 51}), Error);
  EXPECT_EQ(XGrid({-1.0, 1.0, 11}).x(10), 1.0);
}

TEST(DpValue, NoTradeDriverKeepsUtility) {
  const TimeGrid tg(1.0, 20);
  const XGrid xg{-2.0, 2.0, 81};
  const auto u = Utility::cara(2.0);
  const auto dp = dp_value(tg, xg, Driver::entropic(1.0), u);
  for (int k = 0; k < 20; ++k)
    for (int i = 0; i < xg.n_x; ++i) {
      EXPECT_EQ(dp.policy.upsilon[k][i], 0.0);
      EXPECT_NEAR(dp.surface.v(k, i), u.u(xg.x(i)), 1e-14 * std::abs(u.u(xg.x(i))));
    }
}

TEST(DpValue, ApproachesCaraSurface) {
  const double eta = 0.3, gamma = 1.0, ga = 2.0;
  const auto exact = cara_value_surface(gamma, PiecewiseConstant::constant(eta), ga, 1.0);
  double prev = INFINITY;
  for (int nt : {25, 50, 100}) {
    const TimeGrid tg(1.0, nt);
    const XGrid xg{-3.0, 3.0, 2 * nt + 1};
    const auto dp = dp_value(tg, xg, Driver::drifted_quadratic(gamma, eta), Utility::cara(ga));
    double err = 0.0, pol = 0.0;
    for (int i = dp.surface.interior_begin(); i < dp.surface.interior_end(); ++i) {
      const double x = xg.x(i);
      if (std::abs(x) > 2.0) continue;
      err = std::max(err, std::abs(dp.surface.v(0, i) / exact.v(0.0, x) - 1.0));
      pol = std::max(pol, std::abs(dp.policy.upsilon[0][i] - eta / (gamma + ga)));
    }
    EXPECT_LE(err, 2e-3) << nt;
    EXPECT_LE(pol, 2e-3) << nt;
    EXPECT_LT(err, prev) << nt;
    prev = err;
  }
}

TEST(DpValue, ResidualShrinksUnderRefinement) {
  std::vector<double> res;
  for (int nt : {25, 50, 100}) {
    const auto dp = dp_value(TimeGrid(1.0, nt), XGrid{-3.0, 3.0, 2 * nt + 1}, Driver::drifted_quadratic(1.0, 0.3),
                             Utility::cara(2.0));
    const auto r = bspde_residual(dp.surface, Driver::drifted_quadratic(1.0, 0.3));
    EXPECT_GT(r.points, 0);
    EXPECT_EQ(r.excluded_band, 0);
    res.push_back(r.max_residual);
  }
  for (std::size_t i = 1; i < res.size(); ++i) EXPECT_GE(std::log2(res[i - 1] / res[i]), 1.0);
}

TEST(DpValue, ResidualFieldMarksSkippedPoints) {
  const auto dp = dp_value(TimeGrid(1.0, 10), XGrid{-2.0, 2.0, 41}, Driver::entropic(1.0), Utility::cara(1.0));
  const auto r = bspde_residual(dp.surface, Driver::entropic(1.0));
  EXPECT_TRUE(std::isnan(r.field[0][20]));
  EXPECT_TRUE(std::isnan(r.field[5][0]));
  EXPECT_FALSE(std::isnan(r.field[5][20]));
  EXPECT_EQ(r.points, 9 * (41 - 2 * kBoundaryCells));
}

TEST(DpValue, HomogeneousWithoutEndowmentStaysInBand) {
  const auto dp = dp_value(TimeGrid(1.0, 20), XGrid{-2.0, 2.0, 41}, Driver::homogeneous(0.1), Utility::cara(2.0),
                           ControlSpec::theta_plus(1.0));
  for (const auto& row : dp.policy.theta_hat)
    for (double th : row) EXPECT_EQ(th, 0.0);
}

TEST(DpValue, RejectsRandomCoefficients) {
  const auto d = Driver::custom([](double, double z) { return z * z; }, [](double, double z) { return 2 * z; },
                                {false, false, true, false});
  try {
    (void)dp_value(TimeGrid(1.0, 4), XGrid{-1.0, 1.0, 21}, d, Utility::cara(1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::contract_violation);
  }
}

TEST(DpValue, ThreadCountDoesNotChangeResults) {
  const TimeGrid tg(1.0, 30);
  const XGrid xg{-3.0, 3.0, 121};
  const auto d = Driver::drifted_quadratic(1.0, 0.3);
  const auto u = Utility::mixed_exponential(1.0, 0.5, 3.0);
  set_max_threads(1);
  const auto a = dp_value(tg, xg, d, u);
  set_max_threads(4);
  const auto b = dp_value(tg, xg, d, u);
  set_max_threads(1);
  for (int k = 0; k <= 30; ++k) EXPECT_EQ(a.surface.row(k), b.surface.row(k));
}

TEST(SurfaceBridge, MatchesCaraTriple) {
  const int n = 100;
  const auto lat = build_binomial(1.0, n);
  MarketSpec m;
  m.gamma = 1.0;
  m.eta = PiecewiseConstant::constant(0.3);
  m.utility = Utility::cara(2.0);
  m.x0 = 0.0;
  const auto dp = dp_value(TimeGrid(1.0, n), XGrid{-3.0, 3.0, 2 * n + 1},
                           m.driver(), m.utility);
  const auto sol = fbsde_from_surface(dp, lat, m.driver(), m.utility, 0.0);
  const auto triple = exponential_triple(lat, m);
  EXPECT_LE(max_abs_diff(sol.h, triple.h), 1e-3);
  EXPECT_LE(max_abs_diff(sol.x, triple.x), 1e-3);
  EXPECT_LE(max_abs_diff(sol.zeta, triple.zeta), 1e-3);
  EXPECT_LE(sol.report.martingale_residual, 1e-3);
  EXPECT_LE(sol.report.foc_residual, 1e-3);
}

TEST(SurfaceBridge, MixedUtilityMatchesPicard) {
  const int n = 50;
  const auto lat = build_binomial(1.0, n);
  const auto d = Driver::drifted_quadratic(1.0, 0.3);
  const auto u = Utility::mixed_exponential(1.0, 0.5, 3.0);
  const auto dp = dp_value(TimeGrid(1.0, n), XGrid{-3.0, 3.0, 401}, d, u);
  const auto sol = fbsde_from_surface(dp, lat, d, u, 0.0);
  const auto picard = solve_fbsde_picard(lat, d, u, 0.0, 1e-10, 80, 0.5);
  EXPECT_LE(max_abs_diff(sol.h, picard.h), 1e-3);
  EXPECT_LE(max_abs_diff(sol.x, picard.x), 1e-3);
}

TEST(SurfaceBridge, GridMismatchRejected) {
  const auto dp = dp_value(TimeGrid(1.0, 10), XGrid{-2.0, 2.0, 41}, Driver::entropic(1.0), Utility::cara(1.0));
  EXPECT_THROW((void)fbsde_from_surface(dp, build_binomial(1.0, 12), Driver::entropic(1.0), Utility::cara(1.0), 0.0),
               Error);
}

TEST(SurfaceBridge, WealthLeavingGridRefused) {
  const auto d = Driver::drifted_quadratic(1.0, 0.3);
  const auto dp = dp_value(TimeGrid(1.0, 10), XGrid{-0.3, 0.3, 41}, d, Utility::cara(2.0));
  try {
    (void)fbsde_from_surface(dp, build_binomial(1.0, 10), d, Utility::cara(2.0), 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::extrapolation_refused);
  }
}
