// Small tour of the library: a g-expectation, a quote, and the optimal
// strategy of a large trader against an exponential-utility desk.

#include <cstdio>

#include "impact/impact.hpp"

using namespace impact;

int main() {
  const auto lat = build_binomial(1.0, 200);
  const auto s = NodeProcess::of_brownian(lat, [](double w) { return w; });

  // entropic valuation of W_T
  const auto ent = solve_bsde(lat, Driver::entropic(1.0), s);
  std::printf("entropic Pi_0(W_T)       = %.6f\n", ent.pi.at(0, 0));

  // selling price of y units with an empty book
  const auto desk = Driver::drifted_quadratic(1.0, 0.3);
  for (double y : {0.5, 1.0, 2.0})
    std::printf("P_0(0, %.1f)              = %.6f\n", y, price_curve(lat, desk, s, 0, 0, 0.0, y));

  // exponential utility: explicit and iterated solutions
  MarketSpec m;
  m.gamma = 1.0;
  m.eta = PiecewiseConstant::constant(0.3);
  m.utility = Utility::cara(2.0);
  const auto triple = exponential_triple(lat, m);
  const auto cara = solve_fbsde_cara(lat, desk, 2.0, 0.0);
  std::printf("Z* explicit / iterated   = %.6f / %.6f\n", triple.h.at(0, 0), cara.h.at(0, 0));
  std::printf("zeta_0                   = %.6f\n", cara.zeta.at(0, 0));
  std::printf("martingale residual      = %.2e\n", cara.report.martingale_residual);

  // wealth-dependent risk aversion needs the coupled solver
  const auto lat50 = build_binomial(1.0, 50);
  const auto mixed = solve_fbsde_picard(lat50, desk, Utility::mixed_exponential(1.0, 0.5, 3.0), 0.0, 1e-9, 60, 0.5);
  std::printf("mixed utility: %d iterations, Z*_0 = %.6f, converged %s\n", mixed.iterations, mixed.h.at(0, 0),
              mixed.converged ? "yes" : "no");

  // value function on a wealth grid
  const auto dp = dp_value(TimeGrid(1.0, 100), XGrid{-3.0, 3.0, 201}, desk, m.utility);
  std::printf("V(0, 0) grid / exact     = %.6f / %.6f\n", dp.surface.interpolant(0)(0.0), -std::exp(-0.03));
  return 0;
}
