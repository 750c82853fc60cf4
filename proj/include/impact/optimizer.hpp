#pragma once

// Optimal strategy of the Large Trader: the H-function, the coupled
// forward-backward system for (X, zeta, M), the CARA decoupling and the
// optimality checks.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "impact/driver.hpp"
#include "impact/error.hpp"
#include "impact/gexpect.hpp"
#include "impact/lattice.hpp"
#include "impact/market.hpp"
#include "impact/parallel.hpp"
#include "impact/utility.hpp"

namespace impact {

enum class StrategySet { theta, theta_plus };

inline std::string_view to_string(StrategySet s) { return s == StrategySet::theta ? "theta" : "theta_plus"; }

/// Growth constant of H in |m|: |H| <= C (1 + |m|).
inline double h_growth_constant(const Driver& driver, const Utility& utility, double t, double x, double zeta) {
  return std::max(1.0, std::abs(utility.psi1(x + zeta) * driver.grad(t, 0.0)));
}

/// Root of H -> -U'(x+zeta) g_z(t,H) + U''(x+zeta)(H+m) by bisection.
inline double solve_h_bisect(const Driver& driver, const Utility& utility, double t, double x, double zeta, double m) {
  require(driver.has_gradient(), ErrorKind::unsupported_operation, "H-function needs a differentiable driver");
  const double w = x + zeta;
  require(utility.u2(w) < 0.0, ErrorKind::contract_violation, "U'' must be negative");
  const double psi1 = utility.psi1(w);
  // G(H) = H + m - psi1 g_z(t,H) is increasing; it has the same roots as the condition above.
  auto G = [&](double h) { return h + m - psi1 * driver.grad(t, h); };
  double radius = 1.01 * (std::abs(m) + std::abs(psi1 * driver.grad(t, 0.0))) + 1e-12;
  double lo = -radius, hi = radius;
  int expansions = 0;
  while (!(G(lo) <= 0.0 && G(hi) >= 0.0)) {
    if (++expansions > 60)
      fail(ErrorKind::root_not_found, "no sign change of the H equation in [" + std::to_string(lo) + ", " +
                                          std::to_string(hi) + "]");
    lo *= 2.0;
    hi *= 2.0;
  }
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (G(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// H-function for differentiable drivers. Drivers of the form 1/2 c z^2 - e z
/// have the explicit root (-psi1 e - m) / (1 - psi1 c).
inline double solve_h(const Driver& driver, const Utility& utility, double t, double x, double zeta, double m) {
  double c = 0.0, e = 0.0;
  if (driver.quadratic_form(t, c, e)) {
    const double w = x + zeta;
    require(utility.u2(w) < 0.0, ErrorKind::contract_violation, "U'' must be negative");
    const double psi1 = utility.psi1(w);
    return (-psi1 * e - m) / (1.0 - psi1 * c);
  }
  return solve_h_bisect(driver, utility, t, x, zeta, m);
}

struct HomogeneousControl {
  double theta = 0.0;
  double h = 0.0;
  bool ambiguous = false;
};

/// Position and integrand for a positively homogeneous driver: first branch
/// theta > 0 along Z(-S), second branch theta < 0 along Z(S), else no trade.
inline HomogeneousControl solve_h_homogeneous(double z_minus, double z_plus, double g_minus, double g_plus,
                                              const Utility& utility, double x, double zeta, double m,
                                              StrategySet set = StrategySet::theta_plus) {
  require(z_minus != 0.0, ErrorKind::contract_violation, "Z(-S) must be non-zero");
  const double psi1 = utility.psi1(x + zeta);
  const double first = (-z_minus * m + psi1 * g_minus) / (z_minus * z_minus);
  double second = 0.0;
  bool second_active = false;
  if (set == StrategySet::theta && z_plus != 0.0) {
    second = -(-z_plus * m + psi1 * g_plus) / (z_plus * z_plus);
    second_active = second < 0.0;
  }
  HomogeneousControl out;
  if (first > 0.0) {
    out.theta = first;
    out.h = first * z_minus;
    out.ambiguous = second_active;
  } else if (second_active) {
    out.theta = second;
    out.h = -second * z_plus;
  }
  return out;
}

struct OptimalityReport {
  double martingale_residual = 0.0;           // max |E_k[R_{k+1}] - R_k|, R = U'(X + zeta)
  double martingale_residual_relative = 0.0;  // same, divided by R_k
  double foc_residual = 0.0;                  // differentiable drivers; equality part for homogeneous ones
  double slack_minus = 0.0;                   // min over no-trade nodes, must stay >= 0
  double slack_plus = 0.0;
  NodeProcess beta;                           // U''(X + zeta)(h + M)
};

struct FbsdeOptions {
  std::optional<StrategySet> set;         // default: theta_plus for homogeneous drivers, theta otherwise
  std::optional<NodeProcess> traded;      // terminal S; default W_T
  std::vector<double> y_grid;             // default 161 points on [-4, 4]
};

struct FbsdeSolution {
  NodeProcess x, zeta;     // all levels
  NodeProcess m, theta, h; // steps
  OptimalityReport report;
  int iterations = 0;
  bool converged = true;
  double last_change = 0.0;
  double recombination_gap = 0.0;
  int ambiguous_nodes = 0;
  StrategySet set = StrategySet::theta;
  std::optional<PositionCurve> curve;
};

inline bool uses_homogeneous_branches(const Driver& driver) {
  return driver.flags().is_homogeneous && !driver.flags().is_differentiable;
}

inline std::vector<double> default_y_grid() {
  std::vector<double> y(161);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = -4.0 + 0.05 * static_cast<double>(i);
  return y;
}

inline PositionCurve make_curve(const Lattice& lattice, const Driver& driver, const FbsdeOptions& opts) {
  const NodeProcess s = opts.traded ? *opts.traded : NodeProcess::of_brownian(lattice, [](double w) { return w; });
  return PositionCurve::build(lattice, driver, s, opts.y_grid.empty() ? default_y_grid() : opts.y_grid);
}

/// theta with Z^theta = h, node by node.
inline NodeProcess recover_theta(const PositionCurve& curve, const NodeProcess& h) {
  NodeProcess theta = NodeProcess::on_steps(curve.lattice());
  for (int k = 0; k < theta.n_levels(); ++k) {
    auto out = theta.level(k);
    parallel_for(0, out.size(), [&](std::size_t i) { out[i] = curve.invert(k, i, h.at(k, i)); });
  }
  return theta;
}

inline NodeProcess recover_theta(const Lattice& lattice, const Driver& driver, const NodeProcess& s,
                                 const NodeProcess& h, std::vector<double> y_grid) {
  return recover_theta(PositionCurve::build(lattice, driver, s, std::move(y_grid)), h);
}

inline OptimalityReport verify_optimality(const FbsdeSolution& sol, const Driver& driver, const Utility& utility) {
  const Lattice& lat = sol.x.lattice();
  const int n = lat.n_steps();
  OptimalityReport r;
  r.beta = NodeProcess::on_steps(lat);
  r.slack_minus = std::numeric_limits<double>::infinity();
  r.slack_plus = std::numeric_limits<double>::infinity();
  const bool homog = uses_homogeneous_branches(driver);
  require(!homog || sol.curve.has_value(), ErrorKind::contract_violation,
          "homogeneous optimality check needs Z(-S) and Z(S)");
  for (int k = 0; k < n; ++k) {
    const double t = lat.time(k);
    for (std::size_t i = 0; i < lat.level_size(k); ++i) {
      const double w = sol.x.at(k, i) + sol.zeta.at(k, i);
      const double r_k = utility.u1(w);
      const double r_up = utility.u1(sol.x.at(k + 1, lat.child(i, true)) + sol.zeta.at(k + 1, lat.child(i, true)));
      const double r_dn = utility.u1(sol.x.at(k + 1, lat.child(i, false)) + sol.zeta.at(k + 1, lat.child(i, false)));
      const double gap = std::abs(0.5 * (r_up + r_dn) - r_k);
      r.martingale_residual = std::max(r.martingale_residual, gap);
      r.martingale_residual_relative = std::max(r.martingale_residual_relative, gap / std::abs(r_k));

      const double h = sol.h.at(k, i);
      const double m = sol.m.at(k, i);
      const double u1 = r_k;
      const double u2 = utility.u2(w);
      r.beta.at(k, i) = u2 * (h + m);
      if (!homog) {
        r.foc_residual = std::max(r.foc_residual, std::abs(-u1 * driver.grad(t, h) + u2 * (h + m)));
        continue;
      }
      const double th = sol.theta.at(k, i);
      const double zm = sol.curve->z_minus().at(k, i);
      const double zp = sol.curve->z_plus().at(k, i);
      if (th != 0.0) {
        const double sg = th > 0.0 ? 1.0 : -1.0;
        const double zs = th > 0.0 ? zm : zp;
        r.foc_residual = std::max(r.foc_residual, std::abs(-u1 * sg * driver.eval(t, zs) + sg * zs * u2 * (h + m)));
      } else {
        r.slack_minus = std::min(r.slack_minus, u1 * driver.eval(t, zm) - u2 * m * zm);
        if (sol.set == StrategySet::theta) r.slack_plus = std::min(r.slack_plus, u1 * driver.eval(t, zp) - u2 * m * zp);
      }
    }
  }
  if (!std::isfinite(r.slack_minus)) r.slack_minus = 0.0;
  if (!std::isfinite(r.slack_plus)) r.slack_plus = 0.0;
  return r;
}

namespace detail {

struct BackwardPass {
  NodeProcess zeta, m, h, theta;
  int ambiguous = 0;
};

/// zeta_k = E_k[zeta_{k+1}] + D dt with M_k = E_k[zeta_{k+1} dW]/dt and
/// D = 1/2 psi2(X + zeta) |H + M|^2 - g(t, H); psi2 and H use E_k[zeta_{k+1}].
inline BackwardPass backward_pass(const Lattice& lat, const Driver& driver, const Utility& utility,
                                  const NodeProcess& x, const PositionCurve* curve, StrategySet set) {
  const int n = lat.n_steps();
  const bool homog = uses_homogeneous_branches(driver);
  BackwardPass bp{NodeProcess::on_nodes(lat), NodeProcess::on_steps(lat), NodeProcess::on_steps(lat),
                  NodeProcess::on_steps(lat, std::numeric_limits<double>::quiet_NaN()), 0};
  const double dt = lat.dt();
  const double sdt = lat.sqrt_dt();
  std::vector<char> amb;
  for (int k = n - 1; k >= 0; --k) {
    const double t = lat.time(k);
    const std::size_t size = lat.level_size(k);
    amb.assign(size, 0);
    parallel_for(0, size, [&](std::size_t i) {
      const double zu = bp.zeta.at(k + 1, lat.child(i, true));
      const double zd = bp.zeta.at(k + 1, lat.child(i, false));
      const double zt = 0.5 * (zu + zd);
      const double m = (zu - zd) / (2.0 * sdt);
      const double xk = x.at(k, i);
      double h;
      if (homog) {
        const double zm = curve->z_minus().at(k, i);
        const double zp = curve->z_plus().at(k, i);
        const auto c = solve_h_homogeneous(zm, zp, driver.eval(t, zm), driver.eval(t, zp), utility, xk, zt, m, set);
        h = c.h;
        bp.theta.at(k, i) = c.theta;
        amb[i] = c.ambiguous ? 1 : 0;
      } else {
        h = solve_h(driver, utility, t, xk, zt, m);
      }
      const double d = 0.5 * utility.psi2(xk + zt) * (h + m) * (h + m) - driver.eval(t, h);
      bp.m.at(k, i) = m;
      bp.h.at(k, i) = h;
      bp.zeta.at(k, i) = zt + d * dt;
    });
    for (std::size_t i = 0; i < size; ++i) {
      bp.ambiguous += amb[i];
      if (!std::isfinite(bp.zeta.at(k, i)))
        fail(ErrorKind::numeric_overflow, "non-finite zeta at level " + std::to_string(k));
    }
  }
  return bp;
}

inline void finish(FbsdeSolution& sol, const Lattice& lat, const Driver& driver, const Utility& utility,
                   NodeProcess homogeneous_theta) {
  if (uses_homogeneous_branches(driver) && !homogeneous_theta.empty())
    sol.theta = std::move(homogeneous_theta);
  else
    sol.theta = recover_theta(*sol.curve, sol.h);
  (void)lat;
  sol.report = verify_optimality(sol, driver, utility);
}

inline StrategySet resolve_set(const Driver& driver, const FbsdeOptions& opts) {
  if (opts.set) return *opts.set;
  return uses_homogeneous_branches(driver) ? StrategySet::theta_plus : StrategySet::theta;
}

}  // namespace detail

/// CARA decoupling: zeta_k = E_k[zeta_{k+1}] - f(t_k, M_k) dt with
/// f(t, M) = gamma_A/2 |H + M|^2 + g(t, H), then X forward with Z = H(t, M).
inline FbsdeSolution solve_fbsde_cara(const Lattice& lat, const Driver& driver, double gamma_a, double x0,
                                      const FbsdeOptions& opts = {}) {
  require(gamma_a > 0.0, ErrorKind::invalid_argument, "gamma_A must be positive");
  const Utility utility = Utility::cara(gamma_a);
  FbsdeSolution sol;
  sol.set = detail::resolve_set(driver, opts);
  sol.curve = make_curve(lat, driver, opts);
  const bool homog = uses_homogeneous_branches(driver);
  const int n = lat.n_steps();
  sol.zeta = NodeProcess::on_nodes(lat);
  sol.m = NodeProcess::on_steps(lat);
  sol.h = NodeProcess::on_steps(lat);
  NodeProcess theta_h = homog ? NodeProcess::on_steps(lat) : NodeProcess{};
  const double dt = lat.dt();
  const double sdt = lat.sqrt_dt();
  for (int k = n - 1; k >= 0; --k) {
    const double t = lat.time(k);
    for (std::size_t i = 0; i < lat.level_size(k); ++i) {
      const double zu = sol.zeta.at(k + 1, lat.child(i, true));
      const double zd = sol.zeta.at(k + 1, lat.child(i, false));
      const double m = (zu - zd) / (2.0 * sdt);
      double h;
      if (homog) {
        const double zm = sol.curve->z_minus().at(k, i);
        const double zp = sol.curve->z_plus().at(k, i);
        const auto c = solve_h_homogeneous(zm, zp, driver.eval(t, zm), driver.eval(t, zp), utility, 0.0, 0.0, m,
                                           sol.set);
        h = c.h;
        theta_h.at(k, i) = c.theta;
        sol.ambiguous_nodes += c.ambiguous ? 1 : 0;
      } else {
        h = solve_h(driver, utility, t, 0.0, 0.0, m);
      }
      const double f = 0.5 * gamma_a * (h + m) * (h + m) + driver.eval(t, h);
      sol.m.at(k, i) = m;
      sol.h.at(k, i) = h;
      sol.zeta.at(k, i) = 0.5 * (zu + zd) - f * dt;
      if (!std::isfinite(sol.zeta.at(k, i)))
        fail(ErrorKind::numeric_overflow, "non-finite zeta at level " + std::to_string(k));
    }
  }
  WealthPath w = wealth_from_z(lat, driver, sol.h, x0);
  sol.x = std::move(w.x);
  sol.recombination_gap = w.recombination_gap;
  sol.iterations = 1;
  detail::finish(sol, lat, driver, utility, std::move(theta_h));
  return sol;
}

/// Picard iteration on the coupled system. The first wealth guess comes from an
/// undamped pass with X = x0; later updates are damped. On max_iter the last
/// iterate is returned with converged = false.
inline FbsdeSolution solve_fbsde_picard(const Lattice& lat, const Driver& driver, const Utility& utility, double x0,
                                        double tol, int max_iter, double damping, const FbsdeOptions& opts = {}) {
  require(tol > 0.0, ErrorKind::invalid_argument, "tol must be positive");
  require(max_iter >= 1, ErrorKind::invalid_argument, "max_iter must be at least 1");
  require(damping > 0.0 && damping <= 1.0, ErrorKind::invalid_argument, "damping must lie in (0, 1]");
  FbsdeSolution sol;
  sol.set = detail::resolve_set(driver, opts);
  sol.curve = make_curve(lat, driver, opts);
  const PositionCurve* curve = &*sol.curve;

  NodeProcess x = NodeProcess::on_nodes(lat, x0);
  detail::BackwardPass bp = detail::backward_pass(lat, driver, utility, x, curve, sol.set);
  WealthPath w = wealth_from_z(lat, driver, bp.h, x0);
  x = w.x;
  sol.converged = false;
  for (int it = 1; it <= max_iter; ++it) {
    bp = detail::backward_pass(lat, driver, utility, x, curve, sol.set);
    w = wealth_from_z(lat, driver, bp.h, x0);
    const double change = max_abs_diff(w.x, x);
    sol.iterations = it;
    sol.last_change = change;
    if (change < tol) {
      sol.converged = true;
      x = w.x;
      break;
    }
    for (int k = 0; k <= lat.n_steps(); ++k) {
      auto dst = x.level(k);
      auto src = w.x.level(k);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = damping * src[i] + (1.0 - damping) * dst[i];
    }
  }
  if (!sol.converged) x = w.x;
  sol.x = std::move(x);
  sol.zeta = std::move(bp.zeta);
  sol.m = std::move(bp.m);
  sol.h = std::move(bp.h);
  sol.recombination_gap = w.recombination_gap;
  sol.ambiguous_nodes = bp.ambiguous;
  detail::finish(sol, lat, driver, utility, uses_homogeneous_branches(driver) ? std::move(bp.theta) : NodeProcess{});
  return sol;
}

/// E[U(X_T)] for wealth driven by the integrand z_theta. Exact on both
/// topologies for CARA (the exponential factorizes over steps); other utilities
/// need a full-binary lattice or a recombining wealth process.
inline double expected_utility(const Lattice& lat, const Driver& driver, const Utility& utility, double x0,
                               const NodeProcess& z_theta) {
  const int n = lat.n_steps();
  const double dt = lat.dt();
  if (utility.is_cara()) {
    const double ga = utility.gamma_a();
    std::vector<double> phi(lat.level_size(n), 1.0);
    for (int k = n - 1; k >= 0; --k) {
      const double t = lat.time(k);
      std::vector<double> cur(lat.level_size(k));
      for (std::size_t i = 0; i < cur.size(); ++i) {
        const double z = z_theta.at(k, i);
        const double drift = -driver.eval(t, z) * dt;
        cur[i] = 0.5 * (std::exp(-ga * (drift + z * lat.sqrt_dt())) * phi[lat.child(i, true)] +
                        std::exp(-ga * (drift - z * lat.sqrt_dt())) * phi[lat.child(i, false)]);
      }
      phi = std::move(cur);
    }
    return -std::exp(-ga * x0) * phi[0];
  }
  const WealthPath w = wealth_from_z(lat, driver, z_theta, x0);
  require(!lat.recombining() || w.recombination_gap <= 1e-12, ErrorKind::mode_conflict,
          "path-dependent wealth needs a full-binary lattice for non-exponential utility");
  const auto probs = lat.level_probabilities(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) acc += probs[i] * utility.u(w.x.at(n, i));
  return acc;
}

}  // namespace impact
