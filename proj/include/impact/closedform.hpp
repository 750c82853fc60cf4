#pragma once

// Explicit complete-market solutions used as oracles: Girsanov density,
// inverse marginal pricing function, budget multiplier, the exponential
// utility triple and the no-trade solution.

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "impact/driver.hpp"
#include "impact/error.hpp"
#include "impact/lattice.hpp"
#include "impact/market.hpp"
#include "impact/optimizer.hpp"
#include "impact/time_function.hpp"
#include "impact/utility.hpp"

namespace impact {

/// Market Maker with driver 1/2 gamma z^2 - eta(t) z pricing the claim W_T.
struct MarketSpec {
  double gamma = 1.0;
  PiecewiseConstant eta;
  Utility utility = Utility::cara(1.0);
  double x0 = 0.0;

  Driver driver() const { return Driver::drifted_quadratic(gamma, eta); }
  void validate() const { require(gamma > 0.0, ErrorKind::invalid_argument, "gamma must be positive"); }
};

inline bool eta_is_constant_on_grid(const Lattice& lat, const PiecewiseConstant& eta) {
  const double e0 = eta(lat.time(0));
  for (int k = 1; k < lat.n_steps(); ++k)
    if (eta(lat.time(k)) != e0) return false;
  return true;
}

/// xi_k = exp(-1/2 int_0^{t_k} eta^2 ds - sum_{i<k} eta(t_i) dW_i).
inline NodeProcess girsanov_density(const Lattice& lat, const PiecewiseConstant& eta) {
  const bool constant = eta_is_constant_on_grid(lat, eta);
  require(!lat.recombining() || constant, ErrorKind::mode_conflict,
          "time-varying eta makes the density path dependent; use a full-binary lattice");
  std::vector<double> comp(static_cast<std::size_t>(lat.n_steps()) + 1, 0.0);
  for (int k = 0; k < lat.n_steps(); ++k) comp[k + 1] = comp[k] + 0.5 * eta.integral_of_square(lat.time(k), lat.time(k + 1));
  if (lat.recombining()) {
    const double e = eta(lat.time(0));
    return NodeProcess::from_function(lat, [&](int k, std::size_t j) {
      return std::exp(-comp[static_cast<std::size_t>(k)] - e * lat.w(k, j));
    });
  }
  // accumulate the log and exponentiate once
  auto sweep = forward_sweep(lat, 0.0, [&](int k, std::size_t, bool up, double log_xi) {
    return log_xi - eta(lat.time(k)) * lat.increment(up);
  });
  NodeProcess out = std::move(sweep.values);
  for (int k = 0; k <= lat.n_steps(); ++k)
    for (double& v : out.level(k)) v = std::exp(v - comp[static_cast<std::size_t>(k)]);
  return out;
}

/// Inverse of x -> U'(x) exp(-gamma x) / gamma.
inline std::function<double(double)> inverse_marginal_f(const Utility& utility, double gamma) {
  require(gamma > 0.0, ErrorKind::invalid_argument, "gamma must be positive");
  if (utility.is_cara()) {
    const double ga = utility.gamma_a();
    return [ga, gamma](double v) {
      require(v > 0.0, ErrorKind::domain_error, "f is defined on v > 0");
      return -std::log(gamma * v / ga) / (gamma + ga);
    };
  }
  for (double x : {-5.0, -1.0, 0.0, 1.0, 5.0})
    require(utility.u1(x) > 0.0 && utility.u2(x) < 0.0, ErrorKind::contract_violation,
            "utility must be increasing and strictly concave");
  return [utility, gamma](double v) {
    require(v > 0.0 && std::isfinite(v), ErrorKind::domain_error, "f is defined on v > 0");
    auto phi = [&](double x) { return utility.u1(x) * std::exp(-gamma * x) / gamma; };
    double lo = -1.0, hi = 1.0;
    for (int i = 0; i < 200 && phi(lo) < v; ++i) lo = 2.0 * lo - 1.0;
    for (int i = 0; i < 200 && phi(hi) > v; ++i) hi = 2.0 * hi + 1.0;
    require(phi(lo) >= v && phi(hi) <= v, ErrorKind::domain_error, "v outside the range of the marginal map");
    for (int i = 0; i < 300; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      (phi(mid) > v ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };
}

inline std::vector<double> optimal_terminal_wealth(double lambda, const std::vector<double>& xi_t,
                                                   const std::function<double(double)>& f) {
  require(lambda > 0.0, ErrorKind::invalid_argument, "lambda must be positive");
  std::vector<double> out(xi_t.size());
  for (std::size_t i = 0; i < xi_t.size(); ++i) out[i] = f(lambda * xi_t[i]);
  return out;
}

namespace detail {
inline std::vector<double> terminal_vector(const NodeProcess& p) {
  auto t = p.terminal();
  return {t.begin(), t.end()};
}
}  // namespace detail

/// Lagrange multiplier of E[exp(gamma X*_T) xi_T] = exp(gamma x0) with X*_T = f(lambda xi_T).
/// CARA uses the explicit inversion unless `force_search` is set.
inline double budget_lambda(const Lattice& lat, const MarketSpec& market, bool force_search = false) {
  market.validate();
  const double g = market.gamma;
  if (market.utility.is_cara() && !force_search) {
    const double ga = market.utility.gamma_a();
    const double int_eta2 = market.eta.integral_of_square(0.0, lat.horizon());
    const double log_ratio = -(g + ga) * (market.x0 + ga * int_eta2 / (2.0 * (g + ga) * (g + ga)));
    return ga / g * std::exp(log_ratio);
  }
  const auto xi = detail::terminal_vector(girsanov_density(lat, market.eta));
  const auto probs = lat.level_probabilities(lat.n_steps());
  const auto f = inverse_marginal_f(market.utility, g);
  // log of E[exp(gamma f(lambda xi)) xi] - gamma x0, decreasing in lambda
  auto excess = [&](double log_lambda) {
    const double lam = std::exp(log_lambda);
    double acc = 0.0;
    for (std::size_t i = 0; i < xi.size(); ++i) acc += probs[i] * std::exp(g * f(lam * xi[i])) * xi[i];
    return std::log(acc) - g * market.x0;
  };
  double lo = -1.0, hi = 1.0;
  for (int i = 0; i < 100 && excess(lo) < 0.0; ++i) lo = 2.0 * lo - 1.0;
  for (int i = 0; i < 100 && excess(hi) > 0.0; ++i) hi = 2.0 * hi + 1.0;
  require(excess(lo) >= 0.0 && excess(hi) <= 0.0, ErrorKind::root_not_found, "budget multiplier not bracketed");
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (excess(mid) > 0.0 ? lo : hi) = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

/// Closed-form CARA solution: Z* = eta/(gamma + gamma_A), M* = 0,
/// zeta*_t = int_t^T eta^2 ds / (2(gamma + gamma_A)), X* by forward accumulation.
inline FbsdeSolution exponential_triple(const Lattice& lat, const MarketSpec& market) {
  market.validate();
  require(market.utility.is_cara(), ErrorKind::contract_violation, "exponential triple needs CARA utility");
  const double c = market.gamma + market.utility.gamma_a();
  const Driver driver = market.driver();
  FbsdeSolution sol;
  sol.h = NodeProcess::from_function(lat, [&](int k, std::size_t) { return market.eta(lat.time(k)) / c; }, true);
  sol.m = NodeProcess::on_steps(lat);
  sol.zeta = NodeProcess::from_function(lat, [&](int k, std::size_t) {
    return market.eta.integral_of_square(lat.time(k), lat.horizon()) / (2.0 * c);
  });
  WealthPath w = wealth_from_z(lat, driver, sol.h, market.x0);
  sol.x = std::move(w.x);
  sol.recombination_gap = w.recombination_gap;
  // the traded claim is W_T, for which Z^y = y under this driver
  sol.theta = sol.h;
  sol.iterations = 0;
  sol.report = verify_optimality(sol, driver, market.utility);
  return sol;
}

/// X*_t = f(lambda xi_t) - gamma_A/(2(gamma+gamma_A)^2) int_t^T eta^2 ds for CARA.
inline NodeProcess optimal_wealth_conditional(const Lattice& lat, const MarketSpec& market) {
  require(market.utility.is_cara(), ErrorKind::contract_violation, "conditional route needs CARA utility");
  const double ga = market.utility.gamma_a();
  const double c = market.gamma + ga;
  const double lambda = budget_lambda(lat, market);
  const auto f = inverse_marginal_f(market.utility, market.gamma);
  NodeProcess xi = girsanov_density(lat, market.eta);
  for (int k = 0; k <= lat.n_steps(); ++k) {
    const double tail = ga * market.eta.integral_of_square(lat.time(k), lat.horizon()) / (2.0 * c * c);
    for (double& v : xi.level(k)) v = f(lambda * v) - tail;
  }
  return xi;
}

/// X = x0, zeta = 0, M = 0, theta = 0 when 0 is a (sub)gradient of g at z = 0.
inline std::optional<FbsdeSolution> no_trade_solution(const Lattice& lat, const Driver& driver, double x0,
                                                      const Utility& utility = Utility::cara(1.0)) {
  std::vector<double> ts;
  for (int k = 0; k <= lat.n_steps(); ++k) ts.push_back(lat.time(k));
  if (!driver.zero_in_subgradient_at_origin(ts)) return std::nullopt;
  FbsdeSolution sol;
  sol.x = NodeProcess::on_nodes(lat, x0);
  sol.zeta = NodeProcess::on_nodes(lat);
  sol.m = NodeProcess::on_steps(lat);
  sol.h = NodeProcess::on_steps(lat);
  sol.theta = NodeProcess::on_steps(lat);
  sol.set = uses_homogeneous_branches(driver) ? StrategySet::theta_plus : StrategySet::theta;
  if (uses_homogeneous_branches(driver)) {
    FbsdeOptions opts;
    sol.curve = make_curve(lat, driver, opts);
  }
  sol.report = verify_optimality(sol, driver, utility);
  return sol;
}

}  // namespace impact
