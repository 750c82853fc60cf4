#pragma once

// Quoted price curve, nonlinear P&L of a strategy and admissibility.

#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include "impact/driver.hpp"
#include "impact/gexpect.hpp"
#include "impact/lattice.hpp"

namespace impact {

/// Units held over [t_k, t_{k+1}) at every node of level k < n.
struct Strategy {
  NodeProcess theta;
  bool simple = false;
  std::vector<int> jump_levels;  // levels where some node changes position (level 0 counts if theta_0 != 0)

  static Strategy constant(const Lattice& lattice, double value) {
    return from_process(NodeProcess::on_steps(lattice, value));
  }

  /// Wraps an arbitrary process; it is flagged simple when the position changes at
  /// no more than `max_jumps` levels.
  static Strategy from_process(NodeProcess theta, std::size_t max_jumps = 8) {
    Strategy s{std::move(theta), false, {}};
    const Lattice& lat = s.theta.lattice();
    for (int k = 0; k < s.theta.n_levels(); ++k) {
      bool moved = false;
      for (std::size_t i = 0; i < s.theta.level(k).size() && !moved; ++i) {
        if (k == 0) {
          moved = s.theta.at(0, 0) != 0.0;
        } else if (lat.recombining()) {
          // either parent
          const double v = s.theta.at(k, i);
          if (i < s.theta.level(k - 1).size() && s.theta.at(k - 1, i) != v) moved = true;
          if (i >= 1 && s.theta.at(k - 1, i - 1) != v) moved = true;
        } else {
          moved = s.theta.at(k, i) != s.theta.at(k - 1, i >> 1);
        }
      }
      if (moved) s.jump_levels.push_back(k);
    }
    s.simple = s.jump_levels.size() <= max_jumps;
    return s;
  }
};

struct WealthPath {
  NodeProcess x;
  double x0 = 0.0;
  NodeProcess gains;    // cumulative P&L, zero at the root
  NodeProcess z_theta;  // steps only
  double recombination_gap = 0.0;
};

/// Selling price of y units when the Market Maker holds inventory -z:
/// Pi(H_M + z S) - Pi(H_M + (z - y) S) at node (k, i).
inline double price_curve(const Lattice& lattice, const Driver& driver, const NodeProcess& s, int k, std::size_t i,
                          double z, double y, const std::optional<NodeProcess>& h_m = std::nullopt) {
  if (y == 0.0) return 0.0;
  // H_M + z S = H_M - (-z) S
  const auto a = z_of_position(lattice, driver, s, -z, h_m);
  const auto b = z_of_position(lattice, driver, s, y - z, h_m);
  return a.pi.at(k, i) - b.pi.at(k, i);
}

/// Z^theta from a position curve, node by node.
inline NodeProcess z_of_strategy(const PositionCurve& curve, const Strategy& strategy) {
  const NodeProcess& th = strategy.theta;
  NodeProcess z = NodeProcess::on_steps(curve.lattice());
  for (int k = 0; k < z.n_levels(); ++k)
    for (std::size_t i = 0; i < z.level(k).size(); ++i) z.at(k, i) = curve.z_at(k, i, th.at(k, i));
  return z;
}

/// Gains I_{k+1} = I_k - g(t_k, Z^theta_k) dt + Z^theta_k dW along every branch.
inline WealthPath wealth_from_z(const Lattice& lattice, const Driver& driver, const NodeProcess& z_theta, double x0) {
  const double dt = lattice.dt();
  auto sweep = forward_sweep(lattice, 0.0, [&](int k, std::size_t i, bool up, double gain) {
    const double z = z_theta.at(k, i);
    return gain - driver.eval(lattice.time(k), z) * dt + z * lattice.increment(up);
  });
  WealthPath w;
  w.x0 = x0;
  w.gains = std::move(sweep.values);
  w.x = w.gains.map([x0](double v) { return x0 + v; });
  w.z_theta = z_theta;
  w.recombination_gap = sweep.recombination_gap;
  return w;
}

inline WealthPath pnl_process(const Lattice& lattice, const Driver& driver, const Strategy& strategy, double x0,
                              const PositionCurve& curve) {
  require(strategy.theta.n_levels() == lattice.n_steps(), ErrorKind::invalid_argument,
          "strategy must be defined on every step");
  return wealth_from_z(lattice, driver, z_of_strategy(curve, strategy), x0);
}

inline bool levelwise_constant(const NodeProcess& p) {
  for (int k = 0; k < p.n_levels(); ++k) {
    auto l = p.level(k);
    for (double v : l)
      if (v != l[0]) return false;
  }
  return true;
}

/// theta_T S - sum over jumps of P_t(-theta_{t-}, delta theta_t), path by path.
/// Returns the terminal values.
inline std::vector<double> simple_strategy_pnl(const Lattice& lattice, const Driver& driver, const NodeProcess& s,
                                               const Strategy& strategy) {
  require(strategy.simple, ErrorKind::contract_violation, "strategy is not simple");
  require(!lattice.recombining() || strategy.jump_levels.size() <= 1 || levelwise_constant(strategy.theta),
          ErrorKind::mode_conflict, "path-dependent simple strategy needs a full-binary lattice");
  const int n = lattice.n_steps();
  std::map<double, NodeProcess> pi_cache;
  auto pi_of = [&](double theta) -> const NodeProcess& {
    auto it = pi_cache.find(theta);
    if (it == pi_cache.end()) it = pi_cache.emplace(theta, z_of_position(lattice, driver, s, theta).pi).first;
    return it->second;
  };
  // -P_k(-old, new - old) = Pi_k(-new S) - Pi_k(-old S)
  auto jump_cost = [&](int k, std::size_t i, double old_pos, double new_pos) {
    if (old_pos == new_pos) return 0.0;
    return pi_of(new_pos).at(k, i) - pi_of(old_pos).at(k, i);
  };
  const NodeProcess& th = strategy.theta;
  const double root = jump_cost(0, 0, 0.0, th.at(0, 0));
  auto sweep = forward_sweep(lattice, root, [&](int k, std::size_t i, bool up, double acc) {
    const std::size_t c = lattice.child(i, up);
    const double held = th.at(k, i);
    if (k + 1 == n) return acc + held * s.at(n, c);
    return acc + jump_cost(k + 1, c, held, th.at(k + 1, c));
  });
  auto t = sweep.values.terminal();
  return {t.begin(), t.end()};
}

/// E int_0^T |Z^theta|^2 dt on the lattice.
inline double check_admissible(const Strategy& strategy, const PositionCurve& curve) {
  const NodeProcess z2 = z_of_strategy(curve, strategy).map([](double v) { return v * v; });
  double acc = 0.0;
  for (int k = 0; k < z2.n_levels(); ++k) acc += expectation(z2, k) * curve.lattice().dt();
  return acc;
}

}  // namespace impact
