#pragma once

// Backward lattice solver for the g-expectation and the position-indexed
// integrands Z^y built on top of it.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "impact/driver.hpp"
#include "impact/error.hpp"
#include "impact/lattice.hpp"
#include "impact/parallel.hpp"

namespace impact {

struct BsdeSolution {
  NodeProcess pi;        // all levels; terminal level equals the payoff
  NodeProcess z;         // steps only
  NodeProcess terminal;  // the payoff as given
};

struct BsdeOptions {
  /// Enforce |g_z(t, Z)| sqrt(dt) < 1, the monotonicity condition of the explicit scheme.
  bool step_guard = true;
};

inline void check_terminal(const Lattice& lattice, const NodeProcess& terminal) {
  require(!terminal.empty() && terminal.covers_terminal() && terminal.lattice() == lattice,
          ErrorKind::invalid_argument, "terminal payoff must be a node process on the full lattice");
}

/// Z_k = -E_k[Pi_{k+1} dW]/dt, Pi_k = E_k[Pi_{k+1}] - g(t_k, Z_k) dt.
inline BsdeSolution solve_bsde(const Lattice& lattice, const Driver& driver, const NodeProcess& terminal,
                               BsdeOptions opts = {}) {
  check_terminal(lattice, terminal);
  const int n = lattice.n_steps();
  BsdeSolution sol{NodeProcess::on_nodes(lattice), NodeProcess::on_steps(lattice), terminal};
  {
    auto src = terminal.terminal();
    sol.pi.assign_level(n, std::vector<double>(src.begin(), src.end()));
  }
  const bool guard = opts.step_guard && driver.has_gradient();
  const double dt = lattice.dt();
  const double sdt = lattice.sqrt_dt();
  for (int k = n - 1; k >= 0; --k) {
    const double t = lattice.time(k);
    auto next = sol.pi.level(k + 1);
    auto pi = sol.pi.level(k);
    auto z = sol.z.level(k);
    parallel_for(0, pi.size(), [&](std::size_t i) {
      const double up = next[lattice.child(i, true)];
      const double dn = next[lattice.child(i, false)];
      const double zk = -(up - dn) / (2.0 * sdt);
      z[i] = zk;
      pi[i] = 0.5 * (up + dn) - driver.eval(t, zk) * dt;
    });
    for (std::size_t i = 0; i < pi.size(); ++i) {
      if (!std::isfinite(pi[i]) || !std::isfinite(z[i]))
        fail(ErrorKind::numeric_overflow, "non-finite BSDE value at level " + std::to_string(k));
      if (guard && std::abs(driver.grad(t, z[i])) * sdt >= 1.0)
        fail(ErrorKind::step_size_violation,
             "|g_z| sqrt(dt) >= 1 at level " + std::to_string(k) + " node " + std::to_string(i) +
                 "; refine the time grid");
    }
  }
  return sol;
}

/// Pi_k = -(1/gamma) log E_k[exp(-gamma Pi_{k+1})], evaluated in log-sum-exp form.
inline NodeProcess entropic_exact(const Lattice& lattice, double gamma, const NodeProcess& terminal) {
  require(gamma > 0.0, ErrorKind::invalid_argument, "gamma must be positive");
  check_terminal(lattice, terminal);
  const int n = lattice.n_steps();
  NodeProcess pi = NodeProcess::on_nodes(lattice);
  {
    auto src = terminal.terminal();
    pi.assign_level(n, std::vector<double>(src.begin(), src.end()));
  }
  for (int k = n - 1; k >= 0; --k) {
    auto next = pi.level(k + 1);
    auto cur = pi.level(k);
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const double a = -gamma * next[lattice.child(i, true)];
      const double b = -gamma * next[lattice.child(i, false)];
      const double m = std::max(a, b);
      const double lse = m + std::log(0.5 * (std::exp(a - m) + std::exp(b - m)));
      cur[i] = -lse / gamma;
      if (!std::isfinite(cur[i]))
        fail(ErrorKind::numeric_overflow, "entropic evaluation overflow at level " + std::to_string(k));
    }
  }
  return pi;
}

/// Terminal H_M - y S.
inline NodeProcess position_terminal(const NodeProcess& s, double y, const std::optional<NodeProcess>& h_m) {
  const Lattice& lat = s.lattice();
  NodeProcess out = NodeProcess::on_nodes(lat);
  const int n = lat.n_steps();
  auto sv = s.terminal();
  auto dst = out.level(n);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = -y * sv[i] + (h_m ? h_m->at(n, i) : 0.0);
  return out;
}

/// Pi^y = Pi(H_M - y S) and its integrand Z^y.
inline BsdeSolution z_of_position(const Lattice& lattice, const Driver& driver, const NodeProcess& s, double y,
                                  const std::optional<NodeProcess>& h_m = std::nullopt, BsdeOptions opts = {}) {
  check_terminal(lattice, s);
  if (h_m) check_terminal(lattice, *h_m);
  return solve_bsde(lattice, driver, position_terminal(s, y, h_m), opts);
}

/// Z^y for a positively homogeneous driver with H_M = 0, from Z(-S) and Z(S).
inline NodeProcess z_homogeneous(const Driver& driver, double y, const NodeProcess& z_minus,
                                 const NodeProcess& z_plus) {
  require(driver.flags().is_homogeneous, ErrorKind::contract_violation,
          "scaling identity needs a positively homogeneous driver");
  if (y > 0.0) return z_minus.map([y](double v) { return y * v; });
  if (y < 0.0) return z_plus.map([y](double v) { return -y * v; });
  return z_minus.map([](double) { return 0.0; });
}

struct PositionDerivative {
  NodeProcess dz;
  bool kink = false;
  double kink_gap = 0.0;  // largest |forward - backward| difference quotient
};

/// Central difference of Z^y in y. Where one-sided quotients disagree the
/// forward quotient is returned and the kink flag is raised.
inline PositionDerivative dz_dy(const Lattice& lattice, const Driver& driver, const NodeProcess& s, double y,
                                double eps, const std::optional<NodeProcess>& h_m = std::nullopt) {
  require(eps > 0.0, ErrorKind::invalid_argument, "eps must be positive");
  const auto zp = z_of_position(lattice, driver, s, y + eps, h_m).z;
  const auto z0 = z_of_position(lattice, driver, s, y, h_m).z;
  const auto zm = z_of_position(lattice, driver, s, y - eps, h_m).z;
  PositionDerivative out{NodeProcess::on_steps(lattice), false, 0.0};
  const double scale = std::max({zp.max_abs(), z0.max_abs(), zm.max_abs()});
  const double threshold = std::sqrt(eps) * (1.0 + scale);
  for (int k = 0; k < out.dz.n_levels(); ++k)
    for (std::size_t i = 0; i < out.dz.level(k).size(); ++i) {
      const double fwd = (zp.at(k, i) - z0.at(k, i)) / eps;
      const double bwd = (z0.at(k, i) - zm.at(k, i)) / eps;
      out.kink_gap = std::max(out.kink_gap, std::abs(fwd - bwd));
      out.dz.at(k, i) = 0.5 * (fwd + bwd);
    }
  if (out.kink_gap > threshold) {
    out.kink = true;
    for (int k = 0; k < out.dz.n_levels(); ++k)
      for (std::size_t i = 0; i < out.dz.level(k).size(); ++i) out.dz.at(k, i) = (zp.at(k, i) - z0.at(k, i)) / eps;
  }
  return out;
}

/// Markovian payoffs S = s(R_T), H_M = h(R_T) with their r-derivatives.
struct MarkovPayoff {
  std::function<double(double)> s, s_r;
  std::function<double(double)> h, h_r;  // both empty means H_M = 0

  NodeProcess s_terminal(const NodeProcess& state) const {
    return terminal_map(state, s);
  }
  std::optional<NodeProcess> h_terminal(const NodeProcess& state) const {
    if (!h) return std::nullopt;
    return terminal_map(state, h);
  }

 private:
  static NodeProcess terminal_map(const NodeProcess& state, const std::function<double(double)>& f) {
    const Lattice& lat = state.lattice();
    NodeProcess out = NodeProcess::on_nodes(lat);
    const int n = lat.n_steps();
    for (std::size_t i = 0; i < out.level(n).size(); ++i) out.at(n, i) = f(state.at(n, i));
    return out;
  }
};

namespace detail {

/// Z^y recovered from the first variation F = d Pi / d r0 of the BSDE:
/// F_T = (h_r - y s_r)(R_T) dR_T/dr0, F_k = E_k[F_{k+1}] - g_z(t_k, Z_k) V_k dt,
/// V_k = -E_k[F_{k+1} dW]/dt and Z_k = -sigma E_k[F_{k+1} / (dR/dr0)_{k+1}].
inline NodeProcess variational_z(const Lattice& lattice, const Driver& driver, const StateSde& sde,
                                 const NodeProcess& state, const NodeProcess& tangent, const MarkovPayoff& payoff,
                                 double y) {
  const int n = lattice.n_steps();
  NodeProcess f = NodeProcess::on_nodes(lattice);
  NodeProcess z = NodeProcess::on_steps(lattice);
  for (std::size_t i = 0; i < f.level(n).size(); ++i) {
    const double r = state.at(n, i);
    const double hr = payoff.h_r ? payoff.h_r(r) : 0.0;
    f.at(n, i) = (hr - y * payoff.s_r(r)) * tangent.at(n, i);
  }
  const double dt = lattice.dt();
  const double sdt = lattice.sqrt_dt();
  for (int k = n - 1; k >= 0; --k) {
    const double t = lattice.time(k);
    for (std::size_t i = 0; i < lattice.level_size(k); ++i) {
      const std::size_t cu = lattice.child(i, true);
      const std::size_t cd = lattice.child(i, false);
      const double fu = f.at(k + 1, cu);
      const double fd = f.at(k + 1, cd);
      const double v = -(fu - fd) / (2.0 * sdt);
      const double vol = sde.vol(t, state.at(k, i));
      const double zk = -vol * 0.5 * (fu / tangent.at(k + 1, cu) + fd / tangent.at(k + 1, cd));
      z.at(k, i) = zk;
      f.at(k, i) = 0.5 * (fu + fd) - driver.grad(t, zk) * v * dt;
    }
  }
  return z;
}

}  // namespace detail

/// Independent route to dZ^y/dy through the variational BSDE in the Markov state.
inline NodeProcess dz_dy_variational(const Lattice& lattice, const Driver& driver, const StateSde& sde,
                                     const MarkovPayoff& payoff, double y, double eps = 1e-4) {
  require(static_cast<bool>(payoff.s) && static_cast<bool>(payoff.s_r), ErrorKind::contract_violation,
          "variational derivative needs a Markovian payoff s(R_T) with s_r");
  require(static_cast<bool>(payoff.h) == static_cast<bool>(payoff.h_r), ErrorKind::contract_violation,
          "H_M needs both h and h_r");
  require(driver.has_gradient(), ErrorKind::contract_violation, "variational derivative needs g_z");
  require(eps > 0.0, ErrorKind::invalid_argument, "eps must be positive");
  const NodeProcess state = simulate_state(lattice, sde);
  const NodeProcess tangent = simulate_tangent(lattice, sde, state);
  const auto zp = detail::variational_z(lattice, driver, sde, state, tangent, payoff, y + eps);
  const auto zm = detail::variational_z(lattice, driver, sde, state, tangent, payoff, y - eps);
  NodeProcess out = NodeProcess::on_steps(lattice);
  for (int k = 0; k < out.n_levels(); ++k)
    for (std::size_t i = 0; i < out.level(k).size(); ++i) out.at(k, i) = (zp.at(k, i) - zm.at(k, i)) / (2.0 * eps);
  return out;
}

/// Z^y tabulated on a y-grid (or, for positively homogeneous drivers with
/// H_M = 0, generated exactly from Z(-S) and Z(S)).
class PositionCurve {
 public:
  static PositionCurve build(const Lattice& lattice, const Driver& driver, const NodeProcess& s,
                             std::vector<double> y_grid, const std::optional<NodeProcess>& h_m = std::nullopt) {
    PositionCurve c(lattice);
    if (driver.flags().is_homogeneous && !h_m) {
      c.homogeneous_ = true;
      c.z_minus_ = z_of_position(lattice, driver, s, 1.0).z;
      c.z_plus_ = z_of_position(lattice, driver, s, -1.0).z;
      c.y_grid_ = std::move(y_grid);
      return c;
    }
    require(y_grid.size() >= 2, ErrorKind::invalid_argument, "position curve needs at least two y values");
    require(std::is_sorted(y_grid.begin(), y_grid.end()) &&
                std::adjacent_find(y_grid.begin(), y_grid.end()) == y_grid.end(),
            ErrorKind::invalid_argument, "y grid must be strictly increasing");
    c.y_grid_ = std::move(y_grid);
    c.table_.reserve(c.y_grid_.size());
    for (double y : c.y_grid_) c.table_.push_back(z_of_position(lattice, driver, s, y, h_m).z);
    return c;
  }

  const Lattice& lattice() const { return lattice_; }
  bool homogeneous() const { return homogeneous_; }
  const std::vector<double>& y_grid() const { return y_grid_; }
  const NodeProcess& z_minus() const { return z_minus_; }
  const NodeProcess& z_plus() const { return z_plus_; }

  /// Z^y at node (k, i); refuses y outside the tabulated hull.
  double z_at(int k, std::size_t i, double y) const {
    if (homogeneous_) return y > 0.0 ? y * z_minus_.at(k, i) : (y < 0.0 ? -y * z_plus_.at(k, i) : 0.0);
    const double lo = y_grid_.front();
    const double hi = y_grid_.back();
    if (!(y >= lo && y <= hi))
      fail(ErrorKind::extrapolation_refused,
           "position " + std::to_string(y) + " outside y grid [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    auto it = std::upper_bound(y_grid_.begin(), y_grid_.end(), y);
    std::size_t j = it == y_grid_.end() ? y_grid_.size() - 2 : static_cast<std::size_t>(it - y_grid_.begin()) - 1;
    const double w = (y - y_grid_[j]) / (y_grid_[j + 1] - y_grid_[j]);
    return (1.0 - w) * table_[j].at(k, i) + w * table_[j + 1].at(k, i);
  }

  /// Position y with Z^y = h at node (k, i).
  double invert(int k, std::size_t i, double h) const {
    if (homogeneous_) {
      if (h == 0.0) return 0.0;
      const double zm = z_minus_.at(k, i);
      const double zp = z_plus_.at(k, i);
      // positive positions produce multiples of Z(-S), negative ones multiples of Z(S)
      if (zm != 0.0 && h / zm > 0.0) return h / zm;
      if (zp != 0.0 && h / zp > 0.0) return -h / zp;
      fail(ErrorKind::image_violation, "h outside the image of the position map at level " + std::to_string(k));
    }
    const std::size_t m = y_grid_.size();
    std::vector<double> col(m);
    for (std::size_t j = 0; j < m; ++j) col[j] = table_[j].at(k, i);
    const bool inc = col.back() > col.front();
    for (std::size_t j = 0; j + 1 < m; ++j)
      if (inc ? !(col[j + 1] > col[j]) : !(col[j + 1] < col[j]))
        fail(ErrorKind::inversion_unavailable,
             "position map not strictly monotone at level " + std::to_string(k) + " node " + std::to_string(i));
    const double lo = std::min(col.front(), col.back());
    const double hi = std::max(col.front(), col.back());
    const double tol = 1e-12 * (1.0 + std::abs(hi - lo));
    if (h < lo - tol || h > hi + tol)
      fail(ErrorKind::image_violation, "h = " + std::to_string(h) + " outside attainable image [" +
                                           std::to_string(lo) + ", " + std::to_string(hi) + "]");
    h = std::clamp(h, lo, hi);
    for (std::size_t j = 0; j + 1 < m; ++j) {
      const double a = col[j];
      const double b = col[j + 1];
      if ((h - a) * (h - b) <= 0.0) {
        const double w = a == b ? 0.0 : (h - a) / (b - a);
        return y_grid_[j] + w * (y_grid_[j + 1] - y_grid_[j]);
      }
    }
    return inc ? y_grid_.back() : y_grid_.front();
  }

 private:
  explicit PositionCurve(const Lattice& lattice) : lattice_(lattice) {}

  Lattice lattice_;
  bool homogeneous_ = false;
  std::vector<double> y_grid_;
  std::vector<NodeProcess> table_;
  NodeProcess z_minus_, z_plus_;
};

}  // namespace impact
