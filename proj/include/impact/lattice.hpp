#pragma once

// Discrete Brownian scaffold: uniform time grid, recombining binomial tree or
// full binary tree, adapted node processes and the one-step primitives
// (conditional expectation, martingale projection) every solver is built on.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "impact/error.hpp"

namespace impact {

enum class Topology { recombining, full_binary };

/// 2^22 terminal nodes; beyond that a full tree is refused.
inline constexpr int kMaxFullBinarySteps = 22;

class TimeGrid {
 public:
  TimeGrid(double horizon, int n_steps) : horizon_(horizon), n_steps_(n_steps) {
    require(std::isfinite(horizon) && horizon > 0.0, ErrorKind::invalid_argument, "horizon must be positive");
    require(n_steps >= 1, ErrorKind::invalid_argument, "n_steps must be at least 1");
  }

  double horizon() const { return horizon_; }
  int n_steps() const { return n_steps_; }
  double dt() const { return horizon_ / n_steps_; }
  /// t_k = T*k/n, so time(n_steps) == horizon exactly.
  double time(int k) const { return k == n_steps_ ? horizon_ : horizon_ * k / n_steps_; }

 private:
  double horizon_;
  int n_steps_;
};

class Lattice {
 public:
  Lattice(TimeGrid grid, Topology topology)
      : grid_(grid), topology_(topology), sqrt_dt_(std::sqrt(grid.dt())) {
    if (topology == Topology::full_binary)
      require(grid.n_steps() <= kMaxFullBinarySteps, ErrorKind::invalid_argument,
              "full-binary lattice supports at most " + std::to_string(kMaxFullBinarySteps) + " steps");
  }

  const TimeGrid& grid() const { return grid_; }
  Topology topology() const { return topology_; }
  bool recombining() const { return topology_ == Topology::recombining; }
  int n_steps() const { return grid_.n_steps(); }
  double horizon() const { return grid_.horizon(); }
  double dt() const { return grid_.dt(); }
  double sqrt_dt() const { return sqrt_dt_; }
  double time(int k) const { return grid_.time(k); }

  std::size_t level_size(int k) const {
    return recombining() ? static_cast<std::size_t>(k) + 1 : (std::size_t{1} << k);
  }

  /// Recombining nodes are indexed by their number of up moves; full-binary
  /// nodes by the path bits (bit j set = up move at step j, newest bit lowest).
  std::size_t child(std::size_t i, bool up) const {
    return recombining() ? i + (up ? 1 : 0) : 2 * i + (up ? 1 : 0);
  }

  int up_moves(int /*k*/, std::size_t i) const {
    return recombining() ? static_cast<int>(i) : std::popcount(static_cast<std::uint64_t>(i));
  }

  /// Brownian value at node (k, i): (2*ups - k) * sqrt(dt).
  double w(int k, std::size_t i) const { return (2.0 * up_moves(k, i) - k) * sqrt_dt_; }

  double increment(bool up) const { return up ? sqrt_dt_ : -sqrt_dt_; }

  /// Unconditional probabilities of the nodes at level k (branch probability 1/2).
  std::vector<double> level_probabilities(int k) const {
    const std::size_t n = level_size(k);
    if (!recombining()) return std::vector<double>(n, std::ldexp(1.0, -k));
    std::vector<double> p(n);
    for (std::size_t j = 0; j < n; ++j)
      p[j] = std::exp(std::lgamma(k + 1.0) - std::lgamma(j + 1.0) - std::lgamma(k - j + 1.0) - k * std::log(2.0));
    return p;
  }

  bool operator==(const Lattice& o) const {
    return topology_ == o.topology_ && grid_.n_steps() == o.grid_.n_steps() && grid_.horizon() == o.grid_.horizon();
  }

 private:
  TimeGrid grid_;
  Topology topology_;
  double sqrt_dt_;
};

inline Lattice build_binomial(double horizon, int n_steps) {
  return Lattice(TimeGrid(horizon, n_steps), Topology::recombining);
}

inline Lattice build_full_binary(double horizon, int n_steps) {
  return Lattice(TimeGrid(horizon, n_steps), Topology::full_binary);
}

/// An adapted process: one value per node. Processes indexed by steps
/// (Z, theta, M) carry n_steps levels; processes on all nodes carry n_steps + 1.
class NodeProcess {
 public:
  NodeProcess() = default;

  NodeProcess(const Lattice& lattice, int n_levels, double fill = 0.0) : lattice_(lattice) {
    require(n_levels >= 1 && n_levels <= lattice.n_steps() + 1, ErrorKind::invalid_argument,
            "node process level count out of range");
    levels_.reserve(static_cast<std::size_t>(n_levels));
    for (int k = 0; k < n_levels; ++k) levels_.emplace_back(lattice.level_size(k), fill);
  }

  static NodeProcess on_nodes(const Lattice& lattice, double fill = 0.0) {
    return NodeProcess(lattice, lattice.n_steps() + 1, fill);
  }
  static NodeProcess on_steps(const Lattice& lattice, double fill = 0.0) {
    return NodeProcess(lattice, lattice.n_steps(), fill);
  }

  template <class Fn>  // double(int k, std::size_t i)
  static NodeProcess from_function(const Lattice& lattice, Fn&& fn, bool steps_only = false) {
    NodeProcess p = steps_only ? on_steps(lattice) : on_nodes(lattice);
    for (int k = 0; k < p.n_levels(); ++k)
      for (std::size_t i = 0; i < p.levels_[k].size(); ++i) p.levels_[k][i] = fn(k, i);
    return p;
  }

  /// Process whose value at every node is f(W at that node).
  template <class Fn>
  static NodeProcess of_brownian(const Lattice& lattice, Fn&& fn) {
    return from_function(lattice, [&](int k, std::size_t i) { return fn(lattice.w(k, i)); });
  }

  const Lattice& lattice() const { return *lattice_; }
  bool empty() const { return levels_.empty(); }
  int n_levels() const { return static_cast<int>(levels_.size()); }
  bool covers_terminal() const { return !empty() && n_levels() == lattice_->n_steps() + 1; }

  std::span<double> level(int k) { return levels_.at(static_cast<std::size_t>(k)); }
  std::span<const double> level(int k) const { return levels_.at(static_cast<std::size_t>(k)); }
  std::span<const double> terminal() const { return levels_.back(); }

  double& at(int k, std::size_t i) { return levels_[static_cast<std::size_t>(k)][i]; }
  double at(int k, std::size_t i) const { return levels_[static_cast<std::size_t>(k)][i]; }

  void assign_level(int k, std::vector<double> values) {
    require(values.size() == levels_.at(static_cast<std::size_t>(k)).size(), ErrorKind::invalid_argument,
            "level size mismatch");
    levels_[static_cast<std::size_t>(k)] = std::move(values);
  }

  template <class Fn>
  NodeProcess map(Fn&& fn) const {
    NodeProcess out = *this;
    for (auto& lvl : out.levels_)
      for (double& v : lvl) v = fn(v);
    return out;
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& lvl : levels_)
      for (double v : lvl) m = std::max(m, std::abs(v));
    return m;
  }

  bool all_finite() const {
    for (const auto& lvl : levels_)
      for (double v : lvl)
        if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  // optional-like storage keeps NodeProcess default-constructible
  struct LatticeBox {
    LatticeBox() : value(TimeGrid(1.0, 1), Topology::recombining) {}
    LatticeBox(const Lattice& l) : value(l) {}  // NOLINT(google-explicit-constructor)
    const Lattice& operator*() const { return value; }
    const Lattice* operator->() const { return &value; }
    Lattice value;
  };
  LatticeBox lattice_;
  std::vector<std::vector<double>> levels_;
};

/// Largest node-wise |a - b| over the levels both processes share.
inline double max_abs_diff(const NodeProcess& a, const NodeProcess& b) {
  require(a.n_levels() == b.n_levels(), ErrorKind::invalid_argument, "node processes differ in level count");
  double m = 0.0;
  for (int k = 0; k < a.n_levels(); ++k) {
    auto la = a.level(k);
    auto lb = b.level(k);
    require(la.size() == lb.size(), ErrorKind::invalid_argument, "node processes differ in shape");
    for (std::size_t i = 0; i < la.size(); ++i) m = std::max(m, std::abs(la[i] - lb[i]));
  }
  return m;
}

inline void check_next_level(const Lattice& lattice, int k, std::span<const double> next) {
  require(k >= 0 && k < lattice.n_steps(), ErrorKind::invalid_argument, "level index out of range");
  require(next.size() == lattice.level_size(k + 1), ErrorKind::invalid_argument,
          "expected " + std::to_string(lattice.level_size(k + 1)) + " values at level " + std::to_string(k + 1) +
              ", got " + std::to_string(next.size()));
}

/// E_k[V_{k+1}]: average of the two children of every level-k node.
inline std::vector<double> take_conditional_expectation(const Lattice& lattice, int k, std::span<const double> next) {
  check_next_level(lattice, k, next);
  std::vector<double> out(lattice.level_size(k));
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = 0.5 * (next[lattice.child(i, false)] + next[lattice.child(i, true)]);
  return out;
}

/// Recombining shorthand: the level is implied by the input length.
inline std::vector<double> take_conditional_expectation(std::span<const double> next) {
  require(next.size() >= 2, ErrorKind::invalid_argument, "need at least two values at level k+1");
  std::vector<double> out(next.size() - 1);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = 0.5 * (next[j] + next[j + 1]);
  return out;
}

/// Z_k = -E_k[V_{k+1} dW] / dt, the integrand of a process written as
/// V_{k+1} = V_k + (drift) dt - Z_k dW.
inline std::vector<double> project_martingale_increment(const Lattice& lattice, int k,
                                                        std::span<const double> next) {
  check_next_level(lattice, k, next);
  std::vector<double> out(lattice.level_size(k));
  const double scale = 1.0 / (2.0 * lattice.sqrt_dt());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = -(next[lattice.child(i, true)] - next[lattice.child(i, false)]) * scale;
  return out;
}

inline std::vector<double> project_martingale_increment(std::span<const double> next, double dt) {
  require(next.size() >= 2, ErrorKind::invalid_argument, "need at least two values at level k+1");
  require(dt > 0.0, ErrorKind::invalid_argument, "dt must be positive");
  std::vector<double> out(next.size() - 1);
  const double scale = 1.0 / (2.0 * std::sqrt(dt));
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = -(next[j + 1] - next[j]) * scale;
  return out;
}

/// E_0[V at level k] as a probability-weighted sum.
inline double expectation(const NodeProcess& p, int k) {
  const auto probs = p.lattice().level_probabilities(k);
  auto lvl = p.level(k);
  double acc = 0.0;
  for (std::size_t i = 0; i < lvl.size(); ++i) acc += probs[i] * lvl[i];
  return acc;
}

/// Result of a forward (root-to-leaf) accumulation. On a recombining lattice a
/// node reached from two parents gets the mean of both candidates; the largest
/// disagreement is reported so callers can tell whether the process recombines.
struct ForwardSweep {
  NodeProcess values;
  double recombination_gap = 0.0;
};

/// step(k, i, up, parent_value) -> value at the child of (k, i) along `up`.
template <class Step>
ForwardSweep forward_sweep(const Lattice& lattice, double root_value, Step&& step) {
  ForwardSweep out{NodeProcess::on_nodes(lattice), 0.0};
  out.values.at(0, 0) = root_value;
  for (int k = 0; k < lattice.n_steps(); ++k) {
    auto parent = out.values.level(k);
    auto child = out.values.level(k + 1);
    if (lattice.recombining()) {
      const std::size_t n = child.size();
      for (std::size_t j = 0; j < n; ++j) {
        const bool has_down = j < parent.size();
        const bool has_up = j >= 1;
        const double from_down = has_down ? step(k, j, false, parent[j]) : 0.0;
        const double from_up = has_up ? step(k, j - 1, true, parent[j - 1]) : 0.0;
        if (has_down && has_up) {
          child[j] = 0.5 * (from_down + from_up);
          out.recombination_gap = std::max(out.recombination_gap, std::abs(from_down - from_up));
        } else {
          child[j] = has_down ? from_down : from_up;
        }
      }
    } else {
      for (std::size_t i = 0; i < parent.size(); ++i) {
        child[lattice.child(i, false)] = step(k, i, false, parent[i]);
        child[lattice.child(i, true)] = step(k, i, true, parent[i]);
      }
    }
  }
  return out;
}

/// Markovian state dR = b(t,R) dt + sigma dW on the lattice.
struct StateSde {
  std::function<double(double, double)> drift;           // b(t, r)
  std::function<double(double, double)> drift_r;        // db/dr, needed for the tangent process
  std::function<double(double, double)> volatility;      // sigma(t, r); empty means the constant `sigma`
  std::function<double(double, double)> volatility_r;    // dsigma/dr
  double sigma = 1.0;
  double r0 = 0.0;
  bool state_dependent = false;

  static StateSde arithmetic(double mu, double sigma, double r0) {
    StateSde s;
    s.drift = [mu](double, double) { return mu; };
    s.drift_r = [](double, double) { return 0.0; };
    s.sigma = sigma;
    s.r0 = r0;
    return s;
  }

  static StateSde time_dependent(std::function<double(double)> b, double sigma, double r0) {
    StateSde s;
    s.drift = [b = std::move(b)](double t, double) { return b(t); };
    s.drift_r = [](double, double) { return 0.0; };
    s.sigma = sigma;
    s.r0 = r0;
    return s;
  }

  static StateSde general(std::function<double(double, double)> b, std::function<double(double, double)> b_r,
                          double sigma, double r0) {
    StateSde s;
    s.drift = std::move(b);
    s.drift_r = std::move(b_r);
    s.sigma = sigma;
    s.r0 = r0;
    s.state_dependent = true;
    return s;
  }

  double vol(double t, double r) const { return volatility ? volatility(t, r) : sigma; }
  double vol_r(double t, double r) const { return volatility_r ? volatility_r(t, r) : 0.0; }
};

/// Euler recursion R_{k+1} = R_k + b dt + sigma dW along every branch.
inline NodeProcess simulate_state(const Lattice& lattice, const StateSde& sde) {
  require(static_cast<bool>(sde.drift), ErrorKind::invalid_argument, "state SDE needs a drift");
  const bool state_vol = static_cast<bool>(sde.volatility);
  if (lattice.recombining()) {
    require(!sde.state_dependent && !state_vol, ErrorKind::mode_conflict,
            "state-dependent coefficients do not recombine; use a full-binary lattice");
    require(sde.sigma > 0.0, ErrorKind::invalid_argument, "sigma must be positive");
    // The drift ignores r here, so R(k, j) = r0 + cumulative drift + sigma * W(k, j).
    std::vector<double> cum(static_cast<std::size_t>(lattice.n_steps()) + 1, 0.0);
    for (int k = 0; k < lattice.n_steps(); ++k)
      cum[k + 1] = cum[k] + sde.drift(lattice.time(k), sde.r0 + cum[k]) * lattice.dt();
    return NodeProcess::from_function(lattice, [&](int k, std::size_t j) {
      return sde.r0 + cum[static_cast<std::size_t>(k)] + sde.sigma * lattice.w(k, j);
    });
  }
  auto sweep = forward_sweep(lattice, sde.r0, [&](int k, std::size_t, bool up, double r) {
    const double t = lattice.time(k);
    const double vol = sde.vol(t, r);
    require(vol > 0.0, ErrorKind::invalid_argument, "volatility must stay positive");
    return r + sde.drift(t, r) * lattice.dt() + vol * lattice.increment(up);
  });
  return std::move(sweep.values);
}

/// First-variation process dR/dr0 along the same Euler recursion.
inline NodeProcess simulate_tangent(const Lattice& lattice, const StateSde& sde, const NodeProcess& state) {
  if (lattice.recombining()) return NodeProcess::on_nodes(lattice, 1.0);
  require(static_cast<bool>(sde.drift_r), ErrorKind::invalid_argument, "tangent process needs db/dr");
  auto sweep = forward_sweep(lattice, 1.0, [&](int k, std::size_t i, bool up, double grad) {
    const double t = lattice.time(k);
    const double r = state.at(k, i);
    return grad * (1.0 + sde.drift_r(t, r) * lattice.dt() + sde.vol_r(t, r) * lattice.increment(up));
  });
  return std::move(sweep.values);
}

}  // namespace impact
