#pragma once

// Value function V(t, x) by dynamic programming on a time x wealth grid, the
// pointwise operator L^V with its maximizer, the PDE residual, and the map
// from a value surface back to (X, zeta, M).

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "impact/driver.hpp"
#include "impact/error.hpp"
#include "impact/interpolation.hpp"
#include "impact/lattice.hpp"
#include "impact/market.hpp"
#include "impact/optimizer.hpp"
#include "impact/parallel.hpp"
#include "impact/utility.hpp"

namespace impact {

/// Cells trimmed from each side of the x-grid before anything is reported.
inline constexpr int kBoundaryCells = 3;

struct XGrid {
  double x_min = -3.0;
  double x_max = 3.0;
  int n_x = 401;

  double dx() const { return (x_max - x_min) / (n_x - 1); }
  double x(int i) const { return i == n_x - 1 ? x_max : x_min + dx() * i; }
  void validate() const {
    require(x_max > x_min && n_x >= 2 * kBoundaryCells + 3, ErrorKind::invalid_argument,
            "x grid needs x_max > x_min and at least " + std::to_string(2 * kBoundaryCells + 3) + " points");
  }
};

/// Attainable integrands: the whole line (complete market) or theta Z(-S) with theta >= 0.
struct ControlSpec {
  enum class Kind { interval, theta_plus };
  Kind kind = Kind::interval;
  double z_minus = 1.0;  // Z(-S), deterministic in the Markov case

  static ControlSpec interval() { return {}; }
  static ControlSpec theta_plus(double z_minus) {
    require(z_minus != 0.0, ErrorKind::invalid_argument, "Z(-S) must be non-zero");
    return {Kind::theta_plus, z_minus};
  }
};

class ValueSurface {
 public:
  ValueSurface(TimeGrid tgrid, XGrid xgrid)
      : tgrid_(tgrid), xgrid_(xgrid),
        v_(static_cast<std::size_t>(tgrid.n_steps()) + 1, std::vector<double>(static_cast<std::size_t>(xgrid.n_x))) {
    xgrid_.validate();
  }

  const TimeGrid& tgrid() const { return tgrid_; }
  const XGrid& xgrid() const { return xgrid_; }
  int n_t() const { return tgrid_.n_steps(); }
  int n_x() const { return xgrid_.n_x; }

  std::vector<double>& row(int k) { return v_.at(static_cast<std::size_t>(k)); }
  const std::vector<double>& row(int k) const { return v_.at(static_cast<std::size_t>(k)); }
  double v(int k, int i) const { return v_[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)]; }

  /// Central stencils; valid for 1 <= i <= n_x - 2.
  double vx(int k, int i) const { return (v(k, i + 1) - v(k, i - 1)) / (2.0 * xgrid_.dx()); }
  double vxx(int k, int i) const {
    const double dx = xgrid_.dx();
    return (v(k, i + 1) - 2.0 * v(k, i) + v(k, i - 1)) / (dx * dx);
  }
  /// alpha_x of the martingale part; identically zero for deterministic coefficients.
  double alpha_x(int, int) const { return 0.0; }

  int interior_begin() const { return kBoundaryCells; }
  int interior_end() const { return xgrid_.n_x - kBoundaryCells; }

  MonotoneCubic interpolant(int k) const { return MonotoneCubic(xgrid_.x_min, xgrid_.dx(), row(k)); }

  /// Fourth-order V_xx on the whole row (edge values copied inward), for
  /// off-grid interpolation where the three-point stencil is too coarse.
  std::vector<double> vxx_row_fine(int k) const {
    const int n = xgrid_.n_x;
    const double dx2 = xgrid_.dx() * xgrid_.dx();
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 2; i + 2 < n; ++i)
      out[i] = (-v(k, i + 2) + 16.0 * v(k, i + 1) - 30.0 * v(k, i) + 16.0 * v(k, i - 1) - v(k, i - 2)) / (12.0 * dx2);
    out[1] = vxx(k, 1);
    out[n - 2] = vxx(k, n - 2);
    out[0] = out[1];
    out[n - 1] = out[n - 2];
    return out;
  }

 private:
  TimeGrid tgrid_;
  XGrid xgrid_;
  std::vector<std::vector<double>> v_;
};

struct PolicySlice {
  std::vector<std::vector<double>> upsilon;    // [k][i], k < n_t
  std::vector<std::vector<double>> theta_hat;  // [k][i]
};

struct DpResult {
  ValueSurface surface;
  PolicySlice policy;
  ControlSpec control;
};

namespace detail {

inline double driver_slope_bound(const Driver& driver, const TimeGrid& tg) {
  double c = 1.0;
  if (driver.has_gradient())
    for (int k = 0; k <= tg.n_steps(); ++k) c = std::max(c, std::abs(driver.grad(tg.time(k), 0.0)));
  return c;
}

struct Argmax {
  double arg = 0.0;
  double value = 0.0;
  bool at_edge = false;
};

/// Maximizes a concave function of the control parameter u on [lo, hi]; the
/// candidates 0 (if inside) and both ends are always compared, so a flat
/// optimum at 0 is reported exactly.
template <class Fn>
Argmax golden_max(Fn&& fn, double lo, double hi, int iterations = 80) {
  constexpr double r = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = fn(c), fd = fn(d);
  for (int it = 0; it < iterations && b - a > 1e-13 * (1.0 + std::abs(a) + std::abs(b)); ++it) {
    if (fc >= fd) {
      b = d; d = c; fd = fc;
      c = b - r * (b - a); fc = fn(c);
    } else {
      a = c; c = d; fc = fd;
      d = a + r * (b - a); fd = fn(d);
    }
  }
  Argmax best{0.5 * (a + b), fn(0.5 * (a + b)), false};
  const double span = hi - lo;
  if (lo <= 0.0 && hi >= 0.0) {
    const double f0 = fn(0.0);
    const bool no_gain = !(best.value > f0 + 64.0 * std::numeric_limits<double>::epsilon() * std::abs(f0));
    if (no_gain || std::abs(best.arg) < 1e-9 * span) best = {0.0, f0, false};
  }
  for (double edge : {lo, hi}) {
    if (edge == 0.0) continue;
    const double fe = fn(edge);
    if (fe > best.value) best = {edge, fe, true};
  }
  for (double edge : {lo, hi})
    if (edge != 0.0 && std::abs(best.arg - edge) < 1e-9 * span) best.at_edge = true;
  return best;
}

}  // namespace detail

struct LvResult {
  double lv = 0.0;
  double upsilon = 0.0;
  double theta_hat = 0.0;
};

/// sup over attainable z of -g(t,z) V_x + 1/2 z^2 V_xx + z alpha_x.
inline LvResult lv_at(const Driver& driver, double t, double vx, double vxx, double alpha_x,
                      const ControlSpec& control, bool force_search = false, double bracket_scale = 1.0) {
  if (!(vxx < 0.0))
    fail(ErrorKind::concavity_violation, "V_xx = " + std::to_string(vxx) + " is not negative");
  auto objective = [&](double z) { return -driver.eval(t, z) * vx + 0.5 * z * z * vxx + z * alpha_x; };
  LvResult out;
  if (control.kind == ControlSpec::Kind::theta_plus) {
    const double zs = control.z_minus;
    if (!force_search && driver.flags().is_homogeneous) {
      const double th1 = (driver.eval(t, zs) * vx - zs * alpha_x) / (zs * zs * vxx);
      out.theta_hat = std::max(th1, 0.0);
    } else {
      const double radius = bracket_scale * (1.0 + std::abs(vx / vxx)) / std::abs(zs);
      out.theta_hat = detail::golden_max([&](double th) { return objective(th * zs); }, 0.0, radius).arg;
    }
    out.upsilon = out.theta_hat * zs;
    out.lv = out.theta_hat == 0.0 ? 0.0 : objective(out.upsilon);
    return out;
  }
  double c = 0.0, e = 0.0;
  if (!force_search && driver.quadratic_form(t, c, e)) {
    out.upsilon = -(e * vx + alpha_x) / (vxx - c * vx);
  } else {
    const double radius = bracket_scale * (1.0 + std::abs(vx / vxx));
    out.upsilon = detail::golden_max(objective, -radius, radius).arg;
  }
  out.theta_hat = out.upsilon;
  out.lv = objective(out.upsilon);
  return out;
}

/// L^V and its maximizer at grid point (k, i), from the central stencils.
inline LvResult lv_operator(const ValueSurface& s, const Driver& driver, int k, int i,
                            const ControlSpec& control = {}, bool force_search = false) {
  require(i >= 1 && i + 1 < s.n_x(), ErrorKind::invalid_argument, "lv_operator needs an interior grid point");
  return lv_at(driver, s.tgrid().time(k), s.vx(k, i), s.vxx(k, i), s.alpha_x(k, i), control, force_search,
               detail::driver_slope_bound(driver, s.tgrid()));
}

/// V_k(x) = max_z 1/2 [V_{k+1}(x - g dt + z sqrt(dt)) + V_{k+1}(x - g dt - z sqrt(dt))], V_n = U.
inline DpResult dp_value(const TimeGrid& tgrid, const XGrid& xgrid, const Driver& driver, const Utility& utility,
                         const ControlSpec& control = {}) {
  require(driver.flags().is_deterministic, ErrorKind::contract_violation,
          "dynamic programming on a wealth grid needs deterministic driver coefficients");
  DpResult res{ValueSurface(tgrid, xgrid), {}, control};
  ValueSurface& s = res.surface;
  const int nt = tgrid.n_steps();
  const int nx = xgrid.n_x;
  res.policy.upsilon.assign(static_cast<std::size_t>(nt), std::vector<double>(static_cast<std::size_t>(nx)));
  res.policy.theta_hat = res.policy.upsilon;
  for (int i = 0; i < nx; ++i) s.row(nt)[i] = utility.u(xgrid.x(i));
  const double dt = tgrid.dt();
  const double sdt = std::sqrt(dt);
  const double c = detail::driver_slope_bound(driver, tgrid);
  for (int k = nt - 1; k >= 0; --k) {
    const double t = tgrid.time(k);
    const MonotoneCubic next = s.interpolant(k + 1);
    double ratio = 0.0;
    for (int i = s.interior_begin(); i < s.interior_end(); ++i) {
      const double vxx = s.vxx(k + 1, i);
      if (vxx < 0.0) ratio = std::max(ratio, std::abs(s.vx(k + 1, i) / vxx));
    }
    const double radius = c * (1.0 + ratio);
    const bool plus = control.kind == ControlSpec::Kind::theta_plus;
    const double lo = plus ? 0.0 : -radius;
    const double hi = plus ? radius / std::abs(control.z_minus) : radius;
    std::vector<char> exhausted(static_cast<std::size_t>(nx), 0);
    auto& row = s.row(k);
    parallel_for(0, static_cast<std::size_t>(nx), [&](std::size_t ii) {
      const double x = xgrid.x(static_cast<int>(ii));
      auto objective = [&](double u) {
        const double z = plus ? u * control.z_minus : u;
        const double drift = x - driver.eval(t, z) * dt;
        return 0.5 * (next(drift + z * sdt) + next(drift - z * sdt));
      };
      const auto best = detail::golden_max(objective, lo, hi);
      row[ii] = best.value;
      res.policy.theta_hat[k][ii] = best.arg;
      res.policy.upsilon[k][ii] = plus ? best.arg * control.z_minus : best.arg;
      exhausted[ii] = best.at_edge ? 1 : 0;
    }, 32);
    for (int i = s.interior_begin(); i < s.interior_end(); ++i)
      if (exhausted[static_cast<std::size_t>(i)])
        fail(ErrorKind::control_bracket_exhausted,
             "optimal control at the search bound at level " + std::to_string(k) + ", x = " +
                 std::to_string(xgrid.x(i)));
    for (double v : row)
      if (!std::isfinite(v)) fail(ErrorKind::numeric_overflow, "non-finite value at level " + std::to_string(k));
  }
  return res;
}

struct ResidualReport {
  double max_residual = 0.0;
  int points = 0;
  int excluded_band = 0;  // points skipped next to a change in the sign of theta_hat
  std::vector<std::vector<double>> field;  // [k][i], NaN where not evaluated
};

/// max |dV/dt + L^V| over interior levels 1..n-1 and interior x, dV/dt centred in time.
inline ResidualReport bspde_residual(const ValueSurface& s, const Driver& driver, const ControlSpec& control = {}) {
  ResidualReport r;
  const int nt = s.n_t();
  const double dt = s.tgrid().dt();
  r.field.assign(static_cast<std::size_t>(nt) + 1,
                 std::vector<double>(static_cast<std::size_t>(s.n_x()), std::numeric_limits<double>::quiet_NaN()));
  const double c = detail::driver_slope_bound(driver, s.tgrid());
  for (int k = 1; k < nt; ++k) {
    const double t = s.tgrid().time(k);
    std::vector<double> th(static_cast<std::size_t>(s.n_x()), 0.0);
    std::vector<double> res(static_cast<std::size_t>(s.n_x()), 0.0);
    for (int i = s.interior_begin(); i < s.interior_end(); ++i) {
      const auto lv = lv_at(driver, t, s.vx(k, i), s.vxx(k, i), s.alpha_x(k, i), control, false, c);
      const double vt = (s.v(k + 1, i) - s.v(k - 1, i)) / (2.0 * dt);
      th[i] = lv.theta_hat;
      res[i] = std::abs(vt + lv.lv);
    }
    for (int i = s.interior_begin(); i < s.interior_end(); ++i) {
      const bool near_switch = control.kind == ControlSpec::Kind::theta_plus &&
                               ((i > s.interior_begin() && (th[i - 1] > 0.0) != (th[i] > 0.0)) ||
                                (i + 1 < s.interior_end() && (th[i + 1] > 0.0) != (th[i] > 0.0)));
      if (near_switch) {
        ++r.excluded_band;
        continue;
      }
      r.field[k][i] = res[i];
      r.max_residual = std::max(r.max_residual, res[i]);
      ++r.points;
    }
  }
  return r;
}

/// A surface given by formulas, used to check the operator against exact solutions.
struct AnalyticSurface {
  std::function<double(double, double)> v, v_t, v_x, v_xx;
  std::function<double(double, double)> alpha_x;  // empty means zero
};

inline double bspde_residual(const AnalyticSurface& s, const Driver& driver, const std::vector<double>& ts,
                             const std::vector<double>& xs, const ControlSpec& control = {}) {
  double worst = 0.0;
  for (double t : ts)
    for (double x : xs) {
      const double ax = s.alpha_x ? s.alpha_x(t, x) : 0.0;
      const auto lv = lv_at(driver, t, s.v_x(t, x), s.v_xx(t, x), ax, control);
      worst = std::max(worst, std::abs(s.v_t(t, x) + lv.lv));
    }
  return worst;
}

/// V(t, x) = -exp(-gamma_A (x + zeta_t)), zeta_t = int_t^T eta^2 ds / (2(gamma + gamma_A)).
inline AnalyticSurface cara_value_surface(double gamma, const PiecewiseConstant& eta, double gamma_a, double horizon) {
  const double c = gamma + gamma_a;
  auto zeta = [=](double t) { return eta.integral_of_square(t, horizon) / (2.0 * c); };
  AnalyticSurface s;
  s.v = [=](double t, double x) { return -std::exp(-gamma_a * (x + zeta(t))); };
  s.v_t = [=](double t, double x) {
    const double e = eta(t);
    return -gamma_a * e * e / (2.0 * c) * std::exp(-gamma_a * (x + zeta(t)));
  };
  s.v_x = [=](double t, double x) { return gamma_a * std::exp(-gamma_a * (x + zeta(t))); };
  s.v_xx = [=](double t, double x) { return -gamma_a * gamma_a * std::exp(-gamma_a * (x + zeta(t))); };
  return s;
}

/// Forward wealth under the surface's maximizer, then zeta = I(V_x(t, X)) - X
/// and M = upsilon V_xx / U''(X + zeta) - upsilon.
inline FbsdeSolution fbsde_from_surface(const DpResult& dp, const Lattice& lat, const Driver& driver,
                                        const Utility& utility, double x0) {
  const ValueSurface& s = dp.surface;
  require(lat.n_steps() == s.n_t() && lat.horizon() == s.tgrid().horizon(), ErrorKind::invalid_argument,
          "lattice and surface must share the time grid");
  const XGrid& xg = s.xgrid();
  const int n = lat.n_steps();
  const double dt = lat.dt();
  const double lo = xg.x(s.interior_begin());
  const double hi = xg.x(s.interior_end() - 1);

  FbsdeSolution sol;
  sol.set = dp.control.kind == ControlSpec::Kind::theta_plus ? StrategySet::theta_plus : StrategySet::theta;
  sol.h = NodeProcess::on_steps(lat);
  sol.theta = NodeProcess::on_steps(lat);
  sol.m = NodeProcess::on_steps(lat);
  // V_x from the slope of the value interpolant (fourth order at the nodes)
  std::vector<MonotoneCubic> v_interp;
  std::vector<MonotoneCubic> vxx_interp;
  v_interp.reserve(static_cast<std::size_t>(n));
  vxx_interp.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    v_interp.push_back(s.interpolant(k));
    vxx_interp.emplace_back(xg.x_min, xg.dx(), s.vxx_row_fine(k));
  }
  auto policy = [&](int k, double x) {
    if (x < lo || x > hi)
      fail(ErrorKind::extrapolation_refused, "wealth " + std::to_string(x) + " left the reported x range at level " +
                                                 std::to_string(k));
    return linear_uniform(dp.policy.upsilon[static_cast<std::size_t>(k)], xg.x_min, xg.dx(), x);
  };
  auto sweep = forward_sweep(lat, x0, [&](int k, std::size_t, bool up, double x) {
    const double z = policy(k, x);
    return x - driver.eval(lat.time(k), z) * dt + z * lat.increment(up);
  });
  sol.x = std::move(sweep.values);
  sol.recombination_gap = sweep.recombination_gap;
  sol.zeta = NodeProcess::on_nodes(lat);
  for (int k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < lat.level_size(k); ++i) {
      const double x = sol.x.at(k, i);
      const double z = policy(k, x);
      const double vx = v_interp[static_cast<std::size_t>(k)].derivative(x);
      if (!(vx > 0.0))
        fail(ErrorKind::inverse_domain_error, "V_x = " + std::to_string(vx) + " outside the range of U'");
      const double zeta = utility.inverse_marginal(vx) - x;
      const double vxx = vxx_interp[static_cast<std::size_t>(k)](x);
      sol.zeta.at(k, i) = zeta;
      sol.h.at(k, i) = z;
      sol.m.at(k, i) = z * vxx / utility.u2(x + zeta) - z;
      sol.theta.at(k, i) =
          sol.set == StrategySet::theta_plus
              ? linear_uniform(dp.policy.theta_hat[static_cast<std::size_t>(k)], xg.x_min, xg.dx(), x)
              : z;
    }
  }
  // zeta_T = I(U'(X_T)) - X_T = 0
  if (sol.set == StrategySet::theta_plus || uses_homogeneous_branches(driver)) {
    FbsdeOptions opts;
    sol.curve = make_curve(lat, driver, opts);
  }
  sol.report = verify_optimality(sol, driver, utility);
  return sol;
}

}  // namespace impact
