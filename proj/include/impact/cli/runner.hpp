#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "impact/cli/config.hpp"

namespace impact::cli {

using Json = nlohmann::ordered_json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitSolver = 3;
inline constexpr int kExitNumeric = 4;

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument:
    case ErrorKind::mode_conflict:
    case ErrorKind::unsupported_operation:
    case ErrorKind::contract_violation:
    case ErrorKind::step_size_violation:
      return kExitConfig;
    case ErrorKind::non_convergence:
    case ErrorKind::root_not_found:
    case ErrorKind::control_bracket_exhausted:
    case ErrorKind::ambiguity:
      return kExitSolver;
    default:
      return kExitNumeric;
  }
}

/// Rows of fixed-width text; empty cells mark quantities undefined at a node
/// (step processes at the terminal level, residuals outside the interior).
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  CsvTable& row() {
    rows_.emplace_back();
    return *this;
  }
  CsvTable& text(const std::string& s) {
    rows_.back().push_back(s);
    return *this;
  }
  CsvTable& integer(long long v) { return text(std::to_string(v)); }
  CsvTable& num(double v) {
    if (!std::isfinite(v))
      fail(ErrorKind::numeric_overflow,
           "non-finite value in column '" + header_.at(rows_.back().size()) + "' of row " + std::to_string(rows_.size()));
    return text(format(v));
  }
  CsvTable& blank() { return text(""); }

  static std::string format(double v) {
    if (v == 0.0) v = 0.0;  // drop negative zero
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.15g", v);
    return buf;
  }

  std::size_t size() const { return rows_.size(); }

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::invalid_argument, "cannot write " + path.string());
    write_line(out, header_);
    for (const auto& r : rows_) write_line(out, r);
  }

 private:
  static void write_line(std::ostream& out, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

struct RunResult {
  int exit_code = kExitOk;
  Json report;
  std::vector<std::string> files;
};

namespace detail {

/// Finite numbers only; anything else is an internal numeric failure.
inline double finite(double v, const std::string& what) {
  if (!std::isfinite(v)) fail(ErrorKind::numeric_overflow, "non-finite " + what);
  return v;
}

inline Json echo(const ScenarioConfig& c) {
  Json j;
  j["name"] = c.name;
  j["driver"] = {{"kind", c.driver.kind}, {"gamma", c.driver.gamma}, {"eta", c.driver.eta},
                 {"nu", c.driver.nu},     {"alpha", c.driver.alpha}, {"kappa", c.driver.kappa}};
  j["utility"] = {{"kind", c.utility.kind}, {"gamma_a", c.utility.gamma_a}, {"a", c.utility.a},
                  {"b", c.utility.b},       {"c", c.utility.c}};
  j["market"] = {{"horizon", c.market.horizon},   {"x0", c.market.x0},
                 {"payoff", c.market.payoff},     {"payoff_a", c.market.payoff_a},
                 {"payoff_b", c.market.payoff_b}, {"strike", c.market.strike},
                 {"state_map", c.market.state_map}, {"h_m", c.market.h_m},
                 {"h_m_scale", c.market.h_m_scale}, {"claim_units", c.market.claim_units}};
  j["numerics"] = {{"n_steps", c.numerics.n_steps}, {"topology", c.numerics.topology},
                   {"n_x", c.numerics.n_x},         {"x_range", {c.numerics.x_min, c.numerics.x_max}},
                   {"y_range", {c.numerics.y_min, c.numerics.y_max}}, {"y_count", c.numerics.y_count},
                   {"tol", c.numerics.tol},         {"max_iter", c.numerics.max_iter},
                   {"damping", c.numerics.damping}, {"mode", c.numerics.mode},
                   {"solver", c.numerics.solver},   {"seed", c.numerics.seed}};
  return j;
}

inline Json optimality_json(const OptimalityReport& r) {
  return {{"martingale_residual", finite(r.martingale_residual, "martingale residual")},
          {"martingale_residual_relative", finite(r.martingale_residual_relative, "martingale residual")},
          {"foc_residual", finite(r.foc_residual, "FOC residual")},
          {"slack_minus", finite(r.slack_minus, "slack")},
          {"slack_plus", finite(r.slack_plus, "slack")}};
}

inline bool all_zero(const NodeProcess& p) {
  for (int k = 0; k < p.n_levels(); ++k)
    for (double v : p.level(k))
      if (v != 0.0) return false;
  return true;
}

inline bool all_equal(const NodeProcess& p, double c) {
  for (int k = 0; k < p.n_levels(); ++k)
    for (double v : p.level(k))
      if (v != c) return false;
  return true;
}

/// One row per node; step processes are blank at the terminal level.
inline void solution_rows(CsvTable& t, const FbsdeSolution& s, const std::string& route) {
  const Lattice& lat = s.x.lattice();
  for (int k = 0; k <= lat.n_steps(); ++k)
    for (std::size_t i = 0; i < lat.level_size(k); ++i) {
      t.row();
      if (!route.empty()) t.text(route);
      t.integer(k).integer(static_cast<long long>(i)).num(s.x.at(k, i)).num(s.zeta.at(k, i));
      if (k < lat.n_steps())
        t.num(s.m.at(k, i)).num(s.theta.at(k, i)).num(s.h.at(k, i));
      else
        t.blank().blank().blank();
    }
}

inline Json solution_json(const FbsdeSolution& s) {
  Json j;
  j["z_star"] = finite(s.h.at(0, 0), "Z*");
  j["zeta0"] = finite(s.zeta.at(0, 0), "zeta0");
  j["theta0"] = finite(s.theta.at(0, 0), "theta0");
  j["x_terminal_mean"] = finite(expectation(s.x, s.x.n_levels() - 1), "terminal wealth");
  j["m_max_abs"] = finite(s.m.max_abs(), "M");
  j["theta_identically_zero"] = all_zero(s.theta);
  j["set"] = std::string(to_string(s.set));
  j["iterations"] = s.iterations;
  j["converged"] = s.converged;
  j["last_change"] = finite(s.last_change, "last change");
  j["recombination_gap"] = finite(s.recombination_gap, "recombination gap");
  j["ambiguous_nodes"] = s.ambiguous_nodes;
  j["optimality"] = optimality_json(s.report);
  return j;
}

struct Context {
  const ScenarioConfig& cfg;
  Lattice lat;
  Driver driver;
  Utility utility;
  NodeProcess s;
  std::optional<NodeProcess> h_m;

  explicit Context(const ScenarioConfig& c)
      : cfg(c), lat(c.make_lattice()), driver(c.make_driver()), utility(c.make_utility()), s(c.make_payoff(lat)),
        h_m(c.make_h_m(lat)) {}

  FbsdeOptions fbsde_options() const {
    FbsdeOptions o;
    o.set = cfg.strategy_set();
    o.traded = s;
    o.y_grid = cfg.y_grid();
    return o;
  }
};

struct Flags {
  bool non_convergence = false;
  bool ambiguity = false;
  bool route_mismatch = false;
  bool perturbation_improves = false;

  bool any() const { return non_convergence || ambiguity || route_mismatch || perturbation_improves; }
  Json json() const {
    return {{"non_convergence", non_convergence},
            {"ambiguity", ambiguity},
            {"route_mismatch", route_mismatch},
            {"perturbation_improves", perturbation_improves}};
  }
  void absorb(const FbsdeSolution& s) {
    non_convergence = non_convergence || !s.converged;
    ambiguity = ambiguity || s.ambiguous_nodes > 0;
  }
};

inline FbsdeSolution run_fbsde(const Context& c) {
  const auto& n = c.cfg.numerics;
  const bool cara = n.solver == "cara" || (n.solver == "auto" && c.utility.is_cara());
  if (cara) {
    require(c.utility.is_cara(), ErrorKind::contract_violation, "the CARA solver needs a CARA utility");
    return solve_fbsde_cara(c.lat, c.driver, c.utility.gamma_a(), c.cfg.market.x0, c.fbsde_options());
  }
  return solve_fbsde_picard(c.lat, c.driver, c.utility, c.cfg.market.x0, n.tol, n.max_iter, n.damping,
                            c.fbsde_options());
}

/// The closed-form route: the exponential triple in the complete market, or
/// the no-trade solution when 0 is a subgradient of g at the origin.
inline std::optional<FbsdeSolution> run_closed_form(const Context& c, Json& info) {
  const auto& cfg = c.cfg;
  if (cfg.driver.kind == "drifted_quadratic") {
    if (cfg.market.payoff != "identity") throw ConfigError("closed forms price the claim W_T (payoff = identity)");
    MarketSpec mk{cfg.driver.gamma, PiecewiseConstant::constant(cfg.driver.eta), c.utility, cfg.market.x0};
    info["route"] = c.utility.is_cara() ? "exponential_triple" : "conditional_wealth";
    info["lambda"] = finite(budget_lambda(c.lat, mk), "lambda");
    if (!c.utility.is_cara()) return std::nullopt;
    return exponential_triple(c.lat, mk);
  }
  auto nt = no_trade_solution(c.lat, c.driver, cfg.market.x0, c.utility);
  if (nt) info["route"] = "no_trade";
  return nt;
}

/// X_T = f(lambda xi_T) for the complete market with any utility.
inline std::vector<double> conditional_terminal_wealth(const Context& c) {
  MarketSpec mk{c.cfg.driver.gamma, PiecewiseConstant::constant(c.cfg.driver.eta), c.utility, c.cfg.market.x0};
  const NodeProcess xi = girsanov_density(c.lat, mk.eta);
  return optimal_terminal_wealth(budget_lambda(c.lat, mk), impact::detail::terminal_vector(xi), inverse_marginal_f(c.utility, mk.gamma));
}

inline ControlSpec control_for(const Context& c) {
  const auto set = c.cfg.strategy_set().value_or(uses_homogeneous_branches(c.driver) ? StrategySet::theta_plus
                                                                                    : StrategySet::theta);
  if (set == StrategySet::theta) return ControlSpec::interval();
  const NodeProcess zm = z_of_position(c.lat, c.driver, c.s, 1.0).z;
  const double z0 = zm.at(0, 0);
  require(c.h_m == std::nullopt && max_abs_diff(zm, NodeProcess::on_steps(c.lat, z0)) <= 1e-12,
          ErrorKind::mode_conflict, "theta_plus surface needs a deterministic Z(-S)");
  return ControlSpec::theta_plus(z0);
}

struct SurfaceRoute {
  DpResult dp;
  ResidualReport residual;
};

inline SurfaceRoute run_surface(const Context& c) {
  const TimeGrid tg(c.cfg.market.horizon, c.cfg.numerics.n_steps);
  SurfaceRoute r{dp_value(tg, c.cfg.x_grid(), c.driver, c.utility, control_for(c)), {}};
  r.residual = bspde_residual(r.dp.surface, c.driver, r.dp.control);
  return r;
}

/// Largest gain in expected utility over seeded perturbations theta* + 0.01 eps.
inline double perturbation_gain(const Context& c, const FbsdeSolution& sol, int count, Json& info) {
  const double base = expected_utility(c.lat, c.driver, c.utility, c.cfg.market.x0, sol.h);
  std::mt19937_64 rng(c.cfg.numerics.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = -std::numeric_limits<double>::infinity();
  for (int p = 0; p < count; ++p) {
    NodeProcess theta = sol.theta;
    for (int k = 0; k < theta.n_levels(); ++k)
      for (double& v : theta.level(k)) {
        v += 0.01 * normal(rng);
        if (sol.set == StrategySet::theta_plus) v = std::max(v, 0.0);
      }
    const NodeProcess z = z_of_strategy(*sol.curve, Strategy::from_process(std::move(theta)));
    worst = std::max(worst, expected_utility(c.lat, c.driver, c.utility, c.cfg.market.x0, z) - base);
  }
  info["expected_utility"] = finite(base, "expected utility");
  info["count"] = count;
  info["max_gain"] = count > 0 ? finite(worst, "perturbation gain") : 0.0;
  return count > 0 ? worst : 0.0;
}

inline double node_gap(const NodeProcess& a, const NodeProcess& b) { return max_abs_diff(a, b); }

// ---- commands -------------------------------------------------------------

inline void cmd_gexp(const Context& c, Json& res, CsvTable& t) {
  const NodeProcess terminal = position_terminal(c.s, -c.cfg.market.claim_units, c.h_m);
  const BsdeSolution sol = solve_bsde(c.lat, c.driver, terminal);
  const Lattice& lat = c.lat;
  for (int k = 0; k <= lat.n_steps(); ++k)
    for (std::size_t i = 0; i < lat.level_size(k); ++i) {
      t.row().integer(k).integer(static_cast<long long>(i)).num(lat.time(k)).num(lat.w(k, i)).num(sol.pi.at(k, i));
      if (k < lat.n_steps())
        t.num(sol.z.at(k, i));
      else
        t.blank();
    }
  res["pi0"] = finite(sol.pi.at(0, 0), "pi0");
  res["z0"] = lat.n_steps() > 0 ? finite(sol.z.at(0, 0), "z0") : 0.0;
  res["expectation"] = finite(expectation(terminal, lat.n_steps()), "expectation");
  if (c.driver.kind() == DriverKind::entropic) {
    const NodeProcess exact = entropic_exact(lat, c.driver.gamma(), terminal);
    res["entropic_exact_pi0"] = finite(exact.at(0, 0), "exact pi0");
    res["entropic_max_gap"] = finite(max_abs_diff(exact, sol.pi), "entropic gap");
  }
}

inline void cmd_price(const Context& c, Json& res, CsvTable& t) {
  std::map<double, double> root;  // y -> Pi_0(H_M - y S)
  auto pi0 = [&](double y) {
    auto it = root.find(y);
    if (it != root.end()) return it->second;
    const double v = z_of_position(c.lat, c.driver, c.s, y, c.h_m).pi.at(0, 0);
    root.emplace(y, v);
    return v;
  };
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double z : c.cfg.z_grid())
    for (double y : c.cfg.y_grid()) {
      const double p = y == 0.0 ? 0.0 : pi0(-z) - pi0(y - z);
      t.row().num(0.0).num(z).num(y).num(p);
      lo = std::min(lo, p);
      hi = std::max(hi, p);
    }
  res["expected_s"] = finite(expectation(c.s, c.lat.n_steps()), "E[S]");
  res["price_min"] = finite(lo, "price");
  res["price_max"] = finite(hi, "price");
  res["bsde_solves"] = root.size();
  if (c.driver.has_gradient()) {
    const auto d = dz_dy(c.lat, c.driver, c.s, 0.0, 1e-6, c.h_m);
    res["kink_at_zero"] = d.kink;
    res["kink_gap"] = finite(d.kink_gap, "kink gap");
  }
}

inline void cmd_solve(const Context& c, Json& res, CsvTable& t, Flags& flags) {
  const FbsdeSolution sol = run_fbsde(c);
  flags.absorb(sol);
  solution_rows(t, sol, "");
  res["fbsde"] = solution_json(sol);
  try {
    res["expected_utility"] = finite(expected_utility(c.lat, c.driver, c.utility, c.cfg.market.x0, sol.h), "E[U]");
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::mode_conflict) throw;
    res["expected_utility"] = nullptr;
  }
}

inline void cmd_closedform(const Context& c, Json& res, CsvTable& t) {
  Json info;
  const auto sol = run_closed_form(c, info);
  if (!info.contains("route"))
    throw ConfigError("no closed form for driver '" + c.cfg.driver.kind + "': use drifted_quadratic or a no-trade driver");
  res["closed_form"] = info;
  if (sol) {
    solution_rows(t, *sol, "");
    res["solution"] = solution_json(*sol);
    return;
  }
  // non-CARA: optimal terminal wealth only
  const std::vector<double> xt = conditional_terminal_wealth(c);
  const int n = c.lat.n_steps();
  for (std::size_t i = 0; i < xt.size(); ++i)
    t.row().integer(n).integer(static_cast<long long>(i)).num(xt[i]).blank().blank().blank().blank();
}

inline void cmd_value(const Context& c, Json& res, CsvTable& t) {
  const SurfaceRoute r = run_surface(c);
  const ValueSurface& s = r.dp.surface;
  const XGrid& xg = s.xgrid();
  for (int k = 0; k <= s.n_t(); ++k)
    for (int i = s.interior_begin(); i < s.interior_end(); ++i) {
      t.row().num(s.tgrid().time(k)).num(xg.x(i)).num(s.v(k, i)).num(s.vx(k, i)).num(s.vxx(k, i));
      if (k < s.n_t())
        t.num(r.dp.policy.upsilon[k][i]).num(r.dp.policy.theta_hat[k][i]);
      else
        t.blank().blank();
      const double e = r.residual.field[k][i];
      if (std::isnan(e))
        t.blank();
      else
        t.num(e);
    }
  const double x0 = c.cfg.market.x0;
  res["v0_at_x0"] = finite(s.interpolant(0)(x0), "V(0, x0)");
  res["upsilon0_at_x0"] = finite(linear_uniform(r.dp.policy.upsilon[0], xg.x_min, xg.dx(), x0), "upsilon");
  res["residual"] = {{"max", finite(r.residual.max_residual, "residual")},
                     {"points", r.residual.points},
                     {"excluded_band", r.residual.excluded_band}};
  const Lattice lat = build_binomial(c.cfg.market.horizon, c.cfg.numerics.n_steps);
  const FbsdeSolution bridge = fbsde_from_surface(r.dp, lat, c.driver, c.utility, x0);
  res["bridge"] = solution_json(bridge);
}

inline void cmd_verify(const Context& c, Json& res, CsvTable& t, Flags& flags) {
  std::vector<std::pair<std::string, FbsdeSolution>> routes;
  Json cf_info;
  if (auto cf = run_closed_form(c, cf_info)) routes.emplace_back("closedform", std::move(*cf));
  res["closed_form"] = cf_info.is_null() ? Json("unavailable") : cf_info;

  FbsdeSolution fb = run_fbsde(c);
  flags.absorb(fb);
  routes.emplace_back("fbsde", std::move(fb));

  if (c.driver.flags().is_deterministic && c.lat.recombining()) {
    const SurfaceRoute sr = run_surface(c);
    res["bspde_residual"] = finite(sr.residual.max_residual, "residual");
    routes.emplace_back("surface", fbsde_from_surface(sr.dp, c.lat, c.driver, c.utility, c.cfg.market.x0));
  }

  Json per_route = Json::object();
  for (const auto& [name, sol] : routes) {
    solution_rows(t, sol, name);
    per_route[name] = solution_json(sol);
    per_route[name]["x_identically_x0"] = all_equal(sol.x, c.cfg.market.x0);
  }
  res["routes"] = per_route;

  Json gaps = Json::array();
  for (std::size_t a = 0; a < routes.size(); ++a)
    for (std::size_t b = a + 1; b < routes.size(); ++b) {
      const auto& sa = routes[a].second;
      const auto& sb = routes[b].second;
      const double g = std::max({node_gap(sa.x, sb.x), node_gap(sa.zeta, sb.zeta), node_gap(sa.h, sb.h),
                                 node_gap(sa.theta, sb.theta)});
      gaps.push_back({{"pair", routes[a].first + "-" + routes[b].first}, {"max_gap", finite(g, "route gap")}});
      if (g > c.cfg.numerics.route_tol) flags.route_mismatch = true;
    }
  if (cf_info.is_object() && cf_info["route"] == "conditional_wealth") {
    // terminal wealth only: f(lambda xi_T) against the iterated solution
    const auto& fbx = routes.front().second.x;
    const std::vector<double> xt = conditional_terminal_wealth(c);
    const int n = c.lat.n_steps();
    double g = 0.0;
    for (std::size_t i = 0; i < xt.size(); ++i) g = std::max(g, std::abs(xt[i] - fbx.at(n, i)));
    gaps.push_back({{"pair", "closedform_terminal-fbsde_terminal"}, {"max_gap", finite(g, "route gap")}});
    if (g > c.cfg.numerics.route_tol) flags.route_mismatch = true;
  }
  res["route_gaps"] = gaps;

  const auto& ref = std::find_if(routes.begin(), routes.end(), [](const auto& r) { return r.first == "fbsde"; })->second;
  Json pert;
  try {
    const double gain = perturbation_gain(c, ref, c.cfg.numerics.perturbations, pert);
    if (gain > 1e-6) flags.perturbation_improves = true;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::mode_conflict) throw;
    pert = {{"skipped", e.what()}};
  }
  res["perturbation"] = pert;
}

inline void configure_threads() {
  const char* env = std::getenv("THREADS");
  unsigned n = 1;
  if (env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw ConfigError(std::string("THREADS must be a positive integer, got '") + env + "'");
    n = static_cast<unsigned>(v);
  }
  set_max_threads(n);
}

}  // namespace detail

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> names = {"gexp", "price", "solve", "closedform", "value", "verify"};
  return names;
}

inline std::vector<std::string> csv_header(const std::string& command) {
  if (command == "gexp") return {"level", "node", "t", "W", "pi", "z"};
  if (command == "price") return {"t", "z", "y", "P"};
  if (command == "solve" || command == "closedform") return {"level", "node", "x", "zeta", "m", "theta", "h"};
  if (command == "value") return {"t", "x", "V", "Vx", "Vxx", "upsilon", "theta_hat", "residual"};
  if (command == "verify") return {"route", "level", "node", "x", "zeta", "m", "theta", "h"};
  throw ConfigError("unknown command '" + command + "'");
}

/// Runs one command. Errors become exit codes; the JSON report is written
/// whenever the output directory is usable.
inline RunResult run(const std::string& command, const ScenarioConfig& cfg, const std::filesystem::path& out_dir) {
  RunResult rr;
  Json& rep = rr.report;
  rep["command"] = command;
  rep["scenario"] = detail::echo(cfg);
  detail::Flags flags;
  Json res = Json::object();
  const auto t0 = std::chrono::steady_clock::now();
  std::optional<CsvTable> table;
  try {
    table.emplace(csv_header(command));
    detail::configure_threads();
    const detail::Context ctx(cfg);
    if (command == "gexp") detail::cmd_gexp(ctx, res, *table);
    if (command == "price") detail::cmd_price(ctx, res, *table);
    if (command == "solve") detail::cmd_solve(ctx, res, *table, flags);
    if (command == "closedform") detail::cmd_closedform(ctx, res, *table);
    if (command == "value") detail::cmd_value(ctx, res, *table);
    if (command == "verify") detail::cmd_verify(ctx, res, *table, flags);
    rr.exit_code = flags.any() ? kExitSolver : kExitOk;
  } catch (const ConfigError& e) {
    rr.exit_code = kExitConfig;
    rep["error"] = {{"kind", "config"}, {"message", e.what()}};
    table.reset();
  } catch (const Error& e) {
    rr.exit_code = exit_code_for(e.kind());
    rep["error"] = {{"kind", std::string(to_string(e.kind()))}, {"message", e.what()}};
    table.reset();
  } catch (const std::exception& e) {
    rr.exit_code = kExitNumeric;
    rep["error"] = {{"kind", "internal"}, {"message", e.what()}};
    table.reset();
  }
  rep["results"] = res;
  rep["flags"] = flags.json();
  rep["timing_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rep["threads"] = max_threads();
  rep["exit_code"] = rr.exit_code;

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    rep["write_error"] = ec.message();
    return rr;
  }
  if (table && cfg.outputs.csv) {
    const auto p = out_dir / (command + ".csv");
    table->write(p);
    rr.files.push_back(p.string());
  }
  if (cfg.outputs.json) {
    const auto p = out_dir / (command + ".json");
    rr.files.push_back(p.string());
    rep["files"] = rr.files;
    std::ofstream(p) << rep.dump(2) << '\n';
  }
  return rr;
}

/// Entry used by the executable: loads the config and maps every failure onto 2/3/4.
inline int run_main(const std::string& command, const std::string& config_path, const std::optional<std::string>& out,
                    std::ostream& log) {
  ScenarioConfig cfg;
  try {
    (void)csv_header(command);
    cfg = load_config(config_path);
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  const std::filesystem::path dir = out ? std::filesystem::path(*out) : std::filesystem::path(cfg.outputs.dir);
  RunResult r = run(command, cfg, dir);
  if (r.report.contains("error")) log << "error: " << r.report["error"]["message"].get<std::string>() << '\n';
  for (const auto& f : r.files) log << "wrote " << f << '\n';
  return r.exit_code;
}

}  // namespace impact::cli
