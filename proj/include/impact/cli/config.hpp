#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "impact/impact.hpp"

namespace impact::cli {

/// Raised for anything wrong with the scenario file itself; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DriverBlock {
  std::string kind = "entropic";
  double gamma = 1.0;
  double eta = 0.0;
  double nu = 0.0;
  double alpha = 1.0;
  double kappa = 0.1;
};

struct UtilityBlock {
  std::string kind = "cara";
  double gamma_a = 1.0;
  double a = 1.0, b = 0.0, c = 1.0;
};

struct MarketBlock {
  double horizon = 1.0;
  double x0 = 0.0;
  std::string payoff = "identity";  // identity | affine | call | markov
  double payoff_a = 1.0, payoff_b = 0.0;
  double strike = 0.0;
  std::string state_map = "identity";  // markov payoff: identity | square
  double state_mu = 0.0, state_sigma = 1.0, state_r0 = 0.0;
  std::string h_m = "none";  // none | square
  double h_m_scale = 1.0;
  double claim_units = 1.0;  // gexp terminal is H_M + claim_units * S
};

struct NumericsBlock {
  int n_steps = 200;
  std::string topology = "recombining";
  int n_x = 401;
  double x_min = -3.0, x_max = 3.0;
  double y_min = -4.0, y_max = 4.0;
  int y_count = 161;
  double z_min = -1.0, z_max = 1.0;
  int z_count = 5;
  double tol = 1e-10;
  int max_iter = 50;
  double damping = 0.5;
  std::string mode = "auto";    // auto | theta | theta_plus
  std::string solver = "auto";  // auto | cara | picard
  unsigned long long seed = 12345;
  int perturbations = 20;
  double route_tol = 1e-3;
};

struct OutputBlock {
  std::string dir = ".";
  bool csv = true;
  bool json = true;
};

struct ScenarioConfig {
  std::string name = "scenario";
  DriverBlock driver;
  UtilityBlock utility;
  MarketBlock market;
  NumericsBlock numerics;
  OutputBlock outputs;

  std::vector<double> y_grid() const {
    std::vector<double> y(static_cast<std::size_t>(numerics.y_count));
    for (int i = 0; i < numerics.y_count; ++i)
      y[static_cast<std::size_t>(i)] =
          i == numerics.y_count - 1 ? numerics.y_max
                                    : numerics.y_min + (numerics.y_max - numerics.y_min) * i / (numerics.y_count - 1);
    return y;
  }

  std::vector<double> z_grid() const {
    std::vector<double> z(static_cast<std::size_t>(numerics.z_count));
    for (int i = 0; i < numerics.z_count; ++i)
      z[static_cast<std::size_t>(i)] =
          numerics.z_count == 1 ? numerics.z_min
                                : numerics.z_min + (numerics.z_max - numerics.z_min) * i / (numerics.z_count - 1);
    return z;
  }

  Driver make_driver() const {
    const auto& d = driver;
    if (d.kind == "zero") return Driver::zero();
    if (d.kind == "linear") return Driver::linear(d.nu);
    if (d.kind == "quadratic") return Driver::quadratic(d.alpha);
    if (d.kind == "entropic") return Driver::entropic(d.gamma);
    if (d.kind == "drifted_quadratic") return Driver::drifted_quadratic(d.gamma, d.eta);
    if (d.kind == "homogeneous") return Driver::homogeneous(d.kappa);
    throw ConfigError("unknown driver kind '" + d.kind + "'");
  }

  Utility make_utility() const {
    if (utility.kind == "cara") return Utility::cara(utility.gamma_a);
    if (utility.kind == "mixed_exponential") return Utility::mixed_exponential(utility.a, utility.b, utility.c);
    throw ConfigError("unknown utility kind '" + utility.kind + "'");
  }

  Lattice make_lattice() const {
    if (numerics.topology == "recombining") return build_binomial(market.horizon, numerics.n_steps);
    if (numerics.topology == "full_binary") return build_full_binary(market.horizon, numerics.n_steps);
    throw ConfigError("unknown topology '" + numerics.topology + "'");
  }

  StateSde make_state() const { return StateSde::arithmetic(market.state_mu, market.state_sigma, market.state_r0); }

  /// Terminal traded payoff S.
  NodeProcess make_payoff(const Lattice& lat) const {
    const auto& m = market;
    if (m.payoff == "identity") return NodeProcess::of_brownian(lat, [](double w) { return w; });
    if (m.payoff == "affine")
      return NodeProcess::of_brownian(lat, [a = m.payoff_a, b = m.payoff_b](double w) { return a * w + b; });
    if (m.payoff == "call")
      return NodeProcess::of_brownian(lat, [k = m.strike](double w) { return std::max(w - k, 0.0); });
    if (m.payoff == "markov") {
      const NodeProcess r = simulate_state(lat, make_state());
      return markov_payoff().s_terminal(r);
    }
    throw ConfigError("unknown payoff '" + m.payoff + "'");
  }

  std::optional<NodeProcess> make_h_m(const Lattice& lat) const {
    if (market.h_m == "none") return std::nullopt;
    if (market.h_m == "square") {
      if (market.payoff == "markov") {
        const NodeProcess r = simulate_state(lat, make_state());
        return markov_payoff().h_terminal(r);
      }
      return NodeProcess::of_brownian(lat, [c = market.h_m_scale](double w) { return c * w * w; });
    }
    throw ConfigError("unknown h_m preset '" + market.h_m + "'");
  }

  MarkovPayoff markov_payoff() const {
    MarkovPayoff p;
    if (market.state_map == "identity") {
      p.s = [](double r) { return r; };
      p.s_r = [](double) { return 1.0; };
    } else if (market.state_map == "square") {
      p.s = [](double r) { return r * r; };
      p.s_r = [](double r) { return 2.0 * r; };
    } else {
      throw ConfigError("unknown state_map '" + market.state_map + "'");
    }
    if (market.h_m == "square") {
      const double c = market.h_m_scale;
      p.h = [c](double r) { return c * r * r; };
      p.h_r = [c](double r) { return 2.0 * c * r; };
    }
    return p;
  }

  std::optional<StrategySet> strategy_set() const {
    if (numerics.mode == "auto") return std::nullopt;
    if (numerics.mode == "theta") return StrategySet::theta;
    if (numerics.mode == "theta_plus") return StrategySet::theta_plus;
    throw ConfigError("unknown mode '" + numerics.mode + "'");
  }

  XGrid x_grid() const { return XGrid{numerics.x_min, numerics.x_max, numerics.n_x}; }

  void validate() const {
    auto need = [](bool ok, const std::string& what) {
      if (!ok) throw ConfigError(what);
    };
    auto finite = [](double v) { return std::isfinite(v); };
    need(market.horizon > 0.0 && finite(market.horizon), "market.horizon must be positive");
    need(finite(market.x0), "market.x0 must be finite");
    need(numerics.n_steps >= 1, "numerics.n_steps must be positive");
    need(numerics.n_x >= 2 * kBoundaryCells + 3, "numerics.n_x is too small");
    need(numerics.x_max > numerics.x_min, "numerics.x_range is empty");
    need(numerics.y_count >= 2 && numerics.y_max > numerics.y_min, "numerics.y_grid must be increasing");
    need(numerics.z_count >= 1 && numerics.z_max >= numerics.z_min, "numerics.z_grid is invalid");
    need(numerics.tol > 0.0, "numerics.tol must be positive");
    need(numerics.max_iter >= 1, "numerics.max_iter must be positive");
    need(numerics.damping > 0.0 && numerics.damping <= 1.0, "numerics.damping must lie in (0, 1]");
    need(numerics.perturbations >= 0, "numerics.perturbations must be non-negative");
    need(numerics.route_tol > 0.0, "numerics.route_tol must be positive");
    need(numerics.solver == "auto" || numerics.solver == "cara" || numerics.solver == "picard",
         "unknown numerics.solver '" + numerics.solver + "'");
    need(numerics.topology != "full_binary" || numerics.n_steps <= kMaxFullBinarySteps,
         "full_binary topology supports at most " + std::to_string(kMaxFullBinarySteps) + " steps");
    (void)strategy_set();
    try {
      (void)make_driver();
      (void)make_utility();
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
    (void)markov_payoff();
    need(market.payoff == "identity" || market.payoff == "affine" || market.payoff == "call" ||
             market.payoff == "markov",
         "unknown payoff '" + market.payoff + "'");
    need(market.h_m == "none" || market.h_m == "square", "unknown h_m preset '" + market.h_m + "'");
  }
};

namespace detail {

template <class T>
void read(const boost::property_tree::ptree& pt, const std::string& key, T& target) {
  const auto node = pt.get_optional<std::string>(key);
  if (!node) return;
  const auto value = pt.get_optional<T>(key);
  if (!value) throw ConfigError("cannot parse '" + key + "' from '" + *node + "'");
  target = *value;
}

inline void reject_unknown(const boost::property_tree::ptree& pt) {
  static const std::vector<std::pair<std::string, std::vector<std::string>>> known = {
      {"scenario", {"name"}},
      {"driver", {"kind", "gamma", "eta", "nu", "alpha", "kappa"}},
      {"utility", {"kind", "gamma_a", "a", "b", "c"}},
      {"market",
       {"horizon", "x0", "payoff", "payoff_a", "payoff_b", "strike", "state_map", "state_mu", "state_sigma",
        "state_r0", "h_m", "h_m_scale", "claim_units"}},
      {"numerics",
       {"n_steps", "topology", "n_x", "x_min", "x_max", "y_min", "y_max", "y_count", "z_min", "z_max", "z_count",
        "tol", "max_iter", "damping", "mode", "solver", "seed", "perturbations", "route_tol"}},
      {"outputs", {"dir", "csv", "json"}},
  };
  for (const auto& [section, body] : pt) {
    auto it = std::find_if(known.begin(), known.end(), [&](const auto& p) { return p.first == section; });
    if (it == known.end()) throw ConfigError("unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      (void)value;
      if (std::find(it->second.begin(), it->second.end(), key) == it->second.end())
        throw ConfigError("unknown key '" + key + "' in [" + section + "]");
    }
  }
}

}  // namespace detail

inline ScenarioConfig parse_config(std::istream& in) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  detail::reject_unknown(pt);
  ScenarioConfig c;
  using detail::read;
  read(pt, "scenario.name", c.name);
  read(pt, "driver.kind", c.driver.kind);
  read(pt, "driver.gamma", c.driver.gamma);
  read(pt, "driver.eta", c.driver.eta);
  read(pt, "driver.nu", c.driver.nu);
  read(pt, "driver.alpha", c.driver.alpha);
  read(pt, "driver.kappa", c.driver.kappa);
  read(pt, "utility.kind", c.utility.kind);
  read(pt, "utility.gamma_a", c.utility.gamma_a);
  read(pt, "utility.a", c.utility.a);
  read(pt, "utility.b", c.utility.b);
  read(pt, "utility.c", c.utility.c);
  read(pt, "market.horizon", c.market.horizon);
  read(pt, "market.x0", c.market.x0);
  read(pt, "market.payoff", c.market.payoff);
  read(pt, "market.payoff_a", c.market.payoff_a);
  read(pt, "market.payoff_b", c.market.payoff_b);
  read(pt, "market.strike", c.market.strike);
  read(pt, "market.state_map", c.market.state_map);
  read(pt, "market.state_mu", c.market.state_mu);
  read(pt, "market.state_sigma", c.market.state_sigma);
  read(pt, "market.state_r0", c.market.state_r0);
  read(pt, "market.h_m", c.market.h_m);
  read(pt, "market.h_m_scale", c.market.h_m_scale);
  read(pt, "market.claim_units", c.market.claim_units);
  read(pt, "numerics.n_steps", c.numerics.n_steps);
  read(pt, "numerics.topology", c.numerics.topology);
  read(pt, "numerics.n_x", c.numerics.n_x);
  read(pt, "numerics.x_min", c.numerics.x_min);
  read(pt, "numerics.x_max", c.numerics.x_max);
  read(pt, "numerics.y_min", c.numerics.y_min);
  read(pt, "numerics.y_max", c.numerics.y_max);
  read(pt, "numerics.y_count", c.numerics.y_count);
  read(pt, "numerics.z_min", c.numerics.z_min);
  read(pt, "numerics.z_max", c.numerics.z_max);
  read(pt, "numerics.z_count", c.numerics.z_count);
  read(pt, "numerics.tol", c.numerics.tol);
  read(pt, "numerics.max_iter", c.numerics.max_iter);
  read(pt, "numerics.damping", c.numerics.damping);
  read(pt, "numerics.mode", c.numerics.mode);
  read(pt, "numerics.solver", c.numerics.solver);
  read(pt, "numerics.seed", c.numerics.seed);
  read(pt, "numerics.perturbations", c.numerics.perturbations);
  read(pt, "numerics.route_tol", c.numerics.route_tol);
  read(pt, "outputs.dir", c.outputs.dir);
  read(pt, "outputs.csv", c.outputs.csv);
  read(pt, "outputs.json", c.outputs.json);
  c.validate();
  return c;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(in);
}

}  // namespace impact::cli
