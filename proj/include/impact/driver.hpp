#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "impact/error.hpp"
#include "impact/time_function.hpp"

namespace impact {

/// The entropic driver is (gamma * kEntropicQuadraticFactor) * z^2. With 1/2 the
/// BSDE value of X is -(1/gamma) log E[exp(-gamma X)].
inline constexpr double kEntropicQuadraticFactor = 0.5;

enum class DriverKind { zero, linear, quadratic, entropic, drifted_quadratic, homogeneous, custom };

inline std::string_view to_string(DriverKind k) {
  switch (k) {
    case DriverKind::zero: return "zero";
    case DriverKind::linear: return "linear";
    case DriverKind::quadratic: return "quadratic";
    case DriverKind::entropic: return "entropic";
    case DriverKind::drifted_quadratic: return "drifted-quadratic";
    case DriverKind::homogeneous: return "homogeneous";
    case DriverKind::custom: return "custom";
  }
  return "unknown";
}

struct DriverFlags {
  bool is_lipschitz = false;
  bool is_homogeneous = false;
  bool is_differentiable = true;
  bool is_deterministic = true;
};

/// Convex driver g(t, z) with g(t, 0) = 0.
class Driver {
 public:
  using Fn = std::function<double(double, double)>;

  static Driver zero() {
    Driver d(DriverKind::zero);
    d.flags_.is_lipschitz = true;
    d.flags_.is_homogeneous = true;
    return d;
  }

  static Driver linear(PiecewiseConstant nu) {
    Driver d(DriverKind::linear);
    d.nu_ = std::move(nu);
    d.flags_.is_lipschitz = true;
    d.flags_.is_homogeneous = true;
    return d;
  }
  static Driver linear(double nu) { return linear(PiecewiseConstant::constant(nu)); }

  /// alpha |z|^2 + ell(t, z); ell must be convex with ell(t, 0) = 0.
  static Driver quadratic(double alpha, Fn ell = {}, Fn ell_z = {}) {
    require(alpha >= 0.0 && std::isfinite(alpha), ErrorKind::invalid_argument, "quadratic alpha must be >= 0");
    require(static_cast<bool>(ell) == static_cast<bool>(ell_z), ErrorKind::invalid_argument,
            "quadratic linear part needs both ell and ell_z");
    Driver d(DriverKind::quadratic);
    d.alpha_ = alpha;
    d.ell_ = std::move(ell);
    d.ell_z_ = std::move(ell_z);
    d.flags_.is_lipschitz = alpha == 0.0;
    return d;
  }

  static Driver entropic(double gamma) {
    require(gamma > 0.0 && std::isfinite(gamma), ErrorKind::invalid_argument, "entropic gamma must be > 0");
    Driver d(DriverKind::entropic);
    d.gamma_ = gamma;
    return d;
  }

  /// 1/2 gamma z^2 - eta(t) z.
  static Driver drifted_quadratic(double gamma, PiecewiseConstant eta) {
    require(gamma > 0.0 && std::isfinite(gamma), ErrorKind::invalid_argument, "gamma must be > 0");
    Driver d(DriverKind::drifted_quadratic);
    d.gamma_ = gamma;
    d.eta_ = std::move(eta);
    return d;
  }
  static Driver drifted_quadratic(double gamma, double eta) {
    return drifted_quadratic(gamma, PiecewiseConstant::constant(eta));
  }

  /// kappa |z|.
  static Driver homogeneous(double kappa) {
    require(kappa >= 0.0 && std::isfinite(kappa), ErrorKind::invalid_argument, "kappa must be >= 0");
    Driver d(DriverKind::homogeneous);
    d.kappa_ = kappa;
    d.flags_.is_lipschitz = true;
    d.flags_.is_homogeneous = true;
    d.flags_.is_differentiable = false;
    return d;
  }

  static Driver custom(Fn g, Fn g_z, DriverFlags flags, std::string name = "custom") {
    require(static_cast<bool>(g), ErrorKind::invalid_argument, "custom driver needs g");
    Driver d(DriverKind::custom);
    d.g_ = std::move(g);
    d.g_z_ = std::move(g_z);
    d.flags_ = flags;
    d.name_ = std::move(name);
    return d;
  }

  DriverKind kind() const { return kind_; }
  const DriverFlags& flags() const { return flags_; }
  const std::string& name() const { return name_; }
  bool has_gradient() const { return kind_ != DriverKind::custom || static_cast<bool>(g_z_); }

  double gamma() const { return gamma_; }
  double kappa() const { return kappa_; }
  double alpha() const { return alpha_; }
  const PiecewiseConstant& nu() const { return nu_; }
  const PiecewiseConstant& eta() const { return eta_; }

  double eval(double t, double z) const {
    switch (kind_) {
      case DriverKind::zero: return 0.0;
      case DriverKind::linear: return nu_(t) * z;
      case DriverKind::quadratic: return alpha_ * z * z + (ell_ ? ell_(t, z) : 0.0);
      case DriverKind::entropic: return kEntropicQuadraticFactor * gamma_ * z * z;
      case DriverKind::drifted_quadratic: return 0.5 * gamma_ * z * z - eta_(t) * z;
      case DriverKind::homogeneous: return kappa_ * std::abs(z);
      case DriverKind::custom: return g_(t, z);
    }
    return 0.0;
  }

  /// g_z, or a subgradient selection at kinks: 0 when it belongs to the
  /// subdifferential, otherwise its midpoint.
  double grad(double t, double z) const {
    switch (kind_) {
      case DriverKind::zero: return 0.0;
      case DriverKind::linear: return nu_(t);
      case DriverKind::quadratic: return 2.0 * alpha_ * z + (ell_z_ ? ell_z_(t, z) : 0.0);
      case DriverKind::entropic: return 2.0 * kEntropicQuadraticFactor * gamma_ * z;
      case DriverKind::drifted_quadratic: return gamma_ * z - eta_(t);
      case DriverKind::homogeneous: return z > 0.0 ? kappa_ : (z < 0.0 ? -kappa_ : 0.0);
      case DriverKind::custom:
        if (!g_z_) fail(ErrorKind::unsupported_operation, "custom driver '" + name_ + "' has no gradient");
        return g_z_(t, z);
    }
    return 0.0;
  }

  /// If g(t, .) = 1/2 c z^2 - e z exactly, returns true and sets (c, e).
  bool quadratic_form(double t, double& curvature, double& drift) const {
    switch (kind_) {
      case DriverKind::zero: curvature = 0.0; drift = 0.0; return true;
      case DriverKind::linear: curvature = 0.0; drift = -nu_(t); return true;
      case DriverKind::entropic: curvature = 2.0 * kEntropicQuadraticFactor * gamma_; drift = 0.0; return true;
      case DriverKind::drifted_quadratic: curvature = gamma_; drift = eta_(t); return true;
      case DriverKind::quadratic:
        if (ell_) return false;
        curvature = 2.0 * alpha_;
        drift = 0.0;
        return true;
      default: return false;
    }
  }

  /// Whether 0 lies in the subdifferential at z = 0 for every sampled t.
  bool zero_in_subgradient_at_origin(const std::vector<double>& t_samples) const {
    if (kind_ == DriverKind::homogeneous) return true;
    if (!has_gradient()) return false;
    return std::all_of(t_samples.begin(), t_samples.end(), [&](double t) { return grad(t, 0.0) == 0.0; });
  }

 private:
  explicit Driver(DriverKind kind) : kind_(kind), name_(to_string(kind)) {}

  DriverKind kind_;
  DriverFlags flags_{};
  std::string name_;
  double gamma_ = 0.0;
  double kappa_ = 0.0;
  double alpha_ = 0.0;
  PiecewiseConstant nu_{};
  PiecewiseConstant eta_{};
  Fn ell_, ell_z_, g_, g_z_;
};

struct ValidationReport {
  double max_abs_g_at_zero = 0.0;
  double convexity_violation = 0.0;  // largest g(mid) - chord, clipped at 0
  double homogeneity_violation = 0.0;

  bool passed(double tol = 1e-12) const {
    return max_abs_g_at_zero <= tol && convexity_violation <= tol && homogeneity_violation <= tol;
  }
};

inline ValidationReport validate(const Driver& driver, const std::vector<double>& t_samples,
                                 const std::vector<double>& z_samples) {
  require(!t_samples.empty() && !z_samples.empty(), ErrorKind::invalid_argument, "validation needs samples");
  ValidationReport r;
  constexpr double lambdas[] = {0.25, 0.5, 0.75};
  constexpr double scales[] = {0.5, 2.0, 3.0};
  for (double t : t_samples) {
    r.max_abs_g_at_zero = std::max(r.max_abs_g_at_zero, std::abs(driver.eval(t, 0.0)));
    for (double z1 : z_samples) {
      const double g1 = driver.eval(t, z1);
      for (double z2 : z_samples) {
        const double g2 = driver.eval(t, z2);
        for (double l : lambdas) {
          const double gap = driver.eval(t, l * z1 + (1.0 - l) * z2) - (l * g1 + (1.0 - l) * g2);
          r.convexity_violation = std::max(r.convexity_violation, gap);
        }
      }
      if (driver.flags().is_homogeneous)
        for (double s : scales)
          r.homogeneity_violation = std::max(r.homogeneity_violation, std::abs(driver.eval(t, s * z1) - s * g1));
    }
  }
  return r;
}

}  // namespace impact
