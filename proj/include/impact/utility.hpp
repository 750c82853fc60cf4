#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "impact/error.hpp"

namespace impact {

enum class UtilityKind { cara, mixed_exponential, custom };

/// Strictly increasing, strictly concave utility with three derivatives.
class Utility {
 public:
  using Fn = std::function<double(double)>;

  /// U(x) = -exp(-gamma_A x).
  static Utility cara(double gamma_a) {
    require(gamma_a > 0.0 && std::isfinite(gamma_a), ErrorKind::invalid_argument, "gamma_A must be > 0");
    const double g = gamma_a;
    Utility u(UtilityKind::cara);
    u.gamma_a_ = g;
    u.u_ = [g](double x) { return -std::exp(-g * x); };
    u.u1_ = [g](double x) { return g * std::exp(-g * x); };
    u.u2_ = [g](double x) { return -g * g * std::exp(-g * x); };
    u.u3_ = [g](double x) { return g * g * g * std::exp(-g * x); };
    u.inv_ = [g](double v) { return -std::log(v / g) / g; };
    return u;
  }

  /// U(x) = -exp(-a x) - b exp(-c x); wealth-dependent risk aversion when c != a.
  static Utility mixed_exponential(double a, double b, double c) {
    require(a > 0.0 && b >= 0.0 && c > 0.0, ErrorKind::invalid_argument, "need a > 0, b >= 0, c > 0");
    Utility u(UtilityKind::mixed_exponential);
    u.params_ = {a, b, c};
    u.u_ = [=](double x) { return -std::exp(-a * x) - b * std::exp(-c * x); };
    u.u1_ = [=](double x) { return a * std::exp(-a * x) + b * c * std::exp(-c * x); };
    u.u2_ = [=](double x) { return -a * a * std::exp(-a * x) - b * c * c * std::exp(-c * x); };
    u.u3_ = [=](double x) { return a * a * a * std::exp(-a * x) + b * c * c * c * std::exp(-c * x); };
    return u;
  }

  static Utility custom(Fn u, Fn u1, Fn u2, Fn u3, Fn inverse_marginal = {}) {
    require(u && u1 && u2 && u3, ErrorKind::invalid_argument, "custom utility needs U, U', U'', U'''");
    Utility out(UtilityKind::custom);
    out.u_ = std::move(u);
    out.u1_ = std::move(u1);
    out.u2_ = std::move(u2);
    out.u3_ = std::move(u3);
    out.inv_ = std::move(inverse_marginal);
    return out;
  }

  UtilityKind kind() const { return kind_; }
  bool is_cara() const { return kind_ == UtilityKind::cara; }
  double gamma_a() const { return gamma_a_; }
  const std::vector<double>& params() const { return params_; }

  double u(double x) const { return u_(x); }
  double u1(double x) const { return u1_(x); }
  double u2(double x) const { return u2_(x); }
  double u3(double x) const { return u3_(x); }
  double psi1(double x) const { return is_cara() ? -1.0 / gamma_a_ : u1_(x) / u2_(x); }
  double psi2(double x) const { return is_cara() ? -gamma_a_ : u3_(x) / u2_(x); }

  /// I = (U')^{-1}; bisection on an expanding bracket when no closed form exists.
  double inverse_marginal(double v) const {
    require(v > 0.0 && std::isfinite(v), ErrorKind::inverse_domain_error, "marginal utility value must be > 0");
    if (inv_) return inv_(v);
    double lo = -1.0, hi = 1.0;
    for (int i = 0; i < 200 && u1_(lo) < v; ++i) lo = 2.0 * lo - 1.0;
    for (int i = 0; i < 200 && u1_(hi) > v; ++i) hi = 2.0 * hi + 1.0;
    if (!(u1_(lo) >= v && u1_(hi) <= v))
      fail(ErrorKind::inverse_domain_error, "value " + std::to_string(v) + " outside the range of U'");
    for (int i = 0; i < 200 && hi - lo > 1e-15 * (1.0 + std::abs(lo)); ++i) {
      const double mid = 0.5 * (lo + hi);
      (u1_(mid) > v ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

  /// Largest violation of U' > 0, U'' < 0 and I(U'(x)) = x over the samples.
  double check(const std::vector<double>& xs) const {
    double worst = 0.0;
    for (double x : xs) {
      if (!(u1_(x) > 0.0) || !(u2_(x) < 0.0)) return INFINITY;
      worst = std::max(worst, std::abs(inverse_marginal(u1_(x)) - x));
    }
    return worst;
  }

  std::string describe() const {
    switch (kind_) {
      case UtilityKind::cara: return "cara(" + std::to_string(gamma_a_) + ")";
      case UtilityKind::mixed_exponential: return "mixed_exponential";
      case UtilityKind::custom: return "custom";
    }
    return "unknown";
  }

 private:
  explicit Utility(UtilityKind k) : kind_(k) {}

  UtilityKind kind_;
  double gamma_a_ = 0.0;
  std::vector<double> params_;
  Fn u_, u1_, u2_, u3_, inv_;
};

}  // namespace impact
