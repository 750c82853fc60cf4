#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "impact/error.hpp"

namespace impact {

/// Deterministic, bounded, piecewise-constant function of time. Piece i covers
/// [breaks[i], breaks[i+1]); the last piece extends to +inf.
class PiecewiseConstant {
 public:
  PiecewiseConstant() : breaks_{0.0}, values_{0.0} {}

  static PiecewiseConstant constant(double value) { return PiecewiseConstant({0.0}, {value}); }

  PiecewiseConstant(std::vector<double> breaks, std::vector<double> values)
      : breaks_(std::move(breaks)), values_(std::move(values)) {
    require(!values_.empty() && breaks_.size() == values_.size(), ErrorKind::invalid_argument,
            "piecewise-constant function needs one break per value");
    require(std::is_sorted(breaks_.begin(), breaks_.end()), ErrorKind::invalid_argument,
            "piecewise-constant breaks must be sorted");
    for (double v : values_)
      require(std::isfinite(v), ErrorKind::invalid_argument, "piecewise-constant values must be finite");
  }

  double operator()(double t) const {
    auto it = std::upper_bound(breaks_.begin(), breaks_.end(), t);
    if (it == breaks_.begin()) return values_.front();
    return values_[static_cast<std::size_t>(it - breaks_.begin()) - 1];
  }

  bool is_constant() const {
    return std::all_of(values_.begin(), values_.end(), [&](double v) { return v == values_.front(); });
  }

  bool is_zero() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
  }

  double sup_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  /// Integral of f(s)^2 over [a, b].
  double integral_of_square(double a, double b) const {
    if (b <= a) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      const double lo = std::max(a, i == 0 ? a : breaks_[i]);
      const double hi = std::min(b, i + 1 < breaks_.size() ? breaks_[i + 1] : b);
      if (hi > lo) acc += values_[i] * values_[i] * (hi - lo);
    }
    return acc;
  }

  const std::vector<double>& breaks() const { return breaks_; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> breaks_;
  std::vector<double> values_;
};

}  // namespace impact
