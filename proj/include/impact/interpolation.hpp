#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "impact/error.hpp"

namespace impact {

/// Shape-preserving cubic Hermite interpolant on a uniform grid. Node slopes are
/// fourth-order differences (one-sided near the ends), limited to 3 min(|left|, |right|) secant
/// (zero at local extrema) so monotone data stays monotone. Queries outside the
/// grid continue the end-cell cubic.
class MonotoneCubic {
 public:
  MonotoneCubic(double x0, double dx, std::vector<double> values) : x0_(x0), dx_(dx), f_(std::move(values)) {
    require(dx > 0.0, ErrorKind::invalid_argument, "grid spacing must be positive");
    require(f_.size() >= 2, ErrorKind::invalid_argument, "interpolation needs at least two points");
    const std::size_t n = f_.size();
    std::vector<double> d(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) d[i] = (f_[i + 1] - f_[i]) / dx_;
    m_.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double s;
      if (i >= 2 && i + 2 < n)
        s = (-f_[i + 2] + 8.0 * f_[i + 1] - 8.0 * f_[i - 1] + f_[i - 2]) / (12.0 * dx_);
      else if (n < 5)
        s = i == 0 ? d[0] : (i + 1 == n ? d[n - 2] : 0.5 * (d[i - 1] + d[i]));
      else if (i == 0)
        s = (-25.0 * f_[0] + 48.0 * f_[1] - 36.0 * f_[2] + 16.0 * f_[3] - 3.0 * f_[4]) / (12.0 * dx_);
      else if (i == 1)
        s = (-3.0 * f_[0] - 10.0 * f_[1] + 18.0 * f_[2] - 6.0 * f_[3] + f_[4]) / (12.0 * dx_);
      else if (i + 2 == n)
        s = (3.0 * f_[n - 1] + 10.0 * f_[n - 2] - 18.0 * f_[n - 3] + 6.0 * f_[n - 4] - f_[n - 5]) / (12.0 * dx_);
      else
        s = (25.0 * f_[n - 1] - 48.0 * f_[n - 2] + 36.0 * f_[n - 3] - 16.0 * f_[n - 4] + 3.0 * f_[n - 5]) / (12.0 * dx_);
      const double left = i > 0 ? d[i - 1] : d[0];
      const double right = i + 1 < n ? d[i] : d[n - 2];
      if (left * right <= 0.0) {
        s = (i == 0 || i + 1 == n) ? s : 0.0;
      } else {
        const double cap = 3.0 * std::min(std::abs(left), std::abs(right));
        if (s * left <= 0.0) s = 0.0;
        s = std::clamp(s, -cap, cap);
      }
      m_[i] = s;
    }
  }

  double operator()(double x) const {
    if (const auto node = snap(x)) return f_[*node];
    const auto [j, t] = locate(x);
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * f_[j] + (t3 - 2 * t2 + t) * dx_ * m_[j] + (-2 * t3 + 3 * t2) * f_[j + 1] +
           (t3 - t2) * dx_ * m_[j + 1];
  }

  double derivative(double x) const {
    if (const auto node = snap(x)) return m_[*node];
    const auto [j, t] = locate(x);
    const double t2 = t * t;
    return ((6 * t2 - 6 * t) * f_[j] + (3 * t2 - 4 * t + 1) * dx_ * m_[j] + (-6 * t2 + 6 * t) * f_[j + 1] +
            (3 * t2 - 2 * t) * dx_ * m_[j + 1]) /
           dx_;
  }

  double x_min() const { return x0_; }
  double x_max() const { return x0_ + dx_ * static_cast<double>(f_.size() - 1); }

 private:
  /// Grid node within rounding distance of x, so node queries return stored values exactly.
  std::optional<std::size_t> snap(double x) const {
    const double u = (x - x0_) / dx_;
    const double r = std::round(u);
    if (std::abs(u - r) > 1e-10 || r < 0.0 || r > static_cast<double>(f_.size() - 1)) return std::nullopt;
    return static_cast<std::size_t>(r);
  }

  std::pair<std::size_t, double> locate(double x) const {
    const double u = (x - x0_) / dx_;
    const double last = static_cast<double>(f_.size() - 2);
    const double cell = std::clamp(std::floor(u), 0.0, last);
    return {static_cast<std::size_t>(cell), u - cell};
  }

  double x0_, dx_;
  std::vector<double> f_;
  std::vector<double> m_;
};

/// Piecewise-linear interpolation on a uniform grid, clamped at the ends.
inline double linear_uniform(const std::vector<double>& f, double x0, double dx, double x) {
  const double u = std::clamp((x - x0) / dx, 0.0, static_cast<double>(f.size() - 1));
  const std::size_t j = std::min(static_cast<std::size_t>(u), f.size() - 2);
  const double w = u - static_cast<double>(j);
  return (1.0 - w) * f[j] + w * f[j + 1];
}

}  // namespace impact
