#include <gtest/gtest.h>

#include <random>

#include "impact/driver.hpp"

using namespace impact;

namespace {

std::vector<Driver> builtin_drivers() {
  return {Driver::zero(),
          Driver::linear(0.2),
          Driver::linear(PiecewiseConstant({0.0, 0.5}, {0.2, -0.1})),
          Driver::quadratic(0.5),
          Driver::quadratic(0.3, [](double, double z) { return 0.2 * std::abs(z); },
                            [](double, double z) { return z > 0 ? 0.2 : (z < 0 ? -0.2 : 0.0); }),
          Driver::entropic(1.0),
          Driver::drifted_quadratic(1.0, 0.3),
          Driver::homogeneous(0.1)};
}

const std::vector<double> kTimes{0.0, 0.25, 0.5, 0.99};

std::vector<double> z_samples() {
  std::vector<double> z;
  for (int i = -20; i <= 20; ++i) z.push_back(0.17 * i);
  return z;
}

}  // namespace

TEST(DriverEval, ZeroDriver) {
  const auto d = Driver::zero();
  for (double t : kTimes)
    for (double z : z_samples()) EXPECT_EQ(d.eval(t, z), 0.0);
}

TEST(DriverEval, DriftedQuadratic) {
  EXPECT_NEAR(Driver::drifted_quadratic(1.0, 0.3).eval(0.4, 0.1), -0.025, 1e-16);
}

TEST(DriverEval, Homogeneous) { EXPECT_NEAR(Driver::homogeneous(0.1).eval(0.0, -2.0), 0.2, 1e-16); }

TEST(DriverGrad, DriftedQuadratic) {
  EXPECT_NEAR(Driver::drifted_quadratic(1.0, 0.3).grad(0.0, 0.1), -0.2, 1e-16);
}

TEST(DriverGrad, HomogeneousSelectsZeroAtKink) {
  const auto d = Driver::homogeneous(0.1);
  EXPECT_EQ(d.grad(0.3, 0.0), 0.0);
  EXPECT_EQ(d.grad(0.3, 1e-300), 0.1);
  EXPECT_EQ(d.grad(0.3, -5.0), -0.1);
}

TEST(DriverGrad, LinearIsConstant) {
  const auto d = Driver::linear(0.2);
  for (double z : z_samples()) EXPECT_EQ(d.grad(0.0, z), 0.2);
}

TEST(DriverGrad, CustomWithoutGradientUnsupported) {
  DriverFlags f;
  f.is_differentiable = false;
  const auto d = Driver::custom([](double, double z) { return std::abs(z); }, {}, f);
  try {
    (void)d.grad(0.0, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::unsupported_operation);
  }
}

TEST(DriverValidate, EntropicPasses) {
  const auto r = validate(Driver::entropic(1.0), kTimes, z_samples());
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(r.max_abs_g_at_zero, 0.0);
}

TEST(DriverValidate, CubicFlagsConvexityViolation) {
  const auto d = Driver::custom([](double, double z) { return z * z * z; }, [](double, double z) { return 3 * z * z; }, {});
  const auto r = validate(d, {0.0}, {-1.0, 1.0});
  EXPECT_GT(r.convexity_violation, 0.0);
  EXPECT_FALSE(r.passed());
}

TEST(DriverValidate, HomogeneousScalingExact) {
  const auto r = validate(Driver::homogeneous(0.1), kTimes, z_samples());
  EXPECT_LE(r.homogeneity_violation, 1e-15);
  EXPECT_TRUE(r.passed());
}

TEST(DriverValidate, NonZeroAtOriginReported) {
  const auto d = Driver::custom([](double, double z) { return z * z + 0.5; }, [](double, double z) { return 2 * z; }, {});
  EXPECT_NEAR(validate(d, kTimes, {0.0}).max_abs_g_at_zero, 0.5, 0.0);
}

TEST(DriverProperties, MidpointConvexityOnRandomSamples) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> uz(-5, 5), ul(0, 1), ut(0, 1);
  for (const auto& d : builtin_drivers())
    for (int s = 0; s < 2000; ++s) {
      const double t = ut(rng), z1 = uz(rng), z2 = uz(rng), l = ul(rng);
      EXPECT_LE(d.eval(t, l * z1 + (1 - l) * z2), l * d.eval(t, z1) + (1 - l) * d.eval(t, z2) + 1e-12) << d.name();
    }
}

TEST(DriverProperties, GradientMonotone) {
  const auto zs = z_samples();
  for (const auto& d : builtin_drivers())
    for (double t : kTimes)
      for (std::size_t i = 1; i < zs.size(); ++i) EXPECT_LE(d.grad(t, zs[i - 1]), d.grad(t, zs[i])) << d.name();
}

TEST(DriverProperties, GradientMatchesFiniteDifferenceAwayFromKinks) {
  for (const auto& d : builtin_drivers())
    for (double t : kTimes)
      for (double z : {-1.3, -0.4, 0.35, 2.1}) {
        const double h = 1e-6;
        EXPECT_NEAR(d.grad(t, z), (d.eval(t, z + h) - d.eval(t, z - h)) / (2 * h), 1e-7) << d.name();
      }
}

TEST(DriverProperties, EntropicEqualsQuadraticHalfGamma) {
  for (double gamma : {0.25, 1.0, 3.0}) {
    const auto e = Driver::entropic(gamma);
    const auto q = Driver::quadratic(gamma / 2);
    for (double z : z_samples()) EXPECT_EQ(e.eval(0.0, z), q.eval(0.0, z));
  }
}

TEST(DriverProperties, NormalizedAtOrigin) {
  for (const auto& d : builtin_drivers())
    for (double t : kTimes) EXPECT_EQ(d.eval(t, 0.0), 0.0) << d.name();
}

TEST(DriverFlagsTest, StructuralFlags) {
  EXPECT_TRUE(Driver::homogeneous(0.1).flags().is_homogeneous);
  EXPECT_FALSE(Driver::homogeneous(0.1).flags().is_differentiable);
  EXPECT_TRUE(Driver::linear(0.2).flags().is_lipschitz);
  EXPECT_FALSE(Driver::entropic(1.0).flags().is_lipschitz);
  EXPECT_FALSE(Driver::entropic(1.0).flags().is_homogeneous);
}

TEST(DriverFlagsTest, NoTradeSubgradient) {
  EXPECT_TRUE(Driver::quadratic(0.5).zero_in_subgradient_at_origin(kTimes));
  EXPECT_TRUE(Driver::homogeneous(0.1).zero_in_subgradient_at_origin(kTimes));
  EXPECT_FALSE(Driver::drifted_quadratic(1.0, 0.3).zero_in_subgradient_at_origin(kTimes));
  EXPECT_FALSE(Driver::linear(0.2).zero_in_subgradient_at_origin(kTimes));
}

TEST(DriverTimeDependence, PiecewiseConstantNu) {
  const auto d = Driver::linear(PiecewiseConstant({0.0, 0.5}, {0.2, -0.1}));
  EXPECT_EQ(d.grad(0.1, 1.0), 0.2);
  EXPECT_EQ(d.grad(0.5, 1.0), -0.1);
  EXPECT_EQ(d.grad(0.9, 1.0), -0.1);
}

TEST(DriverConstruction, RejectsBadParameters) {
  EXPECT_THROW((void)Driver::entropic(0.0), Error);
  EXPECT_THROW((void)Driver::homogeneous(-0.1), Error);
  EXPECT_THROW((void)Driver::quadratic(-1.0), Error);
  EXPECT_THROW((void)Driver::drifted_quadratic(-1.0, 0.3), Error);
}
