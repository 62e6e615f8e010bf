#include "mphase/error.hpp"
#include "mphase/model.hpp"
#include "mphase/rng.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace mphase;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

PiecewiseModel step(double left, double right, double tau) {
  return PiecewiseModel(SegmentFamily::constant(), {vec({left}), vec({right})}, {tau});
}

}  // namespace

TEST(SegmentFamily, EvaluatesShippedFamilies) {
  EXPECT_DOUBLE_EQ(SegmentFamily::constant().eval(vec({2.5}), 7.0), 2.5);
  EXPECT_DOUBLE_EQ(SegmentFamily::linear().eval(vec({1.0, 2.0}), 3.0), 7.0);
  EXPECT_DOUBLE_EQ(SegmentFamily::exponential().eval(vec({2.0, 0.5}), 2.0), 2.0 * std::exp(1.0));
  EXPECT_DOUBLE_EQ(SegmentFamily::logistic().eval(vec({4.0, 3.0, 1.0}), 1.0), 2.0);
}

TEST(SegmentFamily, LogisticIsStableForExtremeArguments) {
  const auto f = SegmentFamily::logistic();
  EXPECT_DOUBLE_EQ(f.eval(vec({1.0, 1.0, 0.0}), 1e4), 1.0);
  EXPECT_DOUBLE_EQ(f.eval(vec({1.0, 1.0, 0.0}), -1e4), 0.0);
  EXPECT_TRUE(f.grad(vec({1.0, 1.0, 0.0}), -1e4).allFinite());
}

TEST(SegmentFamily, RejectsWrongDimension) {
  EXPECT_THROW(SegmentFamily::linear().eval(vec({1.0}), 0.0), InvalidArgument);
  EXPECT_THROW(SegmentFamily::constant().grad(vec({1.0, 2.0}), 0.0), InvalidArgument);
}

TEST(SegmentFamily, FromNameRoundTrips) {
  for (const char* name : {"constant", "linear", "exponential", "logistic"}) {
    EXPECT_EQ(SegmentFamily::from_name(name).name(), name);
  }
  EXPECT_THROW(SegmentFamily::from_name("cubic"), InvalidArgument);
}

TEST(SegmentFamily, CustomFamilyUsesSuppliedFunctions) {
  const auto quad = SegmentFamily::custom(
      "quadratic", 3, [](const Vector& a, double x) { return a[0] + a[1] * x + a[2] * x * x; },
      [](const Vector&, double x) { return vec({1.0, x, x * x}); });
  EXPECT_EQ(quad.param_dim(), 3);
  EXPECT_DOUBLE_EQ(quad.eval(vec({1.0, 2.0, 3.0}), 2.0), 17.0);
  const Vector g = quad.grad(vec({1.0, 2.0, 3.0}), 2.0);
  EXPECT_DOUBLE_EQ(g[2], 4.0);
}

// Analytic gradients against central differences, 100 random points each.
TEST(SegmentFamily, GradientsMatchFiniteDifferences) {
  const auto quad = SegmentFamily::custom(
      "quadratic", 3, [](const Vector& a, double x) { return a[0] + a[1] * x + a[2] * x * x; },
      [](const Vector&, double x) { return vec({1.0, x, x * x}); });
  Rng rng = make_rng(2024);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (const auto& family : {SegmentFamily::constant(), SegmentFamily::linear(), SegmentFamily::exponential(),
                             SegmentFamily::logistic(), quad}) {
    for (int i = 0; i < 100; ++i) {
      Vector alpha(family.param_dim());
      for (Eigen::Index j = 0; j < alpha.size(); ++j) alpha[j] = u(rng);
      const double x = u(rng);
      const Vector g = family.grad(alpha, x);
      const Vector fd = oracle::fd_gradient(family, alpha, x);
      const double rel = (g - fd).norm() / std::max(g.norm(), 1.0);
      EXPECT_LT(rel, 1e-6) << family.name() << " at x=" << x;
    }
  }
}

TEST(PiecewiseModel, PointOnChangepointBelongsToLeftSegment) {
  const auto m = step(0.0, 1.0, 0.5);
  EXPECT_EQ(m.segment_of(0.5), 0);
  EXPECT_EQ(m.segment_of(std::nextafter(0.5, 1.0)), 1);
  EXPECT_DOUBLE_EQ(eval_piecewise(m, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(eval_piecewise(m, 0.6), 1.0);
}

TEST(PiecewiseModel, NoChangepointIsSingleSegment) {
  const PiecewiseModel m(SegmentFamily::linear(), {vec({1.0, 2.0})}, {});
  EXPECT_EQ(m.segment_of(-1e300), 0);
  EXPECT_EQ(m.segment_of(1e300), 0);
  EXPECT_DOUBLE_EQ(eval_piecewise(m, 1.0), 3.0);
}

TEST(PiecewiseModel, StructuralChecks) {
  EXPECT_THROW(PiecewiseModel(SegmentFamily::constant(), {vec({1.0})}, {0.0}), InvalidArgument);
  EXPECT_THROW(PiecewiseModel(SegmentFamily::linear(), {vec({1.0}), vec({1.0, 2.0})}, {0.0}), InvalidArgument);
  EXPECT_THROW(PiecewiseModel(SegmentFamily::constant(), {vec({NAN}), vec({1.0})}, {0.0}), InvalidArgument);
  EXPECT_THROW(PiecewiseModel(SegmentFamily::constant(), {vec({0.0}), vec({1.0})}, {INFINITY}), InvalidArgument);
}

TEST(PiecewiseModel, GradientIsBlockSparse) {
  const PiecewiseModel m(SegmentFamily::linear(), {vec({0.0, 1.0}), vec({1.0, 0.0}), vec({2.0, -1.0})}, {0.0, 1.0});
  const Vector g = grad_piecewise(m, 0.5);
  ASSERT_EQ(g.size(), 6);
  EXPECT_EQ(g.head(2).norm(), 0.0);
  EXPECT_DOUBLE_EQ(g[2], 1.0);
  EXPECT_DOUBLE_EQ(g[3], 0.5);
  EXPECT_EQ(g.tail(2).norm(), 0.0);
}

TEST(PiecewiseModel, StackingRoundTrips) {
  const PiecewiseModel m(SegmentFamily::linear(), {vec({0.0, 1.0}), vec({1.0, 0.0})}, {0.0});
  const Vector t = m.stacked_alphas();
  EXPECT_EQ(t, vec({0.0, 1.0, 1.0, 0.0}));
  const auto m2 = m.with_stacked_alphas(2.0 * t);
  EXPECT_DOUBLE_EQ(m2.alphas()[1][0], 2.0);
  EXPECT_EQ(m2.taus(), m.taus());
}

TEST(Jumps, ConstantStepJumpIsDifference) {
  const auto j = jumps(step(1.0, 3.5, 0.0));
  ASSERT_EQ(j.size(), 1u);
  EXPECT_EQ(j[0].index, 1);
  EXPECT_DOUBLE_EQ(j[0].value, 2.5);
}

TEST(Jumps, ContinuousLinearJoinHasZeroJump) {
  // 1 + x and 3 - x meet at x = 1.
  const PiecewiseModel m(SegmentFamily::linear(), {vec({1.0, 1.0}), vec({3.0, -1.0})}, {1.0});
  EXPECT_DOUBLE_EQ(jumps(m)[0].value, 0.0);
  const auto report = validate_model(m);
  EXPECT_TRUE(report.has(ValidationReport::Kind::identifiability));
  EXPECT_EQ(report.violations[0].index, 1);
}

TEST(ValidateModel, FlagsUnorderedTaus) {
  const PiecewiseModel m(SegmentFamily::constant(), {vec({0.0}), vec({1.0}), vec({2.0})}, {1.0, 0.5});
  EXPECT_TRUE(validate_model(m).has(ValidationReport::Kind::tau_order));
}

TEST(ValidateModel, FlagsBoxViolation) {
  const ParamBox box{vec({-1.0}), vec({1.0})};
  const PiecewiseModel m(SegmentFamily::constant(), {vec({0.0}), vec({2.0})}, {0.0}, box);
  const auto report = validate_model(m);
  EXPECT_TRUE(report.has(ValidationReport::Kind::box));
  EXPECT_FALSE(report.has(ValidationReport::Kind::identifiability));
}

TEST(ValidateModel, AcceptsIdentifiableModel) {
  EXPECT_TRUE(validate_model(step(0.0, 2.0, 0.0)).ok());
}

TEST(ValidateModel, JumpToleranceIsRespected) {
  EXPECT_TRUE(validate_model(step(0.0, 1e-11, 0.0)).has(ValidationReport::Kind::identifiability));
  EXPECT_TRUE(validate_model(step(0.0, 1e-9, 0.0)).ok());
}
