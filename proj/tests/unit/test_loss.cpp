#include "mphase/error.hpp"
#include "mphase/loss.hpp"
#include "mphase/rng.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace mphase;

namespace {

std::vector<LossSpec> shipped_losses() { return {LossSpec::squared(), LossSpec::absolute(), LossSpec::huber()}; }

std::vector<ErrorDist> shipped_errors() {
  return {ErrorDist::gaussian(1.0), ErrorDist::gaussian(0.3), ErrorDist::laplace(0.7), ErrorDist::student_t(5.0),
          ErrorDist::student_t(3.0, 0.5)};
}

// Density written out independently of the library.
double density(const ErrorDist& e, double u) {
  switch (e.kind()) {
    case ErrorKind::gaussian: return oracle::normal_pdf(u / e.scale()) / e.scale();
    case ErrorKind::laplace: return std::exp(-std::abs(u) / e.scale()) / (2.0 * e.scale());
    case ErrorKind::student_t: {
      const double nu = e.nu();
      const double z = u / e.scale();
      const double c = std::exp(std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2)) / std::sqrt(nu * M_PI);
      return c * std::pow(1.0 + z * z / nu, -(nu + 1) / 2) / e.scale();
    }
    case ErrorKind::degenerate: break;
  }
  return 0.0;
}

// Half-width of the Simpson window: wide enough that the t(3) tail beyond it
// contributes below the tested tolerances.
double window(const ErrorDist& e) { return e.kind() == ErrorKind::student_t ? 4000.0 * e.scale() : 40.0 * e.scale(); }

double lambda_oracle(const LossSpec& loss, const ErrorDist& e, double y) {
  const double w = window(e);
  std::vector<double> cuts{-y};
  if (loss.kind == LossKind::huber) cuts = {-loss.delta - y, -y, loss.delta - y};
  std::sort(cuts.begin(), cuts.end());
  return oracle::simpson_split([&](double u) { return psi(loss, u + y) * density(e, u); }, -w, w, cuts, 200000);
}

std::string label(const LossSpec& l, const ErrorDist& e) { return l.name() + " / " + e.describe(); }

}  // namespace

TEST(Rho, KnownValues) {
  EXPECT_DOUBLE_EQ(rho(LossSpec::squared(), 3.0), 9.0);
  EXPECT_DOUBLE_EQ(rho(LossSpec::absolute(), -2.0), 2.0);
  EXPECT_DOUBLE_EQ(rho(LossSpec::huber(1.0), 2.0), 1.5);
  EXPECT_DOUBLE_EQ(rho(LossSpec::huber(1.0), 0.5), 0.125);
}

TEST(Psi, KnownValues) {
  EXPECT_DOUBLE_EQ(psi(LossSpec::squared(), 3.0), 6.0);
  EXPECT_DOUBLE_EQ(psi(LossSpec::absolute(), 0.0), 1.0);
  EXPECT_DOUBLE_EQ(psi(LossSpec::absolute(), -1e-300), -1.0);
  EXPECT_DOUBLE_EQ(psi(LossSpec::huber(), -2.0), -1.345);
  EXPECT_DOUBLE_EQ(psi(LossSpec::huber(), 0.5), 0.5);
}

TEST(Psi, IsRightDerivativeOfRho) {
  Rng rng = make_rng(11);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const double h = 1e-7;
  for (const auto& loss : shipped_losses()) {
    std::vector<double> rs{0.0};
    if (loss.kind == LossKind::huber) {
      rs.push_back(loss.delta);
      rs.push_back(-loss.delta);
    }
    for (int i = 0; i < 100; ++i) rs.push_back(u(rng));
    for (double r : rs) {
      const double fd = (rho(loss, r + h) - rho(loss, r)) / h;
      EXPECT_NEAR(psi(loss, r), fd, 1e-5) << loss.name() << " at r=" << r;
    }
  }
}

TEST(Rho, ConvexNonNegativeZeroAtZero) {
  for (const auto& loss : shipped_losses()) {
    EXPECT_EQ(rho(loss, 0.0), 0.0);
    for (double a = -4.0; a <= 4.0; a += 0.25) {
      EXPECT_GE(rho(loss, a), 0.0);
      const double b = a + 0.7;
      EXPECT_LE(rho(loss, 0.5 * (a + b)), 0.5 * (rho(loss, a) + rho(loss, b)) + 1e-12);
      EXPECT_LE(psi(loss, a), psi(loss, b));
    }
  }
}

TEST(LossSpec, ScaleMultipliesRhoAndPsi) {
  const auto l = LossSpec::huber(1.0).scaled(3.0);
  EXPECT_DOUBLE_EQ(rho(l, 2.0), 4.5);
  EXPECT_DOUBLE_EQ(psi(l, 2.0), 3.0);
  EXPECT_THROW(LossSpec::squared().scaled(0.0), InvalidArgument);
}

TEST(LossSpec, NegativeLogDensityHook) {
  const auto g = LossSpec::negative_log_density(ErrorDist::gaussian(2.0));
  EXPECT_DOUBLE_EQ(rho(g, 3.0), 9.0 / 8.0);
  const auto l = LossSpec::negative_log_density(ErrorDist::laplace(0.5));
  EXPECT_DOUBLE_EQ(rho(l, -1.5), 3.0);
  EXPECT_THROW(LossSpec::negative_log_density(ErrorDist::student_t(4.0)), InvalidArgument);
}

TEST(ErrorDist, ValidatesParameters) {
  EXPECT_THROW(ErrorDist::gaussian(0.0), InvalidArgument);
  EXPECT_THROW(ErrorDist::laplace(-1.0), InvalidArgument);
  EXPECT_THROW(ErrorDist::student_t(2.0), InvalidArgument);
  EXPECT_THROW(ErrorDist::degenerate().pdf(0.0), InvalidArgument);
}

TEST(ErrorDist, DensityIntegratesToOneAndMatchesOracle) {
  for (const auto& e : shipped_errors()) {
    for (double u : {-2.0, -0.3, 0.0, 0.9, 5.0}) EXPECT_NEAR(e.pdf(u), density(e, u), 1e-12) << e.describe();
    const double w = window(e);
    EXPECT_NEAR(oracle::simpson_split([&](double u) { return e.pdf(u); }, -w, w, {0.0}, 200000), 1.0, 1e-5);
  }
}

TEST(ErrorDist, VarianceMatchesDefinition) {
  EXPECT_DOUBLE_EQ(ErrorDist::gaussian(0.3).variance(), 0.09);
  EXPECT_DOUBLE_EQ(ErrorDist::laplace(0.5).variance(), 0.5);
  EXPECT_DOUBLE_EQ(ErrorDist::student_t(5.0, 2.0).variance(), 4.0 * 5.0 / 3.0);
}

TEST(ErrorDist, SampleMomentsMatch) {
  Rng rng = make_rng(5);
  for (const auto& e : {ErrorDist::gaussian(0.5), ErrorDist::laplace(0.7), ErrorDist::student_t(6.0)}) {
    const int n = 200000;
    double s = 0.0;
    double s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double v = e.sample(rng);
      s += v;
      s2 += v * v;
    }
    const double mean = s / n;
    EXPECT_LT(std::abs(mean), 4.0 * std::sqrt(e.variance() / n)) << e.describe();
    EXPECT_NEAR(s2 / n, e.variance(), 0.05 * e.variance()) << e.describe();
  }
  EXPECT_EQ(ErrorDist::degenerate().sample(rng), 0.0);
}

TEST(Lambda, KnownValues) {
  EXPECT_DOUBLE_EQ(lambda_fn(LossSpec::squared(), ErrorDist::laplace(2.0), 0.7), 1.4);
  EXPECT_NEAR(lambda_fn(LossSpec::absolute(), ErrorDist::gaussian(1.0), 0.0), 0.0, 1e-15);
  const double v = lambda_fn(LossSpec::huber(), ErrorDist::gaussian(1.0), 0.1);
  EXPECT_GT(v, 0.0);
  EXPECT_NEAR(v, lambda_oracle(LossSpec::huber(), ErrorDist::gaussian(1.0), 0.1), 1e-8);
}

TEST(Lambda, VanishesAtZeroForShippedPairs) {
  for (const auto& l : shipped_losses()) {
    for (const auto& e : shipped_errors()) {
      EXPECT_LT(std::abs(lambda_fn(l, e, 0.0)), 1e-8) << label(l, e);
      EXPECT_LT(std::abs(lambda_fn(l, e, 0.0, ComputeMethod::quadrature)), 1e-8) << label(l, e);
    }
  }
}

TEST(Lambda, StrictlyIncreasingOnGrid) {
  for (const auto& l : shipped_losses()) {
    for (const auto& e : shipped_errors()) {
      double prev = -INFINITY;
      for (int i = 0; i < 50; ++i) {
        const double y = e.scale() * (-3.0 + 6.0 * i / 49.0);
        const double v = lambda_fn(l, e, y);
        EXPECT_GT(v, prev) << label(l, e) << " at y=" << y;
        prev = v;
      }
    }
  }
}

TEST(Lambda, QuadratureMatchesSimpsonOracle) {
  for (const auto& l : shipped_losses()) {
    for (const auto& e : shipped_errors()) {
      for (double y : {-1.2, 0.35, 2.0}) {
        EXPECT_NEAR(lambda_fn(l, e, y, ComputeMethod::quadrature), lambda_oracle(l, e, y), 2e-6) << label(l, e);
      }
    }
  }
}

TEST(LambdaInfo, SquaredGaussian) {
  const auto li = lambda_info(LossSpec::squared(), ErrorDist::gaussian(1.0));
  EXPECT_DOUBLE_EQ(li.lambda_prime0, 2.0);
  EXPECT_DOUBLE_EQ(li.psi_sq_moment, 4.0);
  EXPECT_EQ(li.method, ComputeMethod::analytic);
}

TEST(LambdaInfo, AbsoluteGaussian) {
  const auto li = lambda_info(LossSpec::absolute(), ErrorDist::gaussian(1.0));
  EXPECT_NEAR(li.lambda_prime0, 2.0 * oracle::normal_pdf(0.0), 1e-12);
  EXPECT_NEAR(li.lambda_prime0, 0.7978845608, 1e-9);
  EXPECT_DOUBLE_EQ(li.psi_sq_moment, 1.0);
}

TEST(LambdaInfo, HuberGaussianIsCentralProbability) {
  const auto li = lambda_info(LossSpec::huber(), ErrorDist::gaussian(1.0));
  EXPECT_NEAR(li.lambda_prime0, oracle::normal_cdf(1.345) - oracle::normal_cdf(-1.345), 1e-12);
}

TEST(LambdaInfo, AnalyticAndQuadratureAgree) {
  for (const auto& l : shipped_losses()) {
    for (const auto& e : shipped_errors()) {
      const auto q = lambda_info(l, e, ComputeMethod::quadrature);
      EXPECT_EQ(q.method, ComputeMethod::quadrature);
      if (!has_analytic_lambda_info(l, e)) continue;
      const auto a = lambda_info(l, e, ComputeMethod::analytic);
      EXPECT_NEAR(a.lambda_prime0, q.lambda_prime0, 1e-6 * a.lambda_prime0) << label(l, e);
      EXPECT_NEAR(a.psi_sq_moment, q.psi_sq_moment, 1e-6 * a.psi_sq_moment) << label(l, e);
    }
  }
}

TEST(LambdaInfo, QuadratureMatchesSimpsonOracle) {
  for (const auto& l : shipped_losses()) {
    for (const auto& e : {ErrorDist::gaussian(1.0), ErrorDist::laplace(0.7), ErrorDist::student_t(5.0)}) {
      const auto q = lambda_info(l, e, ComputeMethod::quadrature);
      const double h = 1e-4;
      const double slope = (lambda_oracle(l, e, h) - lambda_oracle(l, e, -h)) / (2.0 * h);
      EXPECT_NEAR(q.lambda_prime0, slope, 1e-4 * slope) << label(l, e);
      const double w = window(e);
      const double m2 = oracle::simpson_split([&](double u) { return psi(l, u) * psi(l, u) * density(e, u); }, -w, w,
                                              {-l.delta, 0.0, l.delta}, 200000);
      EXPECT_NEAR(q.psi_sq_moment, m2, 1e-5 * m2) << label(l, e);
    }
  }
}

TEST(LambdaInfo, ScaleEquivariance) {
  const auto e = ErrorDist::laplace(0.8);
  const auto base = lambda_info(LossSpec::huber(), e);
  const auto scaled = lambda_info(LossSpec::huber().scaled(2.5), e);
  EXPECT_NEAR(scaled.lambda_prime0, 2.5 * base.lambda_prime0, 1e-12);
  EXPECT_NEAR(scaled.psi_sq_moment, 6.25 * base.psi_sq_moment, 1e-12);
}

TEST(MeanJump, PositiveForShippedPairs) {
  for (const auto& l : shipped_losses()) {
    for (const auto& e : shipped_errors()) {
      for (double d : {-2.0, -0.5, 0.5, 2.0}) EXPECT_GT(mean_jump(l, e, d), 0.0) << label(l, e) << " d=" << d;
    }
  }
}

TEST(MeanJump, SquaredIsDSquared) {
  EXPECT_DOUBLE_EQ(mean_jump(LossSpec::squared(), ErrorDist::student_t(4.0), 1.5), 2.25);
}

// p(d) = int_0^d lambda(z) dz.
TEST(MeanJump, EqualsIntegralOfLambda) {
  for (const auto& l : shipped_losses()) {
    const auto e = ErrorDist::gaussian(1.0);
    for (double d : {-2.0, 0.5}) {
      const double integral = oracle::simpson([&](double z) { return lambda_fn(l, e, z); }, 0.0, d, 40);
      EXPECT_NEAR(mean_jump(l, e, d), integral, 1e-7) << l.name();
    }
  }
}

TEST(JumpSample, SquaredExpansion) {
  const auto loss = LossSpec::squared();
  const auto e = ErrorDist::gaussian(0.4);
  for (int sign : {-1, 1}) {
    Rng a = make_rng(3, static_cast<std::uint64_t>(sign + 1));
    Rng b = a;
    for (int i = 0; i < 50; ++i) {
      const double eps = e.sample(b);
      const double v = jump_variable_sample(loss, e, 1.5, sign, a);
      EXPECT_NEAR(v, 2.0 * sign * 1.5 * eps + 2.25, 1e-12);
    }
  }
}

TEST(JumpSample, AbsoluteMeanMatchesQuadrature) {
  const auto loss = LossSpec::absolute();
  const auto e = ErrorDist::gaussian(1.0);
  Rng rng = make_rng(99);
  const int n = 1000000;
  double s = 0.0;
  double s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = jump_variable_sample(loss, e, 2.0, 1, rng);
    s += v;
    s2 += v * v;
  }
  const double mean = s / n;
  const double se = std::sqrt((s2 / n - mean * mean) / n);
  EXPECT_LT(std::abs(mean - mean_jump(loss, e, 2.0)), 3.0 * se);
}

TEST(JumpSample, RejectsBadArguments) {
  Rng rng = make_rng(1);
  EXPECT_THROW(jump_variable_sample(LossSpec::squared(), ErrorDist::gaussian(1.0), 0.0, 1, rng), InvalidArgument);
  EXPECT_THROW(jump_variable_sample(LossSpec::squared(), ErrorDist::gaussian(1.0), 1.0, 0, rng), InvalidArgument);
}
