#pragma once

#include "mphase/rng.hpp"

#include <string>
#include <string_view>

namespace mphase {

enum class ErrorKind { gaussian, laplace, student_t, degenerate };

/// Centered error law with a density that is positive everywhere and a finite
/// second moment. `degenerate` is a point mass at zero, accepted only by the
/// simulators (noiseless designs); density-based quantities reject it.
class ErrorDist {
 public:
  static ErrorDist gaussian(double sigma);
  static ErrorDist laplace(double b);
  /// Requires nu > 2 so that the variance is finite.
  static ErrorDist student_t(double nu, double scale = 1.0);
  static ErrorDist degenerate();

  ErrorKind kind() const noexcept { return kind_; }
  /// sigma, b, or the t scale parameter.
  double scale() const noexcept { return scale_; }
  double nu() const noexcept { return nu_; }
  bool is_degenerate() const noexcept { return kind_ == ErrorKind::degenerate; }

  double pdf(double u) const;
  double pdf_derivative(double u) const;
  double cdf(double u) const;
  double variance() const;
  double sd() const;
  double sample(Rng& rng) const;

  std::string describe() const;

 private:
  ErrorDist(ErrorKind kind, double scale, double nu) : kind_(kind), scale_(scale), nu_(nu) {}
  void require_density(const char* what) const;

  ErrorKind kind_;
  double scale_;
  double nu_;
};

enum class LossKind { squared, absolute, huber };

inline constexpr double kDefaultHuberDelta = 1.345;

/// Convex loss rho = scale * base(r) with right-continuous derivative psi.
///   squared   base(r) = r^2
///   absolute  base(r) = |r|            psi(0) = +scale
///   huber     base(r) = r^2/2 for |r| <= delta, delta |r| - delta^2/2 otherwise
struct LossSpec {
  LossKind kind = LossKind::squared;
  double delta = kDefaultHuberDelta;
  double scale = 1.0;

  static LossSpec squared() { return {LossKind::squared, kDefaultHuberDelta, 1.0}; }
  static LossSpec absolute() { return {LossKind::absolute, kDefaultHuberDelta, 1.0}; }
  static LossSpec huber(double delta = kDefaultHuberDelta);
  /// Parses "squared", "absolute" or "huber".
  static LossSpec from_name(std::string_view name, double delta = kDefaultHuberDelta);

  /// Registry hook for maximum-likelihood losses -log f(r) + log f(0). Only
  /// laws whose negative log density is convex are accepted: gaussian gives
  /// r^2 / (2 sigma^2), laplace gives |r| / b.
  static LossSpec negative_log_density(const ErrorDist& err);

  LossSpec scaled(double c) const;
  std::string name() const;
};

double rho(const LossSpec& loss, double r);
double psi(const LossSpec& loss, double r);

enum class ComputeMethod { automatic, analytic, quadrature };

struct LambdaInfo {
  double lambda_prime0;  ///< derivative of lambda(y) = E[psi(eps + y)] at 0
  double psi_sq_moment;  ///< E[psi(eps)^2]
  ComputeMethod method;  ///< analytic when both values came from closed forms
};

/// lambda(y) = E[psi(eps + y)]. Closed form for the squared loss (any centered
/// law) and the absolute loss (2 F(y) - 1); adaptive quadrature otherwise.
double lambda_fn(const LossSpec& loss, const ErrorDist& err, double y,
                 ComputeMethod method = ComputeMethod::automatic);

/// Whether closed forms exist for both lambda'(0) and E[psi^2].
bool has_analytic_lambda_info(const LossSpec& loss, const ErrorDist& err);

/// lambda'(0) and E[psi^2(eps)]. Quadrature computes lambda'(0) as
/// -int psi(u) f'(u) du. Requesting `analytic` without a closed form throws
/// NumericError. Throws NumericError when lambda'(0) <= 0.
LambdaInfo lambda_info(const LossSpec& loss, const ErrorDist& err,
                       ComputeMethod method = ComputeMethod::automatic);

/// E[rho(eps + d) - rho(eps)], the mean jump of the change-point limit process.
double mean_jump(const LossSpec& loss, const ErrorDist& err, double d,
                 ComputeMethod method = ComputeMethod::automatic);

/// One draw of rho(eps + sign d) - rho(eps). Throws InvalidArgument for d == 0
/// or sign not in {-1, +1}.
double jump_variable_sample(const LossSpec& loss, const ErrorDist& err, double d, int sign, Rng& rng);

}  // namespace mphase
