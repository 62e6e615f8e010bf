#pragma once

#include "mphase/estimator.hpp"
#include "mphase/loss.hpp"

#include <optional>
#include <vector>

namespace mphase {

inline constexpr double kMaxConditionNumber = 1e12;

struct V0Estimate {
  /// (1/n) sum_i g_i g_i^T with g_i = grad_piecewise(model_hat, x_i);
  /// block diagonal with K + 1 blocks of size d.
  Matrix V0;
  /// Blocks whose condition number exceeds kMaxConditionNumber.
  std::vector<int> singular_blocks;
};

V0Estimate estimate_V0(const FitResult& fit, const Dataset& data);

/// Default bandwidth 1.06 * s * n^(-1/5), s the normalized MAD of residuals.
double default_bandwidth(std::span<const double> residuals);

/// (lambda_hat(h) - lambda_hat(-h)) / (2h) with lambda_hat(y) the empirical
/// mean of psi(residual + y). bandwidth <= 0 selects default_bandwidth.
/// Requires n >= 30; throws NumericError for degenerate residuals.
double estimate_lambda_prime0_residual(std::span<const double> residuals, const LossSpec& loss,
                                       double bandwidth = 0.0);

enum class InfoSource { known_error_dist, residual_based };

struct AsymptoticInfo {
  Matrix V0_hat;
  double lambda_prime0_hat;
  double psi_sq_hat;
  /// psi_sq_hat * lambda_prime0_hat^-2 * V0_hat^-1 / n
  Matrix cov_theta1;
  InfoSource source;
  std::size_t n;
};

/// Residuals y_i - f_theta_hat(x_i) in the original data order.
std::vector<double> residuals(const FitResult& fit, const Dataset& data);

/// Plug-in Gaussian covariance of theta1_hat. With `err`, lambda'(0) and
/// E[psi^2] come from lambda_info; otherwise from the residuals. Throws
/// NumericError naming the offending blocks when V0_hat is ill-conditioned.
AsymptoticInfo asymptotic_covariance(const FitResult& fit, const Dataset& data, const LossSpec& loss,
                                     const std::optional<ErrorDist>& err = std::nullopt);

struct ConfidenceInterval {
  int segment;    ///< k
  int component;  ///< j within alpha_k
  double estimate;
  double half_width;
  double lower;
  double upper;
};

/// alpha_hat_{k,j} +- z_{(1+level)/2} sqrt(cov_jj). Throws InvalidArgument for
/// level outside [0, 1).
std::vector<ConfidenceInterval> confidence_intervals(const AsymptoticInfo& info, const FitResult& fit, double level);

}  // namespace mphase
