#pragma once

#include "mphase/estimator.hpp"
#include "mphase/limitlaw.hpp"
#include "mphase/loss.hpp"
#include "mphase/model.hpp"
#include "mphase/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mphase {

enum class XKind { gaussian, uniform };

/// Design distribution of X.
class XDist {
 public:
  static XDist gaussian(double mu, double sigma);
  static XDist uniform(double a, double b);

  XKind kind() const noexcept { return kind_; }
  double param1() const noexcept { return p1_; }  ///< mu or a
  double param2() const noexcept { return p2_; }  ///< sigma or b

  double pdf(double x) const;
  double cdf(double x) const;
  double sample(Rng& rng) const;
  /// Interval carrying all but a negligible amount of mass.
  double lower() const;
  double upper() const;
  std::string describe() const;

 private:
  XDist(XKind kind, double p1, double p2) : kind_(kind), p1_(p1), p2_(p2) {}

  XKind kind_;
  double p1_;
  double p2_;
};

struct SimDesign {
  XDist x_dist = XDist::uniform(-1.0, 1.0);
  ErrorDist err = ErrorDist::gaussian(1.0);
  PiecewiseModel truth;
  std::size_t n = 0;
  std::uint64_t seed = 0;

  /// IdentifiabilityError naming the condition when the truth has a zero
  /// jump; InvalidArgument for unordered taus or zero density at a tau.
  void validate() const;
};

/// All X first, then all errors, from one stream.
Dataset generate_dataset(const SimDesign& design, Rng& rng);
Dataset generate_dataset(const SimDesign& design);

/// E[g g^T] under the design with g = grad_piecewise(truth, X), by quadrature.
Matrix population_V0(const PiecewiseModel& truth, const XDist& x_dist);

/// Asymptotic covariance of sqrt(n) (theta1_hat - theta1_0).
Matrix theoretical_covariance(const SimDesign& design, const LossSpec& loss);

struct ExperimentOptions {
  FitOptions fit;  ///< fit.threads is forced to 1; replications run in parallel
  unsigned threads = 1;
  double failure_budget = 0.05;
};

struct RateReport {
  std::vector<std::size_t> n_grid;
  std::vector<std::vector<double>> medians_tau;  ///< [n index][k]
  std::vector<double> medians_alpha;
  std::vector<double> slopes_tau;  ///< per change-point
  double slope_tau = 0.0;          ///< mean of slopes_tau
  double slope_alpha = 0.0;
  int reps = 0;
  int failures = 0;
  int attempts = 0;
};

/// For each n, `reps` fits on fresh datasets; rep r at grid index i uses
/// stream (seed, i, r). Throws FailureBudgetError beyond the budget.
RateReport run_rate_experiment(const SimDesign& design, const std::vector<std::size_t>& n_grid, int reps,
                               const SegmentFamily& family, const LossSpec& loss,
                               const ExperimentOptions& opts = {});

struct NormalityReport {
  std::size_t n = 0;
  int reps = 0;
  Matrix empirical_cov;    ///< of sqrt(n) (theta1_hat - theta1_0)
  Matrix theoretical_cov;
  double rel_frobenius = 0.0;
  std::vector<double> skewness;
  std::vector<double> kurtosis;  ///< not excess; 3 for a normal
  int failures = 0;
  int attempts = 0;
};

NormalityReport run_normality_experiment(const SimDesign& design, int reps, const SegmentFamily& family,
                                         const LossSpec& loss, const ExperimentOptions& opts = {});

/// Limit-law spec of change-point k (1-based) under the design: rate is the X
/// density at tau0_k and jump_d the true jump.
LimitLawSpec true_limit_spec(const SimDesign& design, int k, const LossSpec& loss);

struct LimitLawReport {
  std::size_t n = 0;
  int reps = 0;
  int k = 1;
  std::vector<double> scaled_errors;  ///< n (tau_hat_k - tau0_k), replication order
  std::vector<double> limit_samples;
  std::size_t censored = 0;
  double ks_distance = 0.0;
  std::vector<double> probs;
  std::vector<double> quantiles_estimator;
  std::vector<double> quantiles_limit;
  int failures = 0;
  int attempts = 0;
};

inline const std::vector<double> kQuantileLevels = {0.05, 0.25, 0.50, 0.75, 0.95};

/// Throws InvalidArgument when spec.rate / spec.jump_d disagree with the
/// design (relative 1e-6).
LimitLawReport run_limitlaw_experiment(const SimDesign& design, int reps, const LimitLawSpec& spec,
                                       std::size_t n_samples, const SegmentFamily& family, const LossSpec& loss,
                                       const ExperimentOptions& opts = {}, int k = 1);

/// #{i : |x_i - tau0| <= B / n}.
std::size_t near_changepoint_count(const Dataset& data, double tau0, double B);

/// G_n(u) / G(u) with G_n the empirical and G the design mass of the union of
/// intervals (min(tau0_k, tau0_k + u_k), max(...)], summed over k.
double ratio_Gn_over_G(const Dataset& data, const std::vector<double>& tau0s, const std::vector<double>& us,
                       const XDist& x_dist);

struct QuadraticCheckEntry {
  int direction;
  double radius;
  double actual;     ///< M_n(theta1_hat + w / sqrt(n), theta2_hat) - M_n(theta_hat)
  double quadratic;  ///< (lambda'(0) / 2) w^T V0_hat w
  double rel_error;
};

struct QuadraticCheckReport {
  std::vector<QuadraticCheckEntry> entries;
  double max_rel_error = 0.0;
};

/// Rays through theta1_hat at fixed theta2_hat along coordinate axes and the
/// all-ones / alternating-sign diagonals.
QuadraticCheckReport quadratic_approximation_check(const FitResult& fit, const Dataset& data, const LossSpec& loss,
                                                   double lambda_prime0,
                                                   const std::vector<double>& radii = {0.5, 1.0, 1.5, 2.0});

}  // namespace mphase
