#pragma once

#include "mphase/estimator.hpp"
#include "mphase/loss.hpp"
#include "mphase/rng.hpp"

#include <cstdint>
#include <vector>

namespace mphase {

/// Two-sided compound Poisson process of one change-point: arrivals at rate
/// `rate` on each half-line, jumps rho(eps + d) - rho(eps) on t > 0 and
/// rho(eps - d) - rho(eps) on t < 0. Its smallest minimizer is the limit law
/// of n (tau_hat_k - tau0_k).
struct LimitLawSpec {
  double rate = 1.0;    ///< density of X at the true change-point
  double jump_d = 1.0;  ///< true jump d0_k
  LossSpec loss = LossSpec::squared();
  ErrorDist err = ErrorDist::gaussian(1.0);
  /// 0 selects 1e6 / rate.
  double horizon_cap = 0.0;
  /// Fraction of the window treated as "near the boundary".
  double extend_margin = 0.05;

  /// Throws InvalidArgument unless rate > 0, jump_d != 0, margin in (0, 1)
  /// and both mean jumps are positive (finite argmin almost surely).
  void validate() const;
  double resolved_cap() const;
  /// 10 / (rate * min(1, smallest mean jump)).
  double initial_horizon() const;
};

struct CompoundPath {
  int side = 1;  ///< +1 for t >= 0, -1 for t <= 0 (times stored as |t|)
  double horizon = 0.0;
  std::vector<double> jump_times;  ///< increasing, in (0, horizon]
  std::vector<double> jump_values;
  std::vector<double> cumulative;  ///< cumulative[j] = sum of the first j + 1 values
};

CompoundPath sample_path(const LimitLawSpec& spec, int side, double horizon, Rng& rng);

/// Appends the arrivals on (path.horizon, new_horizon].
void extend_path(const LimitLawSpec& spec, CompoundPath& path, double new_horizon, Rng& rng);

/// P(t): positive side counts arrivals with time <= t; negative side counts
/// arrivals with time < -t, so every constant piece is closed on the left and
/// the infimum of the argmin set is attained.
double evaluate_process(const CompoundPath& pos, const CompoundPath& neg, double t);

struct ArgminLocation {
  double location;       ///< infimum of the argmin set within the window
  double minimum;        ///< process value there
  bool boundary_active;  ///< argmin piece touches (or is within margin of) a window edge
};

ArgminLocation locate_argmin(const CompoundPath& pos, const CompoundPath& neg, double margin = 0.05);

/// Smallest minimizer of the two-sided process over the simulated window.
/// Two empty paths give 0.
double smallest_argmin(const CompoundPath& pos, const CompoundPath& neg);

struct LimitSample {
  std::vector<double> values;
  std::size_t censored = 0;   ///< draws that hit horizon_cap still boundary-active
  double mean_jumps = 0.0;    ///< mean number of arrivals in the final window
  double mean_horizon = 0.0;
};

/// i.i.d. draws of the smallest minimizer; draw i uses stream (seed, i) so the
/// output does not depend on `threads`.
LimitSample sample_limit_distribution(const LimitLawSpec& spec, std::size_t n_samples, std::uint64_t seed,
                                      unsigned threads = 1);
LimitSample sample_limit_distribution(const LimitLawSpec& spec, std::size_t n_samples, Rng& rng);

/// Heuristic data-driven spec for change-point k (1-based): rate from a
/// Gaussian kernel density estimate of X at tau_hat_k (Silverman bandwidth),
/// jump from the fitted model. Not covered by the asymptotic theory.
LimitLawSpec heuristic_limit_spec(const FitResult& fit, const Dataset& data, int k, const LossSpec& loss,
                                  const ErrorDist& err);

}  // namespace mphase
