#pragma once

#include "mphase/loss.hpp"
#include "mphase/model.hpp"

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace mphase {

/// Paired observations (x_i, y_i) with a stable ascending-x view.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<double> xs, std::vector<double> ys);

  std::size_t size() const noexcept { return xs_.size(); }
  bool empty() const noexcept { return xs_.empty(); }

  const std::vector<double>& xs() const noexcept { return xs_; }
  const std::vector<double>& ys() const noexcept { return ys_; }
  /// Permutation p with xs()[p[0]] <= xs()[p[1]] <= ...; stable for ties.
  const std::vector<std::size_t>& sorted_view() const noexcept { return order_; }
  const std::vector<double>& sorted_xs() const noexcept { return sx_; }
  const std::vector<double>& sorted_ys() const noexcept { return sy_; }

 private:
  std::vector<double> xs_;
  std::vector<double> ys_;
  std::vector<std::size_t> order_;
  std::vector<double> sx_;
  std::vector<double> sy_;
};

struct FitOptions {
  /// Minimum observations per segment; 0 selects max(d + 1, 3).
  int min_seg = 0;
  int multistart = 5;
  int max_iter = 200;
  /// Stop when the max-norm of the score is below grad_tol * max(1, objective).
  double grad_tol = 1e-10;
  double step_shrink = 0.5;
  /// Seeds the multistart perturbations; fits are deterministic given it.
  std::uint64_t seed = 0x5eed;
  /// Workers for the segment-cost search; 0 = hardware concurrency.
  unsigned threads = 1;

  /// Effective min_seg for a family; throws InvalidArgument if an explicit
  /// value is below d + 1 or any option is out of range.
  int resolved_min_seg(const SegmentFamily& family) const;
};

struct SegmentFit {
  Vector alpha;
  double objective = 0.0;
  bool converged = true;
};

/// Minimizes sum_i rho(y_i - h_alpha(x_i)) over alpha. Closed forms for
/// squared+constant, squared+linear and absolute+constant; IRLS Gauss-Newton
/// with backtracking and multistart otherwise. Throws InfeasibleError when the
/// slice has fewer than the resolved min_seg points.
SegmentFit fit_segment(const SegmentFamily& family, std::span<const double> xs, std::span<const double> ys,
                       const LossSpec& loss, const FitOptions& opts);

/// Source of segment costs over sorted observations; cost(first, last) covers
/// the inclusive index range and is +inf when the segment is not admissible.
class SegmentCosts {
 public:
  virtual ~SegmentCosts() = default;
  virtual std::size_t size() const = 0;
  virtual double cost(std::size_t first, std::size_t last) const = 0;
};

/// Dense upper-triangular cost table.
class CostTable final : public SegmentCosts {
 public:
  explicit CostTable(std::size_t n);

  std::size_t size() const override { return n_; }
  double cost(std::size_t first, std::size_t last) const override;
  void set(std::size_t first, std::size_t last, double value);

  /// Number of cells whose inner fit threw and were stored as +inf.
  std::size_t failed_cells = 0;

 private:
  std::size_t index(std::size_t first, std::size_t last) const;

  std::size_t n_;
  std::vector<double> cells_;
};

inline constexpr double kInfeasible = std::numeric_limits<double>::infinity();

/// cost[i][j] = fit_segment objective on sorted observations i..j, for every
/// admissible segment: at least min_seg points, and never splitting equal x
/// values. Inadmissible cells hold +inf. Cells are computed independently.
CostTable segment_cost_table(const Dataset& data, const SegmentFamily& family, const LossSpec& loss,
                             const FitOptions& opts);

/// Exact minimizer of the sum of K + 1 consecutive segment costs. Returns the
/// last sorted index of each of the first K segments. Among tied optima the
/// lexicographically smallest boundary vector wins. `min_seg` only prunes the
/// search; admissibility is carried by the costs. Throws InfeasibleError.
std::vector<std::size_t> dp_partition(const SegmentCosts& cost, int K, std::size_t min_seg = 1,
                                      unsigned threads = 1);

struct SegmentSummary {
  std::size_t first;  ///< sorted index range, inclusive
  std::size_t last;
  Vector alpha;
  double objective;
  bool converged;
};

struct FitResult {
  PiecewiseModel model_hat;
  double objective;
  std::vector<std::size_t> boundary_indices;
  std::vector<SegmentSummary> per_segment;
  /// Cost-search cells whose inner fit failed and were treated as +inf.
  std::size_t failed_cells = 0;

  bool converged() const;
};

/// M_n(theta) = sum_i rho(y_i - f_theta(x_i)).
double m_objective(const PiecewiseModel& model, const Dataset& data, const LossSpec& loss);

/// Two-stage M-estimator with K change-points placed at observed x values;
/// tau_hat_k is the largest x of segment k-1.
FitResult fit(const Dataset& data, const SegmentFamily& family, int K, const LossSpec& loss,
              const FitOptions& opts = {});

/// M_n(theta1_tilde(taus), taus) for arbitrary strictly increasing taus.
double profile_objective(const Dataset& data, const SegmentFamily& family, const LossSpec& loss,
                         const FitOptions& opts, const std::vector<double>& taus);

}  // namespace mphase
