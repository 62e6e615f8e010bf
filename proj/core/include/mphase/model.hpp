#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mphase {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class FamilyKind { constant, linear, exponential, logistic, custom };

/// Parametric segment function h_alpha(x).
///
///   constant     h(x) = a
///   linear       h(x) = a + b x
///   exponential  h(x) = a exp(b x)
///   logistic     h(x) = a / (1 + exp(-b (x - c)))
///
/// User-defined families plug in through `custom` with an (eval, gradient, d)
/// triple. The shipped families are smooth in alpha for every finite x; custom
/// families must supply the same guarantee for the asymptotic results to hold.
class SegmentFamily {
 public:
  using EvalFn = std::function<double(const Vector&, double)>;
  using GradFn = std::function<Vector(const Vector&, double)>;

  static SegmentFamily constant() { return SegmentFamily(FamilyKind::constant); }
  static SegmentFamily linear() { return SegmentFamily(FamilyKind::linear); }
  static SegmentFamily exponential() { return SegmentFamily(FamilyKind::exponential); }
  static SegmentFamily logistic() { return SegmentFamily(FamilyKind::logistic); }
  static SegmentFamily custom(std::string name, int param_dim, EvalFn eval, GradFn grad);

  /// Parses "constant", "linear", "exponential" or "logistic".
  static SegmentFamily from_name(std::string_view name);

  FamilyKind kind() const noexcept { return kind_; }
  int param_dim() const noexcept { return dim_; }
  const std::string& name() const noexcept { return name_; }

  /// h_alpha(x). Throws InvalidArgument when alpha.size() != param_dim().
  double eval(const Vector& alpha, double x) const;
  /// dh_alpha(x)/dalpha, analytic.
  Vector grad(const Vector& alpha, double x) const;

 private:
  explicit SegmentFamily(FamilyKind kind);

  void check_dim(const Vector& alpha) const;

  FamilyKind kind_;
  int dim_;
  std::string name_;
  std::shared_ptr<const EvalFn> custom_eval_;
  std::shared_ptr<const GradFn> custom_grad_;
};

double eval_segment(const SegmentFamily& family, const Vector& alpha, double x);
Vector grad_segment(const SegmentFamily& family, const Vector& alpha, double x);

/// Coordinate box standing in for the compact parameter set. The asymptotic
/// theory assumes compactness; fits do not enforce the box, validation does.
struct ParamBox {
  Vector lower;
  Vector upper;

  bool contains(const Vector& alpha) const;
};

/// f_theta(x) = sum_k h_{alpha_k}(x) 1{tau_k < x <= tau_{k+1}}, tau_0 = -inf,
/// tau_{K+1} = +inf. A point sitting exactly on tau_k belongs to segment k-1.
class PiecewiseModel {
 public:
  /// Checks only the structural invariants (|alphas| = |taus| + 1, dimensions,
  /// finite values). Ordering, box and identifiability are reported by
  /// validate_model so that invalid models can still be inspected.
  PiecewiseModel(SegmentFamily family, std::vector<Vector> alphas, std::vector<double> taus,
                 std::optional<ParamBox> box = std::nullopt);

  const SegmentFamily& family() const noexcept { return family_; }
  const std::vector<Vector>& alphas() const noexcept { return alphas_; }
  const std::vector<double>& taus() const noexcept { return taus_; }
  const std::optional<ParamBox>& param_box() const noexcept { return box_; }

  int num_changepoints() const noexcept { return static_cast<int>(taus_.size()); }
  int num_segments() const noexcept { return static_cast<int>(alphas_.size()); }
  int param_dim() const noexcept { return family_.param_dim(); }

  /// Index k of the segment containing x (left-closed boundary convention).
  int segment_of(double x) const;

  /// theta_1 stacked as (alpha_0, ..., alpha_K).
  Vector stacked_alphas() const;
  /// Same model with theta_1 replaced by the stacked vector.
  PiecewiseModel with_stacked_alphas(const Vector& theta1) const;

 private:
  SegmentFamily family_;
  std::vector<Vector> alphas_;
  std::vector<double> taus_;
  std::optional<ParamBox> box_;
};

double eval_piecewise(const PiecewiseModel& model, double x);
/// Block vector of length (K+1)d; only the block of the segment containing x
/// is nonzero.
Vector grad_piecewise(const PiecewiseModel& model, double x);

struct Jump {
  int index;     ///< k in 1..K
  double value;  ///< h_{alpha_k}(tau_k) - h_{alpha_{k-1}}(tau_k)
};

std::vector<Jump> jumps(const PiecewiseModel& model);

inline constexpr double kDefaultJumpTol = 1e-10;

struct ValidationReport {
  enum class Kind { tau_order, box, identifiability };

  struct Violation {
    Kind kind;
    int index;  ///< tau index (1-based) or segment index (0-based) for box
    std::string message;
  };

  std::vector<Violation> violations;

  bool ok() const noexcept { return violations.empty(); }
  bool has(Kind kind) const;
};

ValidationReport validate_model(const PiecewiseModel& model, double jump_tol = kDefaultJumpTol);

}  // namespace mphase
