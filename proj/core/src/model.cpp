#include "mphase/model.hpp"

#include "mphase/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mphase {

namespace {

int dim_of(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::constant: return 1;
    case FamilyKind::linear: return 2;
    case FamilyKind::exponential: return 2;
    case FamilyKind::logistic: return 3;
    case FamilyKind::custom: return 0;
  }
  return 0;
}

std::string name_of(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::constant: return "constant";
    case FamilyKind::linear: return "linear";
    case FamilyKind::exponential: return "exponential";
    case FamilyKind::logistic: return "logistic";
    case FamilyKind::custom: return "custom";
  }
  return {};
}

// 1 / (1 + exp(-z)) without overflow for large |z|.
double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

SegmentFamily::SegmentFamily(FamilyKind kind) : kind_(kind), dim_(dim_of(kind)), name_(name_of(kind)) {}

SegmentFamily SegmentFamily::custom(std::string name, int param_dim, EvalFn eval, GradFn grad) {
  if (param_dim <= 0) {
    throw InvalidArgument("custom family needs a positive parameter dimension");
  }
  if (!eval || !grad) {
    throw InvalidArgument("custom family needs both eval and gradient callables");
  }
  SegmentFamily f(FamilyKind::custom);
  f.dim_ = param_dim;
  f.name_ = std::move(name);
  f.custom_eval_ = std::make_shared<const EvalFn>(std::move(eval));
  f.custom_grad_ = std::make_shared<const GradFn>(std::move(grad));
  return f;
}

SegmentFamily SegmentFamily::from_name(std::string_view name) {
  if (name == "constant") return constant();
  if (name == "linear") return linear();
  if (name == "exponential") return exponential();
  if (name == "logistic") return logistic();
  throw InvalidArgument("unknown segment family '" + std::string(name) + "'");
}

void SegmentFamily::check_dim(const Vector& alpha) const {
  if (alpha.size() != dim_) {
    std::ostringstream os;
    os << name_ << " family expects " << dim_ << " parameters, got " << alpha.size();
    throw InvalidArgument(os.str());
  }
}

double SegmentFamily::eval(const Vector& alpha, double x) const {
  check_dim(alpha);
  switch (kind_) {
    case FamilyKind::constant:
      return alpha[0];
    case FamilyKind::linear:
      return alpha[0] + alpha[1] * x;
    case FamilyKind::exponential:
      return alpha[0] * std::exp(alpha[1] * x);
    case FamilyKind::logistic:
      return alpha[0] * sigmoid(alpha[1] * (x - alpha[2]));
    case FamilyKind::custom:
      return (*custom_eval_)(alpha, x);
  }
  return 0.0;
}

Vector SegmentFamily::grad(const Vector& alpha, double x) const {
  check_dim(alpha);
  Vector g(dim_);
  switch (kind_) {
    case FamilyKind::constant:
      g[0] = 1.0;
      break;
    case FamilyKind::linear:
      g[0] = 1.0;
      g[1] = x;
      break;
    case FamilyKind::exponential: {
      const double e = std::exp(alpha[1] * x);
      g[0] = e;
      g[1] = alpha[0] * x * e;
      break;
    }
    case FamilyKind::logistic: {
      const double u = x - alpha[2];
      const double s = sigmoid(alpha[1] * u);
      const double ds = s * (1.0 - s);
      g[0] = s;
      g[1] = alpha[0] * ds * u;
      g[2] = -alpha[0] * ds * alpha[1];
      break;
    }
    case FamilyKind::custom: {
      g = (*custom_grad_)(alpha, x);
      if (g.size() != dim_) {
        throw InvalidArgument("custom family gradient has wrong length");
      }
      break;
    }
  }
  return g;
}

double eval_segment(const SegmentFamily& family, const Vector& alpha, double x) {
  return family.eval(alpha, x);
}

Vector grad_segment(const SegmentFamily& family, const Vector& alpha, double x) {
  return family.grad(alpha, x);
}

bool ParamBox::contains(const Vector& alpha) const {
  if (alpha.size() != lower.size() || alpha.size() != upper.size()) {
    return false;
  }
  return (alpha.array() >= lower.array()).all() && (alpha.array() <= upper.array()).all();
}

PiecewiseModel::PiecewiseModel(SegmentFamily family, std::vector<Vector> alphas,
                               std::vector<double> taus, std::optional<ParamBox> box)
    : family_(std::move(family)), alphas_(std::move(alphas)), taus_(std::move(taus)), box_(std::move(box)) {
  if (alphas_.size() != taus_.size() + 1) {
    std::ostringstream os;
    os << "piecewise model needs |alphas| = |taus| + 1, got " << alphas_.size() << " alphas and "
       << taus_.size() << " taus";
    throw InvalidArgument(os.str());
  }
  for (const auto& a : alphas_) {
    if (a.size() != family_.param_dim()) {
      throw InvalidArgument("segment parameter vector has the wrong dimension for family " +
                            family_.name());
    }
    if (!a.allFinite()) {
      throw InvalidArgument("segment parameters must be finite");
    }
  }
  for (double t : taus_) {
    if (!std::isfinite(t)) {
      throw InvalidArgument("change-points must be finite");
    }
  }
}

int PiecewiseModel::segment_of(double x) const {
  // First tau with x <= tau: x belongs to the segment ending there.
  auto it = std::lower_bound(taus_.begin(), taus_.end(), x);
  return static_cast<int>(it - taus_.begin());
}

Vector PiecewiseModel::stacked_alphas() const {
  const int d = param_dim();
  Vector out(d * num_segments());
  for (int k = 0; k < num_segments(); ++k) {
    out.segment(k * d, d) = alphas_[k];
  }
  return out;
}

PiecewiseModel PiecewiseModel::with_stacked_alphas(const Vector& theta1) const {
  const int d = param_dim();
  if (theta1.size() != d * num_segments()) {
    throw InvalidArgument("stacked parameter vector has the wrong length");
  }
  std::vector<Vector> alphas(num_segments());
  for (int k = 0; k < num_segments(); ++k) {
    alphas[k] = theta1.segment(k * d, d);
  }
  return PiecewiseModel(family_, std::move(alphas), taus_, box_);
}

double eval_piecewise(const PiecewiseModel& model, double x) {
  return model.family().eval(model.alphas()[model.segment_of(x)], x);
}

Vector grad_piecewise(const PiecewiseModel& model, double x) {
  const int d = model.param_dim();
  const int k = model.segment_of(x);
  Vector g = Vector::Zero(d * model.num_segments());
  g.segment(k * d, d) = model.family().grad(model.alphas()[k], x);
  return g;
}

std::vector<Jump> jumps(const PiecewiseModel& model) {
  std::vector<Jump> out;
  out.reserve(model.taus().size());
  const auto& f = model.family();
  for (std::size_t k = 1; k <= model.taus().size(); ++k) {
    const double tau = model.taus()[k - 1];
    out.push_back({static_cast<int>(k), f.eval(model.alphas()[k], tau) - f.eval(model.alphas()[k - 1], tau)});
  }
  return out;
}

bool ValidationReport::has(Kind kind) const {
  return std::any_of(violations.begin(), violations.end(),
                     [kind](const Violation& v) { return v.kind == kind; });
}

ValidationReport validate_model(const PiecewiseModel& model, double jump_tol) {
  ValidationReport report;
  const auto& taus = model.taus();
  for (std::size_t k = 1; k < taus.size(); ++k) {
    if (!(taus[k - 1] < taus[k])) {
      std::ostringstream os;
      os << "change-points not strictly increasing: tau_" << k << " = " << taus[k - 1] << " >= tau_"
         << k + 1 << " = " << taus[k];
      report.violations.push_back({ValidationReport::Kind::tau_order, static_cast<int>(k + 1), os.str()});
    }
  }
  if (model.param_box()) {
    for (int k = 0; k < model.num_segments(); ++k) {
      if (!model.param_box()->contains(model.alphas()[k])) {
        std::ostringstream os;
        os << "alpha_" << k << " lies outside the parameter box";
        report.violations.push_back({ValidationReport::Kind::box, k, os.str()});
      }
    }
  }
  for (const Jump& j : jumps(model)) {
    if (!(std::abs(j.value) > jump_tol)) {
      std::ostringstream os;
      os << "jump d_" << j.index << " = " << j.value << " at tau_" << j.index
         << " is not identifiable (|d| <= " << jump_tol << ")";
      report.violations.push_back({ValidationReport::Kind::identifiability, j.index, os.str()});
    }
  }
  return report;
}

}  // namespace mphase
