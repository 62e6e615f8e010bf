#include "mphase/loss.hpp"

#include "mphase/error.hpp"
#include "mphase/quadrature.hpp"
#include "mphase/stats.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mphase {

// ---------------------------------------------------------------- ErrorDist

ErrorDist ErrorDist::gaussian(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidArgument("gaussian error needs sigma > 0");
  return {ErrorKind::gaussian, sigma, 0.0};
}

ErrorDist ErrorDist::laplace(double b) {
  if (!(b > 0.0) || !std::isfinite(b)) throw InvalidArgument("laplace error needs scale b > 0");
  return {ErrorKind::laplace, b, 0.0};
}

ErrorDist ErrorDist::student_t(double nu, double scale) {
  if (!(nu > 2.0)) throw InvalidArgument("student_t error needs nu > 2 for a finite variance");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidArgument("student_t error needs scale > 0");
  return {ErrorKind::student_t, scale, nu};
}

ErrorDist ErrorDist::degenerate() {
  return {ErrorKind::degenerate, 0.0, 0.0};
}

void ErrorDist::require_density(const char* what) const {
  if (is_degenerate()) {
    throw InvalidArgument(std::string("degenerate error law has no density (") + what + ")");
  }
}

namespace {

double t_norm_const(double nu) {
  return std::exp(std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu)) / std::sqrt(nu * M_PI);
}

}  // namespace

double ErrorDist::pdf(double u) const {
  require_density("pdf");
  switch (kind_) {
    case ErrorKind::gaussian:
      return stats::normal_pdf(u / scale_) / scale_;
    case ErrorKind::laplace:
      return std::exp(-std::abs(u) / scale_) / (2.0 * scale_);
    case ErrorKind::student_t: {
      const double z = u / scale_;
      return t_norm_const(nu_) * std::pow(1.0 + z * z / nu_, -0.5 * (nu_ + 1.0)) / scale_;
    }
    case ErrorKind::degenerate:
      break;
  }
  return 0.0;
}

double ErrorDist::pdf_derivative(double u) const {
  require_density("pdf derivative");
  switch (kind_) {
    case ErrorKind::gaussian:
      return -u / (scale_ * scale_) * pdf(u);
    case ErrorKind::laplace: {
      const double s = u > 0.0 ? 1.0 : (u < 0.0 ? -1.0 : 0.0);
      return -s / scale_ * pdf(u);
    }
    case ErrorKind::student_t: {
      const double z = u / scale_;
      return -(nu_ + 1.0) * z / (nu_ * scale_ * (1.0 + z * z / nu_)) * pdf(u);
    }
    case ErrorKind::degenerate:
      break;
  }
  return 0.0;
}

double ErrorDist::cdf(double u) const {
  switch (kind_) {
    case ErrorKind::gaussian:
      return stats::normal_cdf(u / scale_);
    case ErrorKind::laplace:
      return u < 0.0 ? 0.5 * std::exp(u / scale_) : 1.0 - 0.5 * std::exp(-u / scale_);
    case ErrorKind::student_t:
      return boost::math::cdf(boost::math::students_t_distribution<double>(nu_), u / scale_);
    case ErrorKind::degenerate:
      return u >= 0.0 ? 1.0 : 0.0;
  }
  return 0.0;
}

double ErrorDist::variance() const {
  switch (kind_) {
    case ErrorKind::gaussian: return scale_ * scale_;
    case ErrorKind::laplace: return 2.0 * scale_ * scale_;
    case ErrorKind::student_t: return scale_ * scale_ * nu_ / (nu_ - 2.0);
    case ErrorKind::degenerate: return 0.0;
  }
  return 0.0;
}

double ErrorDist::sd() const {
  return std::sqrt(variance());
}

double ErrorDist::sample(Rng& rng) const {
  switch (kind_) {
    case ErrorKind::gaussian:
      return std::normal_distribution<double>(0.0, scale_)(rng);
    case ErrorKind::laplace: {
      const double u = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
      const double s = u < 0.0 ? -1.0 : 1.0;
      return -scale_ * s * std::log1p(-2.0 * std::abs(u));
    }
    case ErrorKind::student_t:
      return scale_ * std::student_t_distribution<double>(nu_)(rng);
    case ErrorKind::degenerate:
      return 0.0;
  }
  return 0.0;
}

std::string ErrorDist::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case ErrorKind::gaussian: os << "gaussian(sigma=" << scale_ << ")"; break;
    case ErrorKind::laplace: os << "laplace(b=" << scale_ << ")"; break;
    case ErrorKind::student_t: os << "student_t(nu=" << nu_ << ", scale=" << scale_ << ")"; break;
    case ErrorKind::degenerate: os << "degenerate"; break;
  }
  return os.str();
}

// ----------------------------------------------------------------- LossSpec

LossSpec LossSpec::huber(double delta) {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw InvalidArgument("huber loss needs delta > 0");
  return {LossKind::huber, delta, 1.0};
}

LossSpec LossSpec::from_name(std::string_view name, double delta) {
  if (name == "squared") return squared();
  if (name == "absolute") return absolute();
  if (name == "huber") return huber(delta);
  throw InvalidArgument("unknown loss '" + std::string(name) + "'");
}

LossSpec LossSpec::negative_log_density(const ErrorDist& err) {
  switch (err.kind()) {
    case ErrorKind::gaussian:
      return squared().scaled(0.5 / (err.scale() * err.scale()));
    case ErrorKind::laplace:
      return absolute().scaled(1.0 / err.scale());
    case ErrorKind::student_t:
      throw InvalidArgument("student_t negative log density is not convex");
    case ErrorKind::degenerate:
      break;
  }
  throw InvalidArgument("degenerate error law has no log density");
}

LossSpec LossSpec::scaled(double c) const {
  if (!(c > 0.0) || !std::isfinite(c)) throw InvalidArgument("loss scale must be positive");
  LossSpec out = *this;
  out.scale *= c;
  return out;
}

std::string LossSpec::name() const {
  switch (kind) {
    case LossKind::squared: return "squared";
    case LossKind::absolute: return "absolute";
    case LossKind::huber: return "huber";
  }
  return {};
}

double rho(const LossSpec& loss, double r) {
  switch (loss.kind) {
    case LossKind::squared:
      return loss.scale * r * r;
    case LossKind::absolute:
      return loss.scale * std::abs(r);
    case LossKind::huber: {
      const double a = std::abs(r);
      return loss.scale * (a <= loss.delta ? 0.5 * r * r : loss.delta * a - 0.5 * loss.delta * loss.delta);
    }
  }
  return 0.0;
}

double psi(const LossSpec& loss, double r) {
  switch (loss.kind) {
    case LossKind::squared:
      return loss.scale * 2.0 * r;
    case LossKind::absolute:
      return loss.scale * (r >= 0.0 ? 1.0 : -1.0);
    case LossKind::huber:
      return loss.scale * std::clamp(r, -loss.delta, loss.delta);
  }
  return 0.0;
}

// ----------------------------------------------------------- lambda & co.

namespace {

// Points where psi or rho has a kink, shifted by `shift` (argument u + shift).
std::vector<double> kinks(const LossSpec& loss, double shift) {
  std::vector<double> out{-shift};
  if (loss.kind == LossKind::huber) {
    out.push_back(-shift - loss.delta);
    out.push_back(-shift + loss.delta);
  }
  return out;
}

double half_width(const ErrorDist& err, double extra) {
  return 12.0 * err.sd() + std::abs(extra);
}

double lambda_quadrature(const LossSpec& loss, const ErrorDist& err, double y) {
  auto breaks = kinks(loss, y);
  breaks.push_back(0.0);
  return quadrature::integrate_real_line(
      [&](double u) { return psi(loss, u + y) * err.pdf(u); }, breaks, half_width(err, y), "lambda(y)");
}

double lambda_prime0_quadrature(const LossSpec& loss, const ErrorDist& err) {
  auto breaks = kinks(loss, 0.0);
  return -quadrature::integrate_real_line(
      [&](double u) { return psi(loss, u) * err.pdf_derivative(u); }, breaks, half_width(err, 0.0),
      "lambda'(0)");
}

double psi_sq_quadrature(const LossSpec& loss, const ErrorDist& err) {
  auto breaks = kinks(loss, 0.0);
  return quadrature::integrate_real_line(
      [&](double u) {
        const double p = psi(loss, u);
        return p * p * err.pdf(u);
      },
      breaks, half_width(err, 0.0), "E[psi^2]");
}

bool analytic_lambda_prime0(const LossSpec& loss, const ErrorDist& err, double& out) {
  const double c = loss.scale;
  switch (loss.kind) {
    case LossKind::squared:
      out = 2.0 * c;
      return true;
    case LossKind::absolute:
      if (err.is_degenerate()) return false;
      out = 2.0 * c * err.pdf(0.0);
      return true;
    case LossKind::huber:
      if (err.is_degenerate()) {
        out = c;
        return true;
      }
      out = c * (err.cdf(loss.delta) - err.cdf(-loss.delta));
      return true;
  }
  return false;
}

bool analytic_psi_sq(const LossSpec& loss, const ErrorDist& err, double& out) {
  const double c2 = loss.scale * loss.scale;
  switch (loss.kind) {
    case LossKind::squared:
      out = 4.0 * c2 * err.variance();
      return true;
    case LossKind::absolute:
      out = c2;
      return true;
    case LossKind::huber: {
      const double d = loss.delta;
      if (err.kind() == ErrorKind::gaussian) {
        const double s = err.scale();
        const double z = d / s;
        const double inner = s * s * ((2.0 * stats::normal_cdf(z) - 1.0) - 2.0 * z * stats::normal_pdf(z));
        out = c2 * (inner + d * d * 2.0 * stats::normal_cdf(-z));
        return true;
      }
      if (err.kind() == ErrorKind::laplace) {
        const double b = err.scale();
        out = c2 * (2.0 * b * b - std::exp(-d / b) * (2.0 * b * d + 2.0 * b * b));
        return true;
      }
      if (err.is_degenerate()) {
        out = 0.0;
        return true;
      }
      return false;
    }
  }
  return false;
}

}  // namespace

double lambda_fn(const LossSpec& loss, const ErrorDist& err, double y, ComputeMethod method) {
  if (err.is_degenerate()) return psi(loss, y);
  const bool closed = loss.kind == LossKind::squared || loss.kind == LossKind::absolute;
  if (method == ComputeMethod::analytic && !closed) {
    throw NumericError("no closed form for lambda(y) with the " + loss.name() + " loss");
  }
  if (closed && method != ComputeMethod::quadrature) {
    if (loss.kind == LossKind::squared) return loss.scale * 2.0 * y;
    return loss.scale * (2.0 * err.cdf(y) - 1.0);
  }
  return lambda_quadrature(loss, err, y);
}

bool has_analytic_lambda_info(const LossSpec& loss, const ErrorDist& err) {
  double a = 0.0;
  double b = 0.0;
  return analytic_lambda_prime0(loss, err, a) && analytic_psi_sq(loss, err, b);
}

LambdaInfo lambda_info(const LossSpec& loss, const ErrorDist& err, ComputeMethod method) {
  LambdaInfo info{0.0, 0.0, ComputeMethod::analytic};
  const bool want_quad = method == ComputeMethod::quadrature;
  bool analytic_l = !want_quad && analytic_lambda_prime0(loss, err, info.lambda_prime0);
  bool analytic_p = !want_quad && analytic_psi_sq(loss, err, info.psi_sq_moment);
  if (method == ComputeMethod::analytic && !(analytic_l && analytic_p)) {
    throw NumericError("no closed form for lambda'(0) / E[psi^2] with the " + loss.name() + " loss and " +
                       err.describe() + " errors");
  }
  if (!analytic_l) {
    if (err.is_degenerate()) {
      throw NumericError("lambda'(0) is unbounded for the " + loss.name() + " loss under degenerate errors");
    }
    info.lambda_prime0 = lambda_prime0_quadrature(loss, err);
  }
  if (!analytic_p) {
    info.psi_sq_moment = psi_sq_quadrature(loss, err);
  }
  info.method = analytic_l && analytic_p ? ComputeMethod::analytic : ComputeMethod::quadrature;
  if (!(info.lambda_prime0 > 0.0)) {
    throw NumericError("lambda'(0) must be positive, got " + std::to_string(info.lambda_prime0));
  }
  return info;
}

double mean_jump(const LossSpec& loss, const ErrorDist& err, double d, ComputeMethod method) {
  if (err.is_degenerate()) return rho(loss, d) - rho(loss, 0.0);
  if (loss.kind == LossKind::squared && method != ComputeMethod::quadrature) {
    return loss.scale * d * d;
  }
  if (method == ComputeMethod::analytic && loss.kind != LossKind::squared) {
    throw NumericError("no closed form for the mean jump with the " + loss.name() + " loss");
  }
  auto breaks = kinks(loss, 0.0);
  const auto shifted = kinks(loss, d);
  breaks.insert(breaks.end(), shifted.begin(), shifted.end());
  return quadrature::integrate_real_line(
      [&](double u) { return (rho(loss, u + d) - rho(loss, u)) * err.pdf(u); }, breaks, half_width(err, d),
      "E[rho(eps + d) - rho(eps)]");
}

double jump_variable_sample(const LossSpec& loss, const ErrorDist& err, double d, int sign, Rng& rng) {
  if (d == 0.0 || !std::isfinite(d)) throw InvalidArgument("jump size d must be finite and nonzero");
  if (sign != 1 && sign != -1) throw InvalidArgument("jump side must be +1 or -1");
  const double eps = err.sample(rng);
  return rho(loss, eps + sign * d) - rho(loss, eps);
}

}  // namespace mphase
