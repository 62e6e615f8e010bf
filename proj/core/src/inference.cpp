#include "mphase/inference.hpp"

#include "mphase/error.hpp"
#include "mphase/stats.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

namespace mphase {

namespace {

double condition_number(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

}  // namespace

V0Estimate estimate_V0(const FitResult& fit, const Dataset& data) {
  const PiecewiseModel& model = fit.model_hat;
  const int d = model.param_dim();
  const int p = d * model.num_segments();
  V0Estimate out{Matrix::Zero(p, p), {}};
  if (data.empty()) throw InvalidArgument("V0 estimate needs at least one observation");
  for (double x : data.xs()) {
    const int k = model.segment_of(x);
    const Vector g = model.family().grad(model.alphas()[k], x);
    out.V0.block(k * d, k * d, d, d).noalias() += g * g.transpose();
  }
  out.V0 /= static_cast<double>(data.size());
  for (int k = 0; k < model.num_segments(); ++k) {
    if (condition_number(out.V0.block(k * d, k * d, d, d)) > kMaxConditionNumber) {
      out.singular_blocks.push_back(k);
    }
  }
  return out;
}

double default_bandwidth(std::span<const double> residuals) {
  const double s = stats::mad_scale(residuals);
  return 1.06 * s * std::pow(static_cast<double>(residuals.size()), -0.2);
}

double estimate_lambda_prime0_residual(std::span<const double> residuals, const LossSpec& loss, double bandwidth) {
  if (residuals.size() < 30) throw InvalidArgument("residual-based lambda'(0) needs at least 30 residuals");
  if (bandwidth <= 0.0) bandwidth = default_bandwidth(residuals);
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
    throw NumericError("residuals are degenerate: robust scale is zero, no bandwidth for lambda'(0)");
  }
  double up = 0.0;
  double down = 0.0;
  for (double r : residuals) {
    up += psi(loss, r + bandwidth);
    down += psi(loss, r - bandwidth);
  }
  const auto n = static_cast<double>(residuals.size());
  return (up - down) / (n * 2.0 * bandwidth);
}

std::vector<double> residuals(const FitResult& fit, const Dataset& data) {
  std::vector<double> r(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) r[i] = data.ys()[i] - eval_piecewise(fit.model_hat, data.xs()[i]);
  return r;
}

AsymptoticInfo asymptotic_covariance(const FitResult& fit, const Dataset& data, const LossSpec& loss,
                                     const std::optional<ErrorDist>& err) {
  V0Estimate v0 = estimate_V0(fit, data);
  const double cond = condition_number(v0.V0);
  if (cond > kMaxConditionNumber) {
    std::ostringstream os;
    os << "V0_hat is ill-conditioned (condition number " << cond << ")";
    if (!v0.singular_blocks.empty()) {
      os << "; offending segment blocks:";
      for (int k : v0.singular_blocks) os << ' ' << k;
    }
    throw NumericError(os.str());
  }

  AsymptoticInfo info;
  info.n = data.size();
  if (err) {
    const LambdaInfo li = lambda_info(loss, *err);
    info.lambda_prime0_hat = li.lambda_prime0;
    info.psi_sq_hat = li.psi_sq_moment;
    info.source = InfoSource::known_error_dist;
  } else {
    const std::vector<double> r = residuals(fit, data);
    info.lambda_prime0_hat = estimate_lambda_prime0_residual(r, loss);
    double s = 0.0;
    for (double e : r) s += psi(loss, e) * psi(loss, e);
    info.psi_sq_hat = s / static_cast<double>(r.size());
    info.source = InfoSource::residual_based;
    if (!(info.lambda_prime0_hat > 0.0)) {
      throw NumericError("residual-based lambda'(0) is not positive");
    }
  }

  // V0_hat is block diagonal, so the inverse is assembled block by block.
  const int d = fit.model_hat.param_dim();
  const int p = static_cast<int>(v0.V0.rows());
  Matrix inv = Matrix::Zero(p, p);
  for (int k = 0; k * d < p; ++k) {
    const Matrix block = v0.V0.block(k * d, k * d, d, d);
    inv.block(k * d, k * d, d, d) = block.ldlt().solve(Matrix::Identity(d, d));
  }
  inv = 0.5 * (inv + inv.transpose());
  const double factor = info.psi_sq_hat / (info.lambda_prime0_hat * info.lambda_prime0_hat) / static_cast<double>(info.n);
  info.V0_hat = std::move(v0.V0);
  info.cov_theta1 = factor * inv;
  return info;
}

std::vector<ConfidenceInterval> confidence_intervals(const AsymptoticInfo& info, const FitResult& fit, double level) {
  if (!(level >= 0.0 && level < 1.0)) throw InvalidArgument("confidence level must lie in [0, 1)");
  const double z = stats::normal_quantile(0.5 * (1.0 + level));
  const Vector theta1 = fit.model_hat.stacked_alphas();
  const int d = fit.model_hat.param_dim();
  if (info.cov_theta1.rows() != theta1.size()) throw InvalidArgument("covariance does not match the fit");
  std::vector<ConfidenceInterval> out;
  out.reserve(static_cast<std::size_t>(theta1.size()));
  for (Eigen::Index i = 0; i < theta1.size(); ++i) {
    const double hw = z * std::sqrt(std::max(info.cov_theta1(i, i), 0.0));
    out.push_back({static_cast<int>(i / d), static_cast<int>(i % d), theta1[i], hw, theta1[i] - hw, theta1[i] + hw});
  }
  return out;
}

}  // namespace mphase
