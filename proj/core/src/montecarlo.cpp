#include "mphase/montecarlo.hpp"

#include "mphase/error.hpp"
#include "mphase/inference.hpp"
#include "mphase/parallel.hpp"
#include "mphase/quadrature.hpp"
#include "mphase/stats.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

namespace mphase {

XDist XDist::gaussian(double mu, double sigma) {
  if (!std::isfinite(mu) || !(sigma > 0.0) || !std::isfinite(sigma)) {
    throw InvalidArgument("gaussian design needs finite mu and sigma > 0");
  }
  return XDist(XKind::gaussian, mu, sigma);
}

XDist XDist::uniform(double a, double b) {
  if (!std::isfinite(a) || !std::isfinite(b) || !(a < b)) throw InvalidArgument("uniform design needs a < b");
  return XDist(XKind::uniform, a, b);
}

double XDist::pdf(double x) const {
  if (kind_ == XKind::gaussian) return stats::normal_pdf((x - p1_) / p2_) / p2_;
  return (x >= p1_ && x <= p2_) ? 1.0 / (p2_ - p1_) : 0.0;
}

double XDist::cdf(double x) const {
  if (kind_ == XKind::gaussian) return stats::normal_cdf((x - p1_) / p2_);
  return std::clamp((x - p1_) / (p2_ - p1_), 0.0, 1.0);
}

double XDist::sample(Rng& rng) const {
  if (kind_ == XKind::gaussian) return std::normal_distribution<double>(p1_, p2_)(rng);
  return std::uniform_real_distribution<double>(p1_, p2_)(rng);
}

double XDist::lower() const { return kind_ == XKind::gaussian ? p1_ - 12.0 * p2_ : p1_; }
double XDist::upper() const { return kind_ == XKind::gaussian ? p1_ + 12.0 * p2_ : p2_; }

std::string XDist::describe() const {
  std::ostringstream os;
  os << (kind_ == XKind::gaussian ? "gaussian(" : "uniform(") << p1_ << ", " << p2_ << ")";
  return os.str();
}

void SimDesign::validate() const {
  const ValidationReport report = validate_model(truth);
  for (const auto& v : report.violations) {
    if (v.kind == ValidationReport::Kind::identifiability) {
      throw IdentifiabilityError("identifiability violated: " + v.message);
    }
  }
  if (!report.ok()) throw InvalidArgument("invalid truth: " + report.violations.front().message);
  for (std::size_t k = 0; k < truth.taus().size(); ++k) {
    if (!(x_dist.pdf(truth.taus()[k]) > 0.0)) {
      std::ostringstream os;
      os << "design density is zero at tau_" << k + 1 << " = " << truth.taus()[k];
      throw InvalidArgument(os.str());
    }
  }
}

Dataset generate_dataset(const SimDesign& design, Rng& rng) {
  design.validate();
  std::vector<double> xs(design.n);
  std::vector<double> ys(design.n);
  for (double& x : xs) x = design.x_dist.sample(rng);
  for (std::size_t i = 0; i < design.n; ++i) ys[i] = eval_piecewise(design.truth, xs[i]) + design.err.sample(rng);
  return Dataset(std::move(xs), std::move(ys));
}

Dataset generate_dataset(const SimDesign& design) {
  Rng rng = make_rng(design.seed);
  return generate_dataset(design, rng);
}

Matrix population_V0(const PiecewiseModel& truth, const XDist& x_dist) {
  const int d = truth.param_dim();
  const int segs = truth.num_segments();
  Matrix V0 = Matrix::Zero(segs * d, segs * d);
  for (int k = 0; k < segs; ++k) {
    double lo = k == 0 ? x_dist.lower() : truth.taus()[static_cast<std::size_t>(k - 1)];
    double hi = k == segs - 1 ? x_dist.upper() : truth.taus()[static_cast<std::size_t>(k)];
    lo = std::max(lo, x_dist.lower());
    hi = std::min(hi, x_dist.upper());
    if (!(lo < hi)) continue;
    const Vector& alpha = truth.alphas()[static_cast<std::size_t>(k)];
    for (int a = 0; a < d; ++a) {
      for (int b = a; b < d; ++b) {
        const double v = quadrature::integrate(
            [&](double x) {
              const Vector g = truth.family().grad(alpha, x);
              return g[a] * g[b] * x_dist.pdf(x);
            },
            lo, hi, "population V0 entry");
        V0(k * d + a, k * d + b) = v;
        V0(k * d + b, k * d + a) = v;
      }
    }
  }
  return V0;
}

Matrix theoretical_covariance(const SimDesign& design, const LossSpec& loss) {
  const Matrix V0 = population_V0(design.truth, design.x_dist);
  const LambdaInfo li = lambda_info(loss, design.err);
  const Matrix inv = V0.ldlt().solve(Matrix::Identity(V0.rows(), V0.cols()));
  return (li.psi_sq_moment / (li.lambda_prime0 * li.lambda_prime0)) * 0.5 * (inv + inv.transpose());
}

namespace {

SimDesign with_n(const SimDesign& design, std::size_t n) {
  SimDesign d = design;
  d.n = n;
  return d;
}

FitOptions serial(const ExperimentOptions& opts) {
  FitOptions f = opts.fit;
  f.threads = 1;
  return f;
}

/// Runs fn(rep) for every replication; std::nullopt marks a failed fit.
template <typename T, typename Fn>
std::vector<std::optional<T>> replicate(int reps, unsigned threads, Fn&& fn) {
  std::vector<std::optional<T>> out(static_cast<std::size_t>(reps));
  parallel_for(out.size(), threads, [&](std::size_t r) {
    try {
      out[r] = fn(r);
    } catch (const Error&) {
      out[r] = std::nullopt;
    }
  });
  return out;
}

void check_budget(int failures, int attempts, double budget, const char* what) {
  if (static_cast<double>(failures) > budget * static_cast<double>(attempts)) {
    std::ostringstream os;
    os << what << ": " << failures << " of " << attempts << " replications failed (budget "
       << budget * 100.0 << "%)";
    throw FailureBudgetError(os.str(), failures, attempts);
  }
}

void check_family(const SimDesign& design, const SegmentFamily& family) {
  if (family.param_dim() != design.truth.param_dim()) {
    throw InvalidArgument("fitted family dimension differs from the truth's");
  }
}

}  // namespace

RateReport run_rate_experiment(const SimDesign& design, const std::vector<std::size_t>& n_grid, int reps,
                               const SegmentFamily& family, const LossSpec& loss, const ExperimentOptions& opts) {
  if (reps < 100) throw InvalidArgument("rate experiments need reps >= 100");
  if (n_grid.size() < 2) throw InvalidArgument("n_grid needs at least two sizes");
  for (std::size_t i = 1; i < n_grid.size(); ++i) {
    if (!(n_grid[i - 1] < n_grid[i])) throw InvalidArgument("n_grid must be strictly increasing");
  }
  if (n_grid.front() == 0 || n_grid.back() < 4 * n_grid.front()) {
    throw InvalidArgument("n_grid must span at least a factor of 4");
  }
  design.validate();
  check_family(design, family);
  const int K = design.truth.num_changepoints();
  const Vector theta0 = design.truth.stacked_alphas();
  const FitOptions fopts = serial(opts);

  struct Errors {
    std::vector<double> tau;
    double alpha;
  };

  RateReport report;
  report.n_grid = n_grid;
  report.reps = reps;
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    const SimDesign dn = with_n(design, n_grid[i]);
    auto results = replicate<Errors>(reps, opts.threads, [&](std::size_t r) {
      Rng rng = make_rng(design.seed, i, r);
      const Dataset data = generate_dataset(dn, rng);
      const FitResult f = fit(data, family, K, loss, fopts);
      Errors e;
      for (int k = 0; k < K; ++k) e.tau.push_back(std::abs(f.model_hat.taus()[k] - design.truth.taus()[k]));
      e.alpha = (f.model_hat.stacked_alphas() - theta0).norm();
      return e;
    });
    std::vector<std::vector<double>> tau_errs(static_cast<std::size_t>(K));
    std::vector<double> alpha_errs;
    for (const auto& res : results) {
      ++report.attempts;
      if (!res) {
        ++report.failures;
        continue;
      }
      for (int k = 0; k < K; ++k) tau_errs[k].push_back(res->tau[k]);
      alpha_errs.push_back(res->alpha);
    }
    if (alpha_errs.empty()) throw FailureBudgetError("every replication failed", report.failures, report.attempts);
    std::vector<double> med(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) med[k] = stats::median(tau_errs[k]);
    report.medians_tau.push_back(std::move(med));
    report.medians_alpha.push_back(stats::median(alpha_errs));
  }
  check_budget(report.failures, report.attempts, opts.failure_budget, "rate experiment");

  std::vector<double> logn;
  for (std::size_t n : n_grid) logn.push_back(std::log(static_cast<double>(n)));
  auto slope = [&](const std::vector<double>& med) {
    std::vector<double> logm;
    for (double m : med) {
      if (!(m > 0.0)) throw NumericError("median error is zero; log-log slope undefined");
      logm.push_back(std::log(m));
    }
    return stats::ols_line(logn, logm).slope;
  };
  for (int k = 0; k < K; ++k) {
    std::vector<double> med;
    for (const auto& row : report.medians_tau) med.push_back(row[k]);
    report.slopes_tau.push_back(slope(med));
  }
  if (K > 0) report.slope_tau = stats::mean(report.slopes_tau);
  report.slope_alpha = slope(report.medians_alpha);
  return report;
}

NormalityReport run_normality_experiment(const SimDesign& design, int reps, const SegmentFamily& family,
                                         const LossSpec& loss, const ExperimentOptions& opts) {
  if (reps < 300) throw InvalidArgument("normality experiments need reps >= 300");
  if (design.n == 0) throw InvalidArgument("design sample size must be positive");
  design.validate();
  check_family(design, family);
  const int K = design.truth.num_changepoints();
  const Vector theta0 = design.truth.stacked_alphas();
  const FitOptions fopts = serial(opts);
  const double root_n = std::sqrt(static_cast<double>(design.n));

  auto results = replicate<Vector>(reps, opts.threads, [&](std::size_t r) {
    Rng rng = make_rng(design.seed, 0, r);
    const Dataset data = generate_dataset(design, rng);
    const FitResult f = fit(data, family, K, loss, fopts);
    return Vector(root_n * (f.model_hat.stacked_alphas() - theta0));
  });

  NormalityReport report;
  report.n = design.n;
  report.reps = reps;
  std::vector<Vector> z;
  for (const auto& res : results) {
    ++report.attempts;
    if (res) {
      z.push_back(*res);
    } else {
      ++report.failures;
    }
  }
  check_budget(report.failures, report.attempts, opts.failure_budget, "normality experiment");
  if (z.size() < 2) throw NumericError("too few successful replications for a covariance");

  const auto p = theta0.size();
  Vector mean = Vector::Zero(p);
  for (const Vector& v : z) mean += v;
  mean /= static_cast<double>(z.size());
  Matrix cov = Matrix::Zero(p, p);
  for (const Vector& v : z) cov.noalias() += (v - mean) * (v - mean).transpose();
  cov /= static_cast<double>(z.size() - 1);

  report.empirical_cov = cov;
  report.theoretical_cov = theoretical_covariance(design, loss);
  report.rel_frobenius = (cov - report.theoretical_cov).norm() / report.theoretical_cov.norm();
  for (Eigen::Index j = 0; j < p; ++j) {
    std::vector<double> col;
    col.reserve(z.size());
    for (const Vector& v : z) col.push_back(v[j]);
    report.skewness.push_back(stats::skewness(col));
    report.kurtosis.push_back(stats::kurtosis(col));
  }
  return report;
}

LimitLawSpec true_limit_spec(const SimDesign& design, int k, const LossSpec& loss) {
  if (k < 1 || k > design.truth.num_changepoints()) throw InvalidArgument("change-point index out of range");
  LimitLawSpec spec;
  spec.rate = design.x_dist.pdf(design.truth.taus()[static_cast<std::size_t>(k - 1)]);
  spec.jump_d = jumps(design.truth)[static_cast<std::size_t>(k - 1)].value;
  spec.loss = loss;
  spec.err = design.err;
  return spec;
}

namespace {

bool close_rel(double a, double b) { return std::abs(a - b) <= 1e-6 * std::max(std::abs(a), std::abs(b)); }

}  // namespace

LimitLawReport run_limitlaw_experiment(const SimDesign& design, int reps, const LimitLawSpec& spec,
                                       std::size_t n_samples, const SegmentFamily& family, const LossSpec& loss,
                                       const ExperimentOptions& opts, int k) {
  if (reps < 1) throw InvalidArgument("reps must be positive");
  if (n_samples < 1) throw InvalidArgument("n_samples must be positive");
  if (design.n == 0) throw InvalidArgument("design sample size must be positive");
  design.validate();
  check_family(design, family);
  const LimitLawSpec truth_spec = true_limit_spec(design, k, loss);
  if (!close_rel(spec.rate, truth_spec.rate)) {
    std::ostringstream os;
    os << "spec rate " << spec.rate << " differs from the design density at tau0 (" << truth_spec.rate << ")";
    throw InvalidArgument(os.str());
  }
  if (!close_rel(spec.jump_d, truth_spec.jump_d)) {
    std::ostringstream os;
    os << "spec jump_d " << spec.jump_d << " differs from the true jump (" << truth_spec.jump_d << ")";
    throw InvalidArgument(os.str());
  }
  spec.validate();

  const int K = design.truth.num_changepoints();
  const double tau0 = design.truth.taus()[static_cast<std::size_t>(k - 1)];
  const double n = static_cast<double>(design.n);
  const FitOptions fopts = serial(opts);

  auto results = replicate<double>(reps, opts.threads, [&](std::size_t r) {
    Rng rng = make_rng(design.seed, 0, r);
    const Dataset data = generate_dataset(design, rng);
    const FitResult f = fit(data, family, K, loss, fopts);
    return n * (f.model_hat.taus()[static_cast<std::size_t>(k - 1)] - tau0);
  });

  LimitLawReport report;
  report.n = design.n;
  report.reps = reps;
  report.k = k;
  for (const auto& res : results) {
    ++report.attempts;
    if (res) {
      report.scaled_errors.push_back(*res);
    } else {
      ++report.failures;
    }
  }
  check_budget(report.failures, report.attempts, opts.failure_budget, "limit-law experiment");
  if (report.scaled_errors.empty()) throw NumericError("no successful replications");

  const LimitSample ls = sample_limit_distribution(spec, n_samples, stream_seed(design.seed, 1, 0), opts.threads);
  report.limit_samples = ls.values;
  report.censored = ls.censored;
  report.ks_distance = stats::ks_two_sample(report.scaled_errors, report.limit_samples);
  report.probs = kQuantileLevels;
  report.quantiles_estimator = stats::quantiles(report.scaled_errors, kQuantileLevels);
  report.quantiles_limit = stats::quantiles(report.limit_samples, kQuantileLevels);
  return report;
}

std::size_t near_changepoint_count(const Dataset& data, double tau0, double B) {
  if (!(B > 0.0)) throw InvalidArgument("window constant B must be positive");
  if (data.empty()) return 0;
  const double w = B / static_cast<double>(data.size());
  return static_cast<std::size_t>(
      std::count_if(data.xs().begin(), data.xs().end(), [&](double x) { return std::abs(x - tau0) <= w; }));
}

double ratio_Gn_over_G(const Dataset& data, const std::vector<double>& tau0s, const std::vector<double>& us,
                       const XDist& x_dist) {
  if (tau0s.size() != us.size()) throw InvalidArgument("tau0 and u must have the same length");
  if (data.empty()) throw InvalidArgument("ratio needs at least one observation");
  double g = 0.0;
  double gn = 0.0;
  for (std::size_t k = 0; k < tau0s.size(); ++k) {
    if (us[k] == 0.0) throw InvalidArgument("every u_k must be nonzero");
    const double lo = std::min(tau0s[k], tau0s[k] + us[k]);
    const double hi = std::max(tau0s[k], tau0s[k] + us[k]);
    g += x_dist.cdf(hi) - x_dist.cdf(lo);
    const auto inside = std::count_if(data.xs().begin(), data.xs().end(), [&](double x) { return x > lo && x <= hi; });
    gn += static_cast<double>(inside) / static_cast<double>(data.size());
  }
  if (!(g > 0.0)) throw InvalidArgument("intervals carry zero expected mass under the design");
  return gn / g;
}

QuadraticCheckReport quadratic_approximation_check(const FitResult& fit, const Dataset& data, const LossSpec& loss,
                                                   double lambda_prime0, const std::vector<double>& radii) {
  if (data.empty()) throw InvalidArgument("check needs data");
  const V0Estimate v0 = estimate_V0(fit, data);
  const Vector theta1 = fit.model_hat.stacked_alphas();
  const auto p = theta1.size();
  const double root_n = std::sqrt(static_cast<double>(data.size()));
  const double base = m_objective(fit.model_hat, data, loss);

  std::vector<Vector> dirs;
  for (Eigen::Index j = 0; j < p; ++j) dirs.push_back(Vector::Unit(p, j));
  dirs.push_back(Vector::Ones(p).normalized());
  if (p > 1) {
    Vector alt(p);
    for (Eigen::Index j = 0; j < p; ++j) alt[j] = (j % 2 == 0) ? 1.0 : -1.0;
    dirs.push_back(alt.normalized());
  }

  QuadraticCheckReport report;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    for (double r : radii) {
      const Vector w = r * dirs[i];
      const PiecewiseModel moved = fit.model_hat.with_stacked_alphas(theta1 + w / root_n);
      const double actual = m_objective(moved, data, loss) - base;
      const double quad = 0.5 * lambda_prime0 * w.dot(v0.V0 * w);
      const double rel = std::abs(actual - quad) / std::max(std::abs(quad), 1e-300);
      report.entries.push_back({static_cast<int>(i), r, actual, quad, rel});
      report.max_rel_error = std::max(report.max_rel_error, rel);
    }
  }
  return report;
}

}  // namespace mphase
