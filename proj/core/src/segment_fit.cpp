#include "mphase/error.hpp"
#include "mphase/estimator.hpp"
#include "mphase/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mphase {

int FitOptions::resolved_min_seg(const SegmentFamily& family) const {
  if (multistart < 1) throw InvalidArgument("multistart must be >= 1");
  if (max_iter < 1) throw InvalidArgument("max_iter must be >= 1");
  if (!(grad_tol > 0.0)) throw InvalidArgument("grad_tol must be positive");
  if (!(step_shrink > 0.0 && step_shrink < 1.0)) throw InvalidArgument("step_shrink must lie in (0, 1)");
  const int d = family.param_dim();
  if (min_seg == 0) return std::max(d + 1, 3);
  if (min_seg < d + 1) {
    std::ostringstream os;
    os << "min_seg = " << min_seg << " is below param_dim + 1 = " << d + 1 << " for the " << family.name()
       << " family";
    throw InvalidArgument(os.str());
  }
  return min_seg;
}

namespace {

double slice_objective(const SegmentFamily& family, const Vector& alpha, std::span<const double> xs,
                       std::span<const double> ys, const LossSpec& loss) {
  double total = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    total += rho(loss, ys[i] - family.eval(alpha, xs[i]));
  }
  return std::isfinite(total) ? total : kInfeasible;
}

SegmentFit squared_constant(std::span<const double> ys, const LossSpec& loss) {
  const double m = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
  Vector a(1);
  a[0] = m;
  double obj = 0.0;
  for (double y : ys) obj += rho(loss, y - m);
  return {a, obj, true};
}

// Least squares on centered abscissae; a flat slice falls back to the mean.
Vector least_squares_line(std::span<const double> xs, std::span<const double> ys) {
  const auto m = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / m;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / m;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  Vector a(2);
  a[1] = sxx > 0.0 ? sxy / sxx : 0.0;
  a[0] = my - a[1] * mx;
  return a;
}

SegmentFit squared_linear(std::span<const double> xs, std::span<const double> ys, const LossSpec& loss) {
  Vector a = least_squares_line(xs, ys);
  double obj = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) obj += rho(loss, ys[i] - (a[0] + a[1] * xs[i]));
  return {a, obj, true};
}

SegmentFit absolute_constant(std::span<const double> ys, const LossSpec& loss) {
  std::vector<double> tmp(ys.begin(), ys.end());
  const auto mid = tmp.begin() + static_cast<std::ptrdiff_t>((tmp.size() - 1) / 2);
  std::nth_element(tmp.begin(), mid, tmp.end());
  Vector a(1);
  a[0] = *mid;
  double obj = 0.0;
  for (double y : ys) obj += rho(loss, y - a[0]);
  return {a, obj, true};
}

double median_of(std::span<const double> v) {
  std::vector<double> tmp(v.begin(), v.end());
  const auto mid = tmp.begin() + static_cast<std::ptrdiff_t>((tmp.size() - 1) / 2);
  std::nth_element(tmp.begin(), mid, tmp.end());
  return *mid;
}

Vector initial_guess(const SegmentFamily& family, std::span<const double> xs, std::span<const double> ys) {
  const int d = family.param_dim();
  switch (family.kind()) {
    case FamilyKind::constant: {
      Vector a(1);
      a[0] = median_of(ys);
      return a;
    }
    case FamilyKind::linear:
      return least_squares_line(xs, ys);
    case FamilyKind::exponential: {
      const bool pos = std::all_of(ys.begin(), ys.end(), [](double y) { return y > 0.0; });
      const bool neg = std::all_of(ys.begin(), ys.end(), [](double y) { return y < 0.0; });
      Vector a(2);
      if (pos || neg) {
        std::vector<double> logs(ys.size());
        std::transform(ys.begin(), ys.end(), logs.begin(), [](double y) { return std::log(std::abs(y)); });
        const Vector line = least_squares_line(xs, logs);
        a[0] = (pos ? 1.0 : -1.0) * std::exp(line[0]);
        a[1] = line[1];
      } else {
        a[0] = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
        a[1] = 0.0;
      }
      return a;
    }
    case FamilyKind::logistic: {
      // Plateau from the quarter of the slice with the largest |mean|.
      std::vector<std::size_t> idx(xs.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return xs[i] < xs[j]; });
      const std::size_t q = std::max<std::size_t>(1, idx.size() / 4);
      double lo = 0.0;
      double hi = 0.0;
      for (std::size_t i = 0; i < q; ++i) {
        lo += ys[idx[i]];
        hi += ys[idx[idx.size() - 1 - i]];
      }
      lo /= static_cast<double>(q);
      hi /= static_cast<double>(q);
      const double range = std::max(xs[idx.back()] - xs[idx.front()], 1e-12);
      Vector a(3);
      const bool rising = std::abs(hi) >= std::abs(lo);
      a[0] = rising ? hi : lo;
      a[1] = (rising ? 4.0 : -4.0) / range;
      a[2] = xs[idx[idx.size() / 2]];
      return a;
    }
    case FamilyKind::custom:
      return Vector::Constant(d, 0.5);
  }
  return Vector::Zero(d);
}

double irls_weight(const LossSpec& loss, double r, double floor) {
  switch (loss.kind) {
    case LossKind::squared:
      return 2.0 * loss.scale;
    case LossKind::absolute:
      return loss.scale / std::max(std::abs(r), floor);
    case LossKind::huber:
      return loss.scale * (std::abs(r) <= loss.delta ? 1.0 : loss.delta / std::abs(r));
  }
  return 1.0;
}

// Iteratively reweighted Gauss-Newton with backtracking on the exact objective.
SegmentFit gauss_newton(const SegmentFamily& family, Vector alpha, std::span<const double> xs,
                        std::span<const double> ys, const LossSpec& loss, const FitOptions& opts,
                        double floor) {
  const int d = family.param_dim();
  const auto m = static_cast<Eigen::Index>(xs.size());
  double obj = slice_objective(family, alpha, xs, ys, loss);
  if (!std::isfinite(obj)) return {alpha, kInfeasible, false};

  Matrix J(m, d);
  Vector w(m);
  Vector score(m);
  for (int it = 0; it < opts.max_iter; ++it) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const double r = ys[i] - family.eval(alpha, xs[i]);
      J.row(i) = family.grad(alpha, xs[i]).transpose();
      w[i] = irls_weight(loss, r, floor);
      score[i] = psi(loss, r);
    }
    const Vector g = J.transpose() * score;
    if (g.lpNorm<Eigen::Infinity>() <= opts.grad_tol * std::max(1.0, std::abs(obj))) return {alpha, obj, true};
    Matrix H = J.transpose() * w.asDiagonal() * J;
    const double mu = 1e-12 * std::max(H.diagonal().maxCoeff(), 1e-300);
    H.diagonal().array() += mu;
    Vector step = H.ldlt().solve(g);
    if (!step.allFinite()) step = g / std::max(H.diagonal().maxCoeff(), 1e-300);

    double t = 1.0;
    bool improved = false;
    Vector candidate;
    double cand_obj = obj;
    for (int ls = 0; ls < 60; ++ls) {
      candidate = alpha + t * step;
      cand_obj = slice_objective(family, candidate, xs, ys, loss);
      if (cand_obj < obj) {
        improved = true;
        break;
      }
      t *= opts.step_shrink;
    }
    if (!improved) return {alpha, obj, true};

    const double decrease = obj - cand_obj;
    const double moved = (t * step).norm();
    alpha = candidate;
    obj = cand_obj;
    if (decrease <= 1e-14 * std::abs(obj) || moved <= 1e-14 * (1.0 + alpha.norm()) || obj == 0.0) {
      return {alpha, obj, true};
    }
  }
  return {alpha, obj, false};
}

Vector perturb(const Vector& alpha, Rng& rng) {
  std::uniform_real_distribution<double> log_factor(-std::log(4.0), std::log(4.0));
  std::uniform_real_distribution<double> log_small(std::log(0.01), 0.0);
  std::bernoulli_distribution coin(0.5);
  Vector out = alpha;
  for (Eigen::Index j = 0; j < out.size(); ++j) {
    if (std::abs(out[j]) < 1e-8) {
      out[j] = (coin(rng) ? 1.0 : -1.0) * std::exp(log_small(rng));
    } else {
      out[j] *= std::exp(log_factor(rng));
    }
  }
  return out;
}

}  // namespace

SegmentFit fit_segment(const SegmentFamily& family, std::span<const double> xs, std::span<const double> ys,
                       const LossSpec& loss, const FitOptions& opts) {
  if (xs.size() != ys.size()) throw InvalidArgument("segment slice has mismatched x and y lengths");
  const int min_seg = opts.resolved_min_seg(family);
  if (xs.size() < static_cast<std::size_t>(min_seg)) {
    std::ostringstream os;
    os << "segment has " << xs.size() << " observations, fewer than min_seg = " << min_seg;
    throw InfeasibleError(os.str());
  }

  if (loss.kind == LossKind::squared && family.kind() == FamilyKind::constant) return squared_constant(ys, loss);
  if (loss.kind == LossKind::squared && family.kind() == FamilyKind::linear) return squared_linear(xs, ys, loss);
  if (loss.kind == LossKind::absolute && family.kind() == FamilyKind::constant) return absolute_constant(ys, loss);

  double yscale = 0.0;
  for (double y : ys) yscale = std::max(yscale, std::abs(y));
  const double floor = 1e-9 * (1.0 + yscale);

  const Vector start = initial_guess(family, xs, ys);
  SegmentFit best = gauss_newton(family, start, xs, ys, loss, opts, floor);
  Rng rng = make_rng(opts.seed, xs.size());
  for (int s = 1; s < opts.multistart; ++s) {
    SegmentFit cand = gauss_newton(family, perturb(start, rng), xs, ys, loss, opts, floor);
    if (cand.objective < best.objective) best = std::move(cand);
  }
  if (!std::isfinite(best.objective)) {
    throw NumericError("every multistart run of the " + family.name() + " segment fit diverged");
  }
  return best;
}

}  // namespace mphase
