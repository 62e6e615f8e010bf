#include "mphase/estimator.hpp"

#include "mphase/error.hpp"
#include "mphase/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>

namespace mphase {

// ------------------------------------------------------------------ Dataset

Dataset::Dataset(std::vector<double> xs, std::vector<double> ys) : xs_(std::move(xs)), ys_(std::move(ys)) {
  if (xs_.size() != ys_.size()) {
    std::ostringstream os;
    os << "dataset has " << xs_.size() << " x values but " << ys_.size() << " y values";
    throw InvalidArgument(os.str());
  }
  for (std::size_t i = 0; i < xs_.size(); ++i) {
    if (!std::isfinite(xs_[i]) || !std::isfinite(ys_[i])) {
      throw InvalidArgument("dataset contains a non-finite value at row " + std::to_string(i));
    }
  }
  order_.resize(xs_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::stable_sort(order_.begin(), order_.end(), [this](std::size_t a, std::size_t b) { return xs_[a] < xs_[b]; });
  sx_.resize(xs_.size());
  sy_.resize(xs_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) {
    sx_[i] = xs_[order_[i]];
    sy_[i] = ys_[order_[i]];
  }
}

// ---------------------------------------------------------------- CostTable

CostTable::CostTable(std::size_t n) : n_(n), cells_(n * (n + 1) / 2, kInfeasible) {}

std::size_t CostTable::index(std::size_t first, std::size_t last) const {
  if (first > last || last >= n_) throw InvalidArgument("cost table index out of range");
  return first * n_ - (first * (first - 1)) / 2 + (last - first);
}

double CostTable::cost(std::size_t first, std::size_t last) const {
  return cells_[index(first, last)];
}

void CostTable::set(std::size_t first, std::size_t last, double value) {
  cells_[index(first, last)] = value;
}

namespace {

/// Segment admissibility over sorted x: enough points, and equal x values are
/// never split across a boundary.
class Admissibility {
 public:
  Admissibility(const std::vector<double>& sx, std::size_t min_seg) : sx_(sx), min_seg_(min_seg) {}

  bool operator()(std::size_t first, std::size_t last) const {
    if (last < first || last - first + 1 < min_seg_) return false;
    if (first > 0 && !(sx_[first - 1] < sx_[first])) return false;
    if (last + 1 < sx_.size() && !(sx_[last] < sx_[last + 1])) return false;
    return true;
  }

 private:
  const std::vector<double>& sx_;
  std::size_t min_seg_;
};

// O(1) squared-loss constant-segment costs from prefix sums of shifted y.
class SquaredConstantCosts final : public SegmentCosts {
 public:
  SquaredConstantCosts(const Dataset& data, const LossSpec& loss, Admissibility ok)
      : ok_(ok), scale_(loss.scale), s1_(data.size() + 1, 0.0), s2_(data.size() + 1, 0.0) {
    const auto& ys = data.sorted_ys();
    const double shift = ys.empty() ? 0.0 : std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
    for (std::size_t i = 0; i < ys.size(); ++i) {
      const double y = ys[i] - shift;
      s1_[i + 1] = s1_[i] + y;
      s2_[i + 1] = s2_[i] + y * y;
    }
  }

  std::size_t size() const override { return s1_.size() - 1; }

  double cost(std::size_t first, std::size_t last) const override {
    if (!ok_(first, last)) return kInfeasible;
    const auto m = static_cast<double>(last - first + 1);
    const double a = s1_[last + 1] - s1_[first];
    const double b = s2_[last + 1] - s2_[first];
    return scale_ * std::max(b - a * a / m, 0.0);
  }

 private:
  Admissibility ok_;
  double scale_;
  std::vector<double> s1_;
  std::vector<double> s2_;
};

// O(1) squared-loss linear-segment costs from centered prefix moments.
class SquaredLinearCosts final : public SegmentCosts {
 public:
  SquaredLinearCosts(const Dataset& data, const LossSpec& loss, Admissibility ok) : ok_(ok), scale_(loss.scale) {
    const auto& xs = data.sorted_xs();
    const auto& ys = data.sorted_ys();
    const std::size_t n = xs.size();
    const double mx = n ? std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(n) : 0.0;
    const double my = n ? std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(n) : 0.0;
    for (auto* v : {&sx_, &sy_, &sxx_, &sxy_, &syy_}) v->assign(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = xs[i] - mx;
      const double y = ys[i] - my;
      sx_[i + 1] = sx_[i] + x;
      sy_[i + 1] = sy_[i] + y;
      sxx_[i + 1] = sxx_[i] + x * x;
      sxy_[i + 1] = sxy_[i] + x * y;
      syy_[i + 1] = syy_[i] + y * y;
    }
  }

  std::size_t size() const override { return sx_.size() - 1; }

  double cost(std::size_t first, std::size_t last) const override {
    if (!ok_(first, last)) return kInfeasible;
    const auto m = static_cast<double>(last - first + 1);
    auto range = [&](const std::vector<double>& s) { return s[last + 1] - s[first]; };
    const double sx = range(sx_);
    const double sy = range(sy_);
    const double sxx = range(sxx_);
    const double cxx = sxx - sx * sx / m;
    const double cxy = range(sxy_) - sx * sy / m;
    const double cyy = range(syy_) - sy * sy / m;
    double c = cyy;
    if (cxx > 1e-13 * sxx && cxx > 0.0) c -= cxy * cxy / cxx;
    return scale_ * std::max(c, 0.0);
  }

 private:
  Admissibility ok_;
  double scale_;
  std::vector<double> sx_, sy_, sxx_, sxy_, syy_;
};

// Everything else: one fit_segment call per requested cell.
class GenericCosts final : public SegmentCosts {
 public:
  GenericCosts(const Dataset& data, const SegmentFamily& family, const LossSpec& loss, const FitOptions& opts,
               Admissibility ok)
      : data_(data), family_(family), loss_(loss), opts_(opts), ok_(ok) {}

  std::size_t size() const override { return data_.size(); }

  double cost(std::size_t first, std::size_t last) const override {
    if (!ok_(first, last)) return kInfeasible;
    const std::size_t len = last - first + 1;
    try {
      const double c = fit_segment(family_, std::span(data_.sorted_xs()).subspan(first, len),
                                   std::span(data_.sorted_ys()).subspan(first, len), loss_, opts_)
                           .objective;
      if (std::isfinite(c)) return c;
    } catch (const Error&) {
    }
    failures_.fetch_add(1, std::memory_order_relaxed);
    return kInfeasible;
  }

  std::size_t failures() const { return failures_.load(); }

 private:
  const Dataset& data_;
  const SegmentFamily& family_;
  const LossSpec& loss_;
  const FitOptions& opts_;
  Admissibility ok_;
  mutable std::atomic<std::size_t> failures_{0};
};

}  // namespace

CostTable segment_cost_table(const Dataset& data, const SegmentFamily& family, const LossSpec& loss,
                             const FitOptions& opts) {
  const std::size_t n = data.size();
  const auto min_seg = static_cast<std::size_t>(opts.resolved_min_seg(family));
  GenericCosts generic(data, family, loss, opts, Admissibility(data.sorted_xs(), min_seg));
  CostTable table(n);
  parallel_for(n, opts.threads, [&](std::size_t i) {
    for (std::size_t j = i; j < n; ++j) table.set(i, j, generic.cost(i, j));
  });
  table.failed_cells = generic.failures();
  return table;
}

std::vector<std::size_t> dp_partition(const SegmentCosts& cost, int K, std::size_t min_seg, unsigned threads) {
  if (K < 0) throw InvalidArgument("number of change-points must be non-negative");
  const std::size_t n = cost.size();
  min_seg = std::max<std::size_t>(min_seg, 1);
  const auto k_count = static_cast<std::size_t>(K);
  if (n == 0 || n < (k_count + 1) * min_seg) {
    std::ostringstream os;
    os << "cannot place " << K << " change-points among " << n << " observations with min_seg = " << min_seg;
    throw InfeasibleError(os.str());
  }
  if (K == 0) {
    if (!std::isfinite(cost.cost(0, n - 1))) throw InfeasibleError("single segment is not admissible");
    return {};
  }

  // best[k][i]: optimal cost of covering [i, n-1] with k + 1 segments;
  // next[k][i]: smallest last index of the first of those segments.
  std::vector<std::vector<double>> best(k_count, std::vector<double>(n, kInfeasible));
  std::vector<std::vector<std::size_t>> next(k_count + 1, std::vector<std::size_t>(n, n));

  auto relax = [&](std::size_t k, std::size_t i, double& out_value, std::size_t& out_next) {
    out_value = kInfeasible;
    out_next = n;
    const std::size_t j_lo = i + min_seg - 1;
    const std::size_t j_hi = n - 1 - k * min_seg;
    for (std::size_t j = j_lo; j <= j_hi; ++j) {
      const double head = cost.cost(i, j);
      if (!(head < kInfeasible)) continue;
      const double tail = best[k - 1][j + 1];
      const double v = head + tail;
      if (v < out_value) {
        out_value = v;
        out_next = j;
      }
    }
  };

  for (std::size_t k = 0; k < k_count; ++k) {
    const std::size_t i_lo = (k_count - k) * min_seg;
    const std::size_t i_hi = n - (k + 1) * min_seg;
    if (i_lo > i_hi) continue;
    parallel_for(i_hi - i_lo + 1, threads, [&](std::size_t off) {
      const std::size_t i = i_lo + off;
      if (k == 0) {
        const double c = cost.cost(i, n - 1);
        best[0][i] = std::isnan(c) ? kInfeasible : c;
      } else {
        relax(k, i, best[k][i], next[k][i]);
      }
    });
  }

  double total = kInfeasible;
  relax(k_count, 0, total, next[k_count][0]);
  if (!(total < kInfeasible)) {
    throw InfeasibleError("no admissible placement of " + std::to_string(K) + " change-points");
  }

  std::vector<std::size_t> bounds;
  bounds.reserve(k_count);
  std::size_t start = 0;
  for (std::size_t k = k_count; k >= 1; --k) {
    const std::size_t b = next[k][start];
    bounds.push_back(b);
    start = b + 1;
  }
  return bounds;
}

bool FitResult::converged() const {
  return std::all_of(per_segment.begin(), per_segment.end(), [](const SegmentSummary& s) { return s.converged; });
}

double m_objective(const PiecewiseModel& model, const Dataset& data, const LossSpec& loss) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    total += rho(loss, data.ys()[i] - eval_piecewise(model, data.xs()[i]));
  }
  return total;
}

namespace {

std::unique_ptr<SegmentCosts> make_costs(const Dataset& data, const SegmentFamily& family, const LossSpec& loss,
                                         const FitOptions& opts, std::size_t min_seg) {
  Admissibility ok(data.sorted_xs(), min_seg);
  if (loss.kind == LossKind::squared && family.kind() == FamilyKind::constant) {
    return std::make_unique<SquaredConstantCosts>(data, loss, ok);
  }
  if (loss.kind == LossKind::squared && family.kind() == FamilyKind::linear) {
    return std::make_unique<SquaredLinearCosts>(data, loss, ok);
  }
  return std::make_unique<GenericCosts>(data, family, loss, opts, ok);
}

}  // namespace

FitResult fit(const Dataset& data, const SegmentFamily& family, int K, const LossSpec& loss, const FitOptions& opts) {
  if (K < 0) throw InvalidArgument("number of change-points must be non-negative");
  const auto min_seg = static_cast<std::size_t>(opts.resolved_min_seg(family));
  const std::size_t n = data.size();
  if (n < (static_cast<std::size_t>(K) + 1) * min_seg) {
    std::ostringstream os;
    os << "n = " << n << " observations cannot hold " << K + 1 << " segments of at least " << min_seg
       << " points";
    throw InfeasibleError(os.str());
  }

  const auto costs = make_costs(data, family, loss, opts, min_seg);
  const std::vector<std::size_t> bounds = dp_partition(*costs, K, min_seg, opts.threads);
  std::size_t failed = 0;
  if (const auto* generic = dynamic_cast<const GenericCosts*>(costs.get())) failed = generic->failures();

  const auto& sx = data.sorted_xs();
  const auto& sy = data.sorted_ys();
  std::vector<SegmentSummary> segments;
  std::vector<Vector> alphas;
  std::vector<double> taus;
  double objective = 0.0;
  std::size_t first = 0;
  for (std::size_t k = 0; k <= bounds.size(); ++k) {
    const std::size_t last = k < bounds.size() ? bounds[k] : n - 1;
    const std::size_t len = last - first + 1;
    SegmentFit sf = fit_segment(family, std::span(sx).subspan(first, len), std::span(sy).subspan(first, len), loss, opts);
    objective += sf.objective;
    segments.push_back({first, last, sf.alpha, sf.objective, sf.converged});
    alphas.push_back(std::move(sf.alpha));
    if (k < bounds.size()) taus.push_back(sx[last]);
    first = last + 1;
  }
  return FitResult{PiecewiseModel(family, std::move(alphas), std::move(taus)), objective, bounds, std::move(segments),
                   failed};
}

double profile_objective(const Dataset& data, const SegmentFamily& family, const LossSpec& loss,
                         const FitOptions& opts, const std::vector<double>& taus) {
  for (std::size_t k = 1; k < taus.size(); ++k) {
    if (!(taus[k - 1] < taus[k])) throw InvalidArgument("change-points must be strictly increasing");
  }
  const auto min_seg = static_cast<std::size_t>(opts.resolved_min_seg(family));
  const auto& sx = data.sorted_xs();
  const auto& sy = data.sorted_ys();
  double total = 0.0;
  std::size_t first = 0;
  for (std::size_t k = 0; k <= taus.size(); ++k) {
    const std::size_t end = k < taus.size()
                                ? static_cast<std::size_t>(std::upper_bound(sx.begin(), sx.end(), taus[k]) - sx.begin())
                                : sx.size();
    const std::size_t len = end - first;
    if (len < min_seg) {
      std::ostringstream os;
      os << "segment " << k << " induced by the change-points holds " << len << " observations (< min_seg = "
         << min_seg << ")";
      throw InfeasibleError(os.str());
    }
    total += fit_segment(family, std::span(sx).subspan(first, len), std::span(sy).subspan(first, len), loss, opts)
                 .objective;
    first = end;
  }
  return total;
}

}  // namespace mphase
