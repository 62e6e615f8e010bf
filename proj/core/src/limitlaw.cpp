#include "mphase/limitlaw.hpp"

#include "mphase/error.hpp"
#include "mphase/parallel.hpp"
#include "mphase/stats.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mphase {

void LimitLawSpec::validate() const {
  if (!(rate > 0.0) || !std::isfinite(rate)) throw InvalidArgument("limit law rate must be positive");
  if (jump_d == 0.0 || !std::isfinite(jump_d)) throw InvalidArgument("limit law jump d must be finite and nonzero");
  if (!(extend_margin > 0.0 && extend_margin < 1.0)) throw InvalidArgument("extend_margin must lie in (0, 1)");
  if (horizon_cap < 0.0) throw InvalidArgument("horizon_cap must be non-negative");
  for (int side : {1, -1}) {
    const double m = mean_jump(loss, err, side * jump_d);
    if (!(m > 0.0)) {
      std::ostringstream os;
      os << "mean jump E[rho(eps " << (side > 0 ? "+" : "-") << " d) - rho(eps)] = " << m
         << " is not positive; the argmin would not be finite";
      throw InvalidArgument(os.str());
    }
  }
}

double LimitLawSpec::resolved_cap() const {
  return horizon_cap > 0.0 ? horizon_cap : 1e6 / rate;
}

double LimitLawSpec::initial_horizon() const {
  const double m = std::min(mean_jump(loss, err, jump_d), mean_jump(loss, err, -jump_d));
  return std::min(10.0 / (rate * std::min(1.0, m)), resolved_cap());
}

namespace {

void append_arrivals(const LimitLawSpec& spec, CompoundPath& path, double from, double to, Rng& rng) {
  const double mean = spec.rate * (to - from);
  const auto count = std::poisson_distribution<long long>(mean)(rng);
  std::uniform_real_distribution<double> unif(from, to);
  std::vector<double> times(static_cast<std::size_t>(count));
  for (double& t : times) t = unif(rng);
  std::sort(times.begin(), times.end());
  double running = path.cumulative.empty() ? 0.0 : path.cumulative.back();
  for (double t : times) {
    const double v = jump_variable_sample(spec.loss, spec.err, spec.jump_d, path.side, rng);
    running += v;
    path.jump_times.push_back(t);
    path.jump_values.push_back(v);
    path.cumulative.push_back(running);
  }
  path.horizon = to;
}

}  // namespace

CompoundPath sample_path(const LimitLawSpec& spec, int side, double horizon, Rng& rng) {
  if (!(horizon > 0.0)) throw InvalidArgument("path horizon must be positive");
  if (side != 1 && side != -1) throw InvalidArgument("path side must be +1 or -1");
  CompoundPath path;
  path.side = side;
  append_arrivals(spec, path, 0.0, horizon, rng);
  return path;
}

void extend_path(const LimitLawSpec& spec, CompoundPath& path, double new_horizon, Rng& rng) {
  if (!(new_horizon > path.horizon)) throw InvalidArgument("new horizon must exceed the current one");
  append_arrivals(spec, path, path.horizon, new_horizon, rng);
}

double evaluate_process(const CompoundPath& pos, const CompoundPath& neg, double t) {
  if (t >= 0.0) {
    const auto j = std::upper_bound(pos.jump_times.begin(), pos.jump_times.end(), t) - pos.jump_times.begin();
    return j == 0 ? 0.0 : pos.cumulative[static_cast<std::size_t>(j - 1)];
  }
  const auto j = std::lower_bound(neg.jump_times.begin(), neg.jump_times.end(), -t) - neg.jump_times.begin();
  return j == 0 ? 0.0 : neg.cumulative[static_cast<std::size_t>(j - 1)];
}

ArgminLocation locate_argmin(const CompoundPath& pos, const CompoundPath& neg, double margin) {
  if (pos.jump_times.empty() && neg.jump_times.empty()) {
    return {0.0, 0.0, true};
  }
  // Piece j on the negative side is [-s_{j+1}, -s_j) with value cum_j (cum_0 = 0,
  // s_0 = 0, s_{N+1} = horizon); on the positive side [t_j, t_{j+1}).
  auto neg_value = [&](std::size_t j) { return j == 0 ? 0.0 : neg.cumulative[j - 1]; };
  auto pos_value = [&](std::size_t j) { return j == 0 ? 0.0 : pos.cumulative[j - 1]; };
  const std::size_t nn = neg.jump_times.size();
  const std::size_t np = pos.jump_times.size();

  double minimum = 0.0;
  for (std::size_t j = 1; j <= nn; ++j) minimum = std::min(minimum, neg_value(j));
  for (std::size_t j = 1; j <= np; ++j) minimum = std::min(minimum, pos_value(j));

  // Leftmost piece attaining the minimum: scan the negative side outward-in.
  for (std::size_t j = nn + 1; j-- > 0;) {
    if (neg_value(j) == minimum) {
      const bool last = j == nn;
      const double loc = last ? -neg.horizon : -neg.jump_times[j];
      const bool near = -loc >= (1.0 - margin) * neg.horizon;
      return {loc, minimum, last || near};
    }
  }
  for (std::size_t j = 0; j <= np; ++j) {
    if (pos_value(j) == minimum) {
      const double loc = j == 0 ? 0.0 : pos.jump_times[j - 1];
      const bool last = j == np;
      const bool near = loc >= (1.0 - margin) * pos.horizon;
      return {loc, minimum, last || near};
    }
  }
  return {0.0, minimum, true};  // unreachable: the minimum is attained by construction
}

double smallest_argmin(const CompoundPath& pos, const CompoundPath& neg) {
  return locate_argmin(pos, neg).location;
}

namespace {

struct Draw {
  double value;
  bool censored;
  std::size_t jumps;
  double horizon;
};

Draw one_draw(const LimitLawSpec& spec, double h0, double cap, Rng& rng) {
  double h = h0;
  CompoundPath pos = sample_path(spec, 1, h, rng);
  CompoundPath neg = sample_path(spec, -1, h, rng);
  for (;;) {
    const ArgminLocation loc = locate_argmin(pos, neg, spec.extend_margin);
    if (!loc.boundary_active) return {loc.location, false, pos.jump_times.size() + neg.jump_times.size(), h};
    if (h >= cap) return {loc.location, true, pos.jump_times.size() + neg.jump_times.size(), h};
    const double next = std::min(2.0 * h, cap);
    extend_path(spec, pos, next, rng);
    extend_path(spec, neg, next, rng);
    h = next;
  }
}

}  // namespace

LimitSample sample_limit_distribution(const LimitLawSpec& spec, std::size_t n_samples, std::uint64_t seed,
                                      unsigned threads) {
  spec.validate();
  const double cap = spec.resolved_cap();
  const double h0 = spec.initial_horizon();
  std::vector<Draw> draws(n_samples);
  parallel_for(n_samples, threads, [&](std::size_t i) {
    Rng rng = make_rng(seed, i);
    draws[i] = one_draw(spec, h0, cap, rng);
  });
  LimitSample out;
  out.values.reserve(n_samples);
  double jumps = 0.0;
  double horizons = 0.0;
  for (const Draw& d : draws) {
    out.values.push_back(d.value);
    out.censored += d.censored ? 1 : 0;
    jumps += static_cast<double>(d.jumps);
    horizons += d.horizon;
  }
  if (n_samples > 0) {
    out.mean_jumps = jumps / static_cast<double>(n_samples);
    out.mean_horizon = horizons / static_cast<double>(n_samples);
  }
  return out;
}

LimitSample sample_limit_distribution(const LimitLawSpec& spec, std::size_t n_samples, Rng& rng) {
  return sample_limit_distribution(spec, n_samples, rng(), 1);
}

LimitLawSpec heuristic_limit_spec(const FitResult& fit, const Dataset& data, int k, const LossSpec& loss,
                                  const ErrorDist& err) {
  if (k < 1 || k > fit.model_hat.num_changepoints()) throw InvalidArgument("change-point index out of range");
  if (data.size() < 2) throw InvalidArgument("kernel density estimate needs at least two observations");
  const double tau = fit.model_hat.taus()[static_cast<std::size_t>(k - 1)];
  const auto& xs = data.xs();
  const double mean = stats::mean(xs);
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size() - 1);
  const double iqr = stats::quantile(xs, 0.75) - stats::quantile(xs, 0.25);
  const double spread = std::min(std::sqrt(var), iqr / 1.349);
  const double h = 0.9 * (spread > 0.0 ? spread : std::sqrt(var)) * std::pow(static_cast<double>(xs.size()), -0.2);
  if (!(h > 0.0)) throw NumericError("design points are degenerate; no kernel bandwidth");
  double dens = 0.0;
  for (double x : xs) dens += stats::normal_pdf((tau - x) / h);
  dens /= static_cast<double>(xs.size()) * h;

  LimitLawSpec spec;
  spec.rate = dens;
  spec.jump_d = jumps(fit.model_hat)[static_cast<std::size_t>(k - 1)].value;
  spec.loss = loss;
  spec.err = err;
  return spec;
}

}  // namespace mphase
