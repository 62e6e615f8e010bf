#include "mphase/stats.hpp"

#include "mphase/error.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mphase::stats {

namespace {

std::vector<double> sorted_copy(std::span<const double> v) {
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  return s;
}

double sorted_quantile(const std::vector<double>& s, double p) {
  if (s.empty()) throw InvalidArgument("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("quantile level must lie in [0, 1]");
  const double h = p * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

}  // namespace

double mean(std::span<const double> v) {
  if (v.empty()) throw InvalidArgument("mean of an empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median(std::span<const double> v) {
  return quantile(v, 0.5);
}

double quantile(std::span<const double> v, double p) {
  return sorted_quantile(sorted_copy(v), p);
}

std::vector<double> quantiles(std::span<const double> v, std::span<const double> ps) {
  const auto s = sorted_copy(v);
  std::vector<double> out;
  out.reserve(ps.size());
  for (double p : ps) out.push_back(sorted_quantile(s, p));
  return out;
}

double mad_scale(std::span<const double> v) {
  const double med = median(v);
  std::vector<double> dev(v.size());
  std::transform(v.begin(), v.end(), dev.begin(), [med](double x) { return std::abs(x - med); });
  return 1.4826 * median(dev);
}

namespace {

// Central moments m2, m_p of a sample.
std::pair<double, double> central_moments(std::span<const double> v, int p) {
  const double m = mean(v);
  double m2 = 0.0;
  double mp = 0.0;
  for (double x : v) {
    const double d = x - m;
    m2 += d * d;
    mp += std::pow(d, p);
  }
  const auto n = static_cast<double>(v.size());
  return {m2 / n, mp / n};
}

}  // namespace

double skewness(std::span<const double> v) {
  const auto [m2, m3] = central_moments(v, 3);
  return m3 / std::pow(m2, 1.5);
}

double kurtosis(std::span<const double> v) {
  const auto [m2, m4] = central_moments(v, 4);
  return m4 / (m2 * m2);
}

double ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw InvalidArgument("KS statistic needs two non-empty samples");
  const auto sa = sorted_copy(a);
  const auto sb = sorted_copy(b);
  const auto na = static_cast<double>(sa.size());
  const auto nb = static_cast<double>(sb.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double t = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == t) ++i;
    while (j < sb.size() && sb[j] == t) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

LineFit ols_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("line fit needs >= 2 paired points");
  const double mx = mean(x);
  const double my = mean(y);
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw NumericError("line fit with constant abscissa");
  const double slope = sxy / sxx;
  return {my - slope * mx, slope};
}

double normal_cdf(double z) {
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
}

double normal_quantile(double p) {
  if (p == 0.5) return 0.0;
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

}  // namespace mphase::stats
