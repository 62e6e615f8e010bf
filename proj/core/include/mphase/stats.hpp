#pragma once

#include <span>
#include <vector>

namespace mphase::stats {

double mean(std::span<const double> v);
/// Median of a copy; average of the two middle values for even sizes.
double median(std::span<const double> v);
/// Linear-interpolation quantile (type 7) of a copy.
double quantile(std::span<const double> v, double p);
std::vector<double> quantiles(std::span<const double> v, std::span<const double> ps);

/// Normalized median absolute deviation, 1.4826 * MAD.
double mad_scale(std::span<const double> v);

/// Sample skewness and kurtosis (moment estimators, kurtosis not excess).
double skewness(std::span<const double> v);
double kurtosis(std::span<const double> v);

/// Two-sample Kolmogorov-Smirnov statistic sup_t |F_a(t) - F_b(t)|, with ties
/// handled by advancing both samples past equal values.
double ks_two_sample(std::span<const double> a, std::span<const double> b);

struct LineFit {
  double intercept;
  double slope;
};
/// Ordinary least squares y = intercept + slope x.
LineFit ols_line(std::span<const double> x, std::span<const double> y);

double normal_cdf(double z);
double normal_pdf(double z);
double normal_quantile(double p);

}  // namespace mphase::stats
