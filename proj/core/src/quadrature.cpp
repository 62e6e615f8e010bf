#include "mphase/quadrature.hpp"

#include "mphase/error.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mphase::quadrature {

double integrate(const Integrand& f, double a, double b, const std::string& what) {
  if (a == b) return 0.0;
  double error = 0.0;
  double l1 = 0.0;
  const double value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      f, a, b, 20, 1e-13, &error, &l1);
  if (!std::isfinite(value) || error > std::max(kAbsTol, 1e-12 * l1)) {
    std::ostringstream os;
    os << "quadrature for " << what << " did not converge on [" << a << ", " << b
       << "]: estimate " << value << ", error " << error << ", L1 " << l1;
    throw NumericError(os.str());
  }
  return value;
}

double integrate_real_line(const Integrand& f, std::vector<double> breakpoints, double half_width,
                           const std::string& what) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  breakpoints.erase(std::remove_if(breakpoints.begin(), breakpoints.end(),
                                   [&](double b) { return !(b > -half_width && b < half_width); }),
                    breakpoints.end());
  breakpoints.push_back(-half_width);
  breakpoints.push_back(half_width);
  std::sort(breakpoints.begin(), breakpoints.end());
  breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end()), breakpoints.end());

  double total = integrate(f, -inf, breakpoints.front(), what);
  for (std::size_t i = 1; i < breakpoints.size(); ++i) {
    total += integrate(f, breakpoints[i - 1], breakpoints[i], what);
  }
  total += integrate(f, breakpoints.back(), inf, what);
  return total;
}

}  // namespace mphase::quadrature
