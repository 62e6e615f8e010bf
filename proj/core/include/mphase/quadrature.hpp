#pragma once

#include <functional>
#include <string>
#include <vector>

namespace mphase::quadrature {

inline constexpr double kAbsTol = 1e-9;

using Integrand = std::function<double(double)>;

/// Adaptive Gauss-Kronrod on [a, b]; either end may be infinite. Throws
/// NumericError naming `what` when the error estimate exceeds
/// max(kAbsTol, 1e-12 * L1 norm).
double integrate(const Integrand& f, double a, double b, const std::string& what);

/// Integral over the real line. The core [-half_width, half_width] is split at
/// every breakpoint inside it; both tails are integrated separately.
double integrate_real_line(const Integrand& f, std::vector<double> breakpoints, double half_width,
                           const std::string& what);

}  // namespace mphase::quadrature
