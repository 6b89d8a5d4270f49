#pragma once

#include <cstddef>
#include <span>

namespace schrodlab {

/// Ordinary least squares y = intercept + slope * x.
struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;  // 0 when n == 2
    double r2 = 0.0;            // 1 when y is constant
    std::size_t n = 0;
};

/// Throws std::invalid_argument for fewer than two points, mismatched sizes,
/// or constant x.
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

}  // namespace schrodlab
