#pragma once

#include <cmath>
#include <limits>

// Arithmetic on [0, inf] used by the time-complexity formulas.
// Conventions: 1/inf = 0, 1/0 = inf, x/inf = 0 and x/0 = inf for finite
// x > 0, and 0 * inf = 0 (a zero coefficient kills an infinite term).
namespace freya::xreal
{
    inline constexpr double kInf = std::numeric_limits<double>::infinity();

    inline bool is_inf(double v) noexcept { return std::isinf(v); }

    inline double reciprocal(double v) noexcept
    {
        if (v == 0.0)
        {
            return kInf;
        }
        if (std::isinf(v))
        {
            return 0.0;
        }
        return 1.0 / v;
    }

    // numerator / denominator for numerator > 0.
    inline double divide(double numerator, double denominator) noexcept
    {
        if (std::isinf(denominator))
        {
            return std::isinf(numerator) ? kInf : 0.0;
        }
        if (denominator == 0.0)
        {
            return kInf;
        }
        return numerator / denominator;
    }

    inline double multiply(double a, double b) noexcept
    {
        if (a == 0.0 || b == 0.0)
        {
            return 0.0;
        }
        return a * b;
    }

    inline double sqrt(double v) noexcept { return std::isinf(v) ? kInf : std::sqrt(v); }
}
