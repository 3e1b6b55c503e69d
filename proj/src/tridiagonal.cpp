#include "freya/tridiagonal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace freya
{
    std::size_t sturm_count(const SymmetricTridiagonal& t, double shift)
    {
        const std::size_t d = t.size();
        std::size_t count = 0;
        double q = 1.0;
        for (std::size_t i = 0; i < d; ++i)
        {
            const double off_sq = i == 0 ? 0.0 : t.off_diagonal[i - 1] * t.off_diagonal[i - 1];
            q = (t.diagonal[i] - shift) - (i == 0 ? 0.0 : off_sq / q);
            if (q == 0.0)
            {
                q = -std::numeric_limits<double>::epsilon() * (std::abs(shift) + 1.0);
            }
            if (q < 0.0)
            {
                ++count;
            }
        }
        return count;
    }

    double tridiagonal_eigenvalue(const SymmetricTridiagonal& t, std::size_t k)
    {
        const std::size_t d = t.size();
        if (d == 0 || k >= d)
        {
            throw std::invalid_argument("tridiagonal_eigenvalue: index out of range");
        }
        if (t.off_diagonal.size() + 1 != d)
        {
            throw std::invalid_argument("tridiagonal_eigenvalue: off-diagonal must have size d-1");
        }

        // Gershgorin interval.
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t i = 0; i < d; ++i)
        {
            double radius = 0.0;
            if (i > 0)
            {
                radius += std::abs(t.off_diagonal[i - 1]);
            }
            if (i + 1 < d)
            {
                radius += std::abs(t.off_diagonal[i]);
            }
            lo = std::min(lo, t.diagonal[i] - radius);
            hi = std::max(hi, t.diagonal[i] + radius);
        }
        const double pad = (hi - lo) * 1e-12 + 1e-300;
        lo -= pad;
        hi += pad;

        // Invariant: count(lo) <= k < count(hi).
        for (int iter = 0; iter < 2000; ++iter)
        {
            const double mid = lo + (hi - lo) / 2.0;
            if (mid <= lo || mid >= hi)
            {
                break;
            }
            if (sturm_count(t, mid) > k)
            {
                hi = mid;
            }
            else
            {
                lo = mid;
            }
        }
        return lo + (hi - lo) / 2.0;
    }

    std::vector<double> tridiagonal_solve(const SymmetricTridiagonal& t, std::span<const double> rhs)
    {
        const std::size_t d = t.size();
        if (rhs.size() != d)
        {
            throw std::invalid_argument("tridiagonal_solve: dimension mismatch");
        }
        std::vector<double> c_prime(d, 0.0);
        std::vector<double> x(rhs.begin(), rhs.end());
        double denom = t.diagonal[0];
        if (denom == 0.0)
        {
            throw std::runtime_error("tridiagonal_solve: zero pivot");
        }
        if (d > 1)
        {
            c_prime[0] = t.off_diagonal[0] / denom;
        }
        x[0] /= denom;
        for (std::size_t i = 1; i < d; ++i)
        {
            const double a = t.off_diagonal[i - 1];
            denom = t.diagonal[i] - a * c_prime[i - 1];
            if (denom == 0.0)
            {
                throw std::runtime_error("tridiagonal_solve: zero pivot");
            }
            if (i + 1 < d)
            {
                c_prime[i] = t.off_diagonal[i] / denom;
            }
            x[i] = (x[i] - a * x[i - 1]) / denom;
        }
        for (std::size_t i = d - 1; i-- > 0;)
        {
            x[i] -= c_prime[i] * x[i + 1];
        }
        return x;
    }
}
