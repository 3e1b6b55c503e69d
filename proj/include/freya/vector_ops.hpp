#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace freya
{
    using Vec = std::vector<double>;

    inline double dot(std::span<const double> a, std::span<const double> b)
    {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i)
        {
            s += a[i] * b[i];
        }
        return s;
    }

    inline double norm_sq(std::span<const double> a) { return dot(a, a); }

    inline double norm(std::span<const double> a) { return std::sqrt(norm_sq(a)); }

    // y += alpha * x
    inline void axpy(double alpha, std::span<const double> x, std::span<double> y)
    {
        for (std::size_t i = 0; i < y.size(); ++i)
        {
            y[i] += alpha * x[i];
        }
    }

    inline double distance(std::span<const double> a, std::span<const double> b)
    {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i)
        {
            const double diff = a[i] - b[i];
            s += diff * diff;
        }
        return std::sqrt(s);
    }

    inline bool all_finite(std::span<const double> a)
    {
        for (double v : a)
        {
            if (!std::isfinite(v))
            {
                return false;
            }
        }
        return true;
    }

    // Coordinate-wise Neumaier summation. Gradient aggregation goes through
    // this so that the result is insensitive to the order in which workers
    // deliver their summands.
    class CompensatedSum
    {
    public:
        explicit CompensatedSum(std::size_t dim) : sum_(dim, 0.0), comp_(dim, 0.0) {}

        std::size_t size() const noexcept { return sum_.size(); }

        void add(std::span<const double> v, double weight = 1.0)
        {
            for (std::size_t i = 0; i < sum_.size(); ++i)
            {
                const double term = weight * v[i];
                const double t = sum_[i] + term;
                if (std::abs(sum_[i]) >= std::abs(term))
                {
                    comp_[i] += (sum_[i] - t) + term;
                }
                else
                {
                    comp_[i] += (term - t) + sum_[i];
                }
                sum_[i] = t;
            }
        }

        Vec result(double scale = 1.0) const
        {
            Vec out(sum_.size());
            for (std::size_t i = 0; i < sum_.size(); ++i)
            {
                out[i] = (sum_[i] + comp_[i]) * scale;
            }
            return out;
        }

    private:
        Vec sum_;
        Vec comp_;
    };

    // Scalar counterpart of CompensatedSum.
    class CompensatedScalar
    {
    public:
        void add(double term)
        {
            const double t = sum_ + term;
            if (std::abs(sum_) >= std::abs(term))
            {
                comp_ += (sum_ - t) + term;
            }
            else
            {
                comp_ += (term - t) + sum_;
            }
            sum_ = t;
        }

        double value() const noexcept { return sum_ + comp_; }

    private:
        double sum_ = 0.0;
        double comp_ = 0.0;
    };
}
