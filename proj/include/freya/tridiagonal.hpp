#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace freya
{
    /// Symmetric tridiagonal matrix given by its main diagonal (size d) and
    /// off-diagonal (size d-1).
    struct SymmetricTridiagonal
    {
        std::vector<double> diagonal;
        std::vector<double> off_diagonal;

        std::size_t size() const noexcept { return diagonal.size(); }
    };

    /// Number of eigenvalues strictly less than `shift` (Sturm sequence count).
    std::size_t sturm_count(const SymmetricTridiagonal& t, double shift);

    /// k-th smallest eigenvalue (0-based) by bisection on the Sturm count.
    /// Converges to adjacent doubles.
    double tridiagonal_eigenvalue(const SymmetricTridiagonal& t, std::size_t k);

    inline double tridiagonal_min_eigenvalue(const SymmetricTridiagonal& t)
    {
        return tridiagonal_eigenvalue(t, 0);
    }

    inline double tridiagonal_max_eigenvalue(const SymmetricTridiagonal& t)
    {
        return tridiagonal_eigenvalue(t, t.size() - 1);
    }

    /// Solves t * x = rhs with the Thomas algorithm (no pivoting; intended
    /// for positive definite systems).
    std::vector<double> tridiagonal_solve(const SymmetricTridiagonal& t, std::span<const double> rhs);
}
