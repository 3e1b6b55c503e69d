#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

// Closed-form time and iteration complexities. Every function is pure.
namespace freya::theory
{
    struct Equilibrium
    {
        double value = 0.0;
        /// Smallest minimizing prefix size, 1-based.
        std::size_t j = 0;
    };

    /// t*(S, taus) = min_j (sum_{i<=j} 1/tau_(i))^-1 (S + j) over the sorted
    /// times. Entries may be 0 or inf. Throws on an empty vector.
    Equilibrium equilibrium_time(double S, std::span<const double> taus);

    /// Candidate values c_j for j = 1..n over sorted taus (index j-1).
    std::vector<double> equilibrium_candidates(double S, std::span<const double> taus);

    struct PageParams
    {
        std::size_t S = 1;
        double p = 1.0;
    };

    /// S = ceil(sqrt(m)), p = 1/sqrt(m).
    PageParams large_scale_params(std::size_t m);

    /// S = min(max(ceil(L_pm sqrt(m) / L_minus), 1), m), p = S/m.
    PageParams ratio_params(std::size_t m, double L_minus, double L_pm);

    enum class SearchMode
    {
        Auto,
        Exhaustive,
        Bisection,
    };

    struct OptimalParams
    {
        std::size_t S = 1;
        double p = 1.0;
        double F = 0.0;
    };

    /// F(S) = L_minus t*(S) + L_pm sqrt(t*(m) t*(S) / S).
    double page_cost(double S, double t_star_m, std::span<const double> taus, double L_minus, double L_pm);

    /// argmin over integer S in [1, m] of F(S), smallest S on ties. Auto is
    /// exhaustive for m <= 2000 and bisection on the balance point above.
    OptimalParams optimal_params(std::size_t m, std::span<const double> taus, double L_minus, double L_pm,
                                 SearchMode mode = SearchMode::Auto);

    double page_stepsize(double p, double S, double L_minus, double L_pm);
    double nice_stepsize(double p, double S, std::size_t m, double L_minus, double L_pm);
    double importance_stepsize(double p, double S, double L_minus, double L_bar);

    /// K = (2 delta0 / eps)(L_minus + L_pm sqrt((1-p)/(pS))), not rounded.
    double page_iterations(double delta0, double eps, double p, double S, double L_minus, double L_pm);

    /// b + min(b, n) ln min(b, n).
    double log_augmented(double batch, std::size_t n);

    /// True when m < n ln n.
    bool needs_log_term(std::size_t m, std::size_t n);

    /// 12 t*(m + min(m,n) ln min(m,n)): expected time of compute_gradient.
    double full_gradient_time_bound(std::size_t m, std::span<const double> taus);
    /// 4 t*(S): worst-case time of compute_batch_difference.
    double batch_difference_time_bound(double S, std::span<const double> taus);
    /// 2 t*(S): worst-case time of compute_batch.
    double batch_time_bound(double S, std::span<const double> taus);
    /// 12 t*(|S| + log term): expected time of compute_batch_any_sampling.
    double any_sampling_time_bound(std::size_t size, std::span<const double> taus);
    /// 24 t*(|S| + log term): expected time of the difference variant.
    double any_sampling_difference_time_bound(std::size_t size, std::span<const double> taus);

    struct ProblemConstants
    {
        double L_minus = 1.0;
        double L_pm = 1.0;
        double delta0 = 1.0;
        double eps = 1.0;
    };

    /// T(p, S) = 12 t*(m) + (48 delta0 / eps)(L_minus + L_pm sqrt((1-p)/(pS)))
    ///           (p t*(m) + (1 - p) t*(S)).
    /// With the log term, t*(b) is evaluated at b + min(b,n) ln min(b,n)
    /// for b in {m, S}. Unset means needs_log_term(m, n).
    double predicted_time(double p, double S, std::span<const double> taus, std::size_t m,
                          const ProblemConstants& c, std::optional<bool> log_term = std::nullopt);

    /// 12 t*(m) + (192 delta0 max(L_minus, L_pm) / eps) t*(sqrt(m)).
    double large_scale_time(std::span<const double> taus, std::size_t m, const ProblemConstants& c);

    /// t*(m) + (delta0 L_plus / (sqrt(m) eps)) t*(m), without the hidden constant.
    double lower_bound_time(std::span<const double> taus, std::size_t m, double delta0, double eps, double L_plus);

    // Baselines, up to constants.
    double hero_gd_time(std::span<const double> taus, std::size_t m, const ProblemConstants& c);
    double soviet_gd_time(std::span<const double> taus, std::size_t m, const ProblemConstants& c);
    double hero_page_time(std::span<const double> taus, std::size_t m, const ProblemConstants& c);
    double soviet_page_time(std::span<const double> taus, std::size_t m, const ProblemConstants& c);

    // ------------------------------------------------------------------
    // Freya SGD
    // ------------------------------------------------------------------

    struct SgdConstants
    {
        double L = 1.0;
        double L_max = 1.0;
        double delta0 = 1.0;
        double delta_star = 0.0;
        double eps = 1.0;
    };

    /// S* = ceil((L_max / eps)(delta0 + Delta*)), at least 1.
    std::size_t sgd_params(double delta0, double eps, double L_max, double delta_star);
    double sgd_iterations(double S, const SgdConstants& c);
    double sgd_stepsize(double S, const SgdConstants& c);

    // ------------------------------------------------------------------
    // Checks on the equilibrium time
    // ------------------------------------------------------------------

    struct SimpleBounds
    {
        double t_star = 0.0;
        double bound_n = 0.0;
        double bound_1 = 0.0;
        bool holds_n = false;
        bool holds_1 = false;
        bool holds() const noexcept { return holds_n && holds_1; }
    };

    /// t* <= 2 tau_n max(S/n, 1) and t* <= 2 tau_1 max(S, 1).
    SimpleBounds simple_upper_bounds_check(double S, std::span<const double> taus);

    struct Sandwich
    {
        double t_star = 0.0;
        std::size_t j_smallest = 0;
        std::size_t j_largest = 0;
        bool holds = false;
    };

    /// tau_(j) <= t* <= tau_(j+1) for the smallest and the largest minimizer
    /// (upper side only when j < n). Comparisons allow a relative slack of
    /// 1e-12 for rounding in the candidate values.
    Sandwich lemma_sandwich(double S, std::span<const double> taus);

    // ------------------------------------------------------------------

    struct TheoryReport
    {
        std::size_t m = 0;
        std::size_t n = 0;
        ProblemConstants constants;
        double t_star_m = 0.0;
        std::size_t j_star_m = 0;
        double t_star_sqrt_m = 0.0;
        std::size_t j_star_sqrt_m = 0;
        OptimalParams optimal;
        PageParams large_scale;
        PageParams ratio;
        double gamma = 0.0;
        double K_page = 0.0;
        bool log_term = false;
        double predicted_time_optimal = 0.0;
        double predicted_time_large_scale = 0.0;
        double large_scale_time = 0.0;
        double lower_bound = 0.0;
        double hero_gd = 0.0;
        double soviet_gd = 0.0;
        double hero_page = 0.0;
        double soviet_page = 0.0;
    };

    /// L_plus defaults to L_pm for the lower-bound column.
    TheoryReport make_report(std::size_t m, std::span<const double> taus, const ProblemConstants& c,
                             std::optional<double> L_plus = std::nullopt);

    nlohmann::json to_json(const TheoryReport& report);
}
