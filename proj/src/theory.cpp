#include "freya/theory.hpp"

#include "freya/extended_real.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace freya::theory
{
    namespace
    {
        std::vector<double> sorted_copy(std::span<const double> taus)
        {
            if (taus.empty())
            {
                throw std::invalid_argument("equilibrium time needs at least one worker");
            }
            std::vector<double> out(taus.begin(), taus.end());
            for (double t : out)
            {
                if (std::isnan(t) || t < 0.0)
                {
                    throw std::invalid_argument("worker times must lie in [0, inf]");
                }
            }
            std::sort(out.begin(), out.end());
            return out;
        }

        void check_probability(double p)
        {
            if (!(p > 0.0 && p <= 1.0))
            {
                throw std::invalid_argument("p must lie in (0, 1]");
            }
        }

        void check_batch(double S)
        {
            if (!(S >= 1.0))
            {
                throw std::invalid_argument("batch size must be at least 1");
            }
        }

        double radical(double p, double S) { return std::sqrt((1.0 - p) / (p * S)); }

        double t_star(double S, std::span<const double> taus) { return equilibrium_time(S, taus).value; }

        double max_tau(std::span<const double> taus) { return *std::max_element(taus.begin(), taus.end()); }
        double min_tau(std::span<const double> taus) { return *std::min_element(taus.begin(), taus.end()); }

        nlohmann::json number(double v)
        {
            if (std::isinf(v))
            {
                return "inf";
            }
            return v;
        }
    }

    std::vector<double> equilibrium_candidates(double S, std::span<const double> taus)
    {
        if (std::isnan(S) || S < 0.0)
        {
            throw std::invalid_argument("S must be nonnegative");
        }
        const std::vector<double> sorted = sorted_copy(taus);
        std::vector<double> out;
        out.reserve(sorted.size());
        double rate = 0.0;
        for (std::size_t j = 1; j <= sorted.size(); ++j)
        {
            rate += xreal::reciprocal(sorted[j - 1]);
            out.push_back(xreal::divide(S + static_cast<double>(j), rate));
        }
        return out;
    }

    Equilibrium equilibrium_time(double S, std::span<const double> taus)
    {
        const std::vector<double> c = equilibrium_candidates(S, taus);
        Equilibrium best{c[0], 1};
        for (std::size_t j = 2; j <= c.size(); ++j)
        {
            if (c[j - 1] < best.value)
            {
                best = {c[j - 1], j};
            }
        }
        return best;
    }

    PageParams large_scale_params(std::size_t m)
    {
        if (m == 0)
        {
            throw std::invalid_argument("m must be positive");
        }
        const double root = std::sqrt(static_cast<double>(m));
        auto S = static_cast<std::size_t>(std::ceil(root));
        // Guard the floating ceil against perfect squares off by one ulp.
        while (S > 1 && (S - 1) * (S - 1) >= m)
        {
            --S;
        }
        while (S * S < m)
        {
            ++S;
        }
        return {S, 1.0 / root};
    }

    PageParams ratio_params(std::size_t m, double L_minus, double L_pm)
    {
        if (m == 0)
        {
            throw std::invalid_argument("m must be positive");
        }
        if (!(L_minus > 0.0))
        {
            throw std::invalid_argument("L_minus must be positive");
        }
        if (L_pm < 0.0)
        {
            throw std::invalid_argument("L_pm must be nonnegative");
        }
        std::size_t S = 1;
        if (L_pm == L_minus)
        {
            // Ratio one: exact integer ceil(sqrt(m)).
            S = large_scale_params(m).S;
        }
        else
        {
            const double raw = std::ceil(L_pm * std::sqrt(static_cast<double>(m)) / L_minus);
            S = raw >= static_cast<double>(m) ? m : static_cast<std::size_t>(std::max(raw, 1.0));
        }
        S = std::min(std::max<std::size_t>(S, 1), m);
        return {S, static_cast<double>(S) / static_cast<double>(m)};
    }

    double page_cost(double S, double t_star_m, std::span<const double> taus, double L_minus, double L_pm)
    {
        const double ts = t_star(S, taus);
        const double first = xreal::multiply(L_minus, ts);
        const double second = xreal::multiply(L_pm, xreal::sqrt(xreal::multiply(t_star_m, ts) / S));
        return first + second;
    }

    OptimalParams optimal_params(std::size_t m, std::span<const double> taus, double L_minus, double L_pm,
                                 SearchMode mode)
    {
        if (m == 0)
        {
            throw std::invalid_argument("m must be positive");
        }
        if (!(L_minus > 0.0) || L_pm < 0.0)
        {
            throw std::invalid_argument("smoothness constants must be positive");
        }
        const double tm = t_star(static_cast<double>(m), taus);
        auto F = [&](std::size_t S) { return page_cost(static_cast<double>(S), tm, taus, L_minus, L_pm); };

        if (mode == SearchMode::Auto)
        {
            mode = m <= 2000 ? SearchMode::Exhaustive : SearchMode::Bisection;
        }

        OptimalParams best{1, 1.0, F(1)};
        auto consider = [&](std::size_t S) {
            const double v = F(S);
            if (v < best.F || (v == best.F && S < best.S))
            {
                best.S = S;
                best.F = v;
            }
        };

        if (mode == SearchMode::Exhaustive)
        {
            for (std::size_t S = 2; S <= m; ++S)
            {
                consider(S);
            }
        }
        else
        {
            // G(S) = L_minus t*(S) - L_pm sqrt(t*(m) t*(S) / S) is nondecreasing;
            // F balances near its first nonnegative point.
            auto G = [&](std::size_t S) {
                const double ts = t_star(static_cast<double>(S), taus);
                return xreal::multiply(L_minus, ts) -
                       xreal::multiply(L_pm, xreal::sqrt(xreal::multiply(tm, ts) / static_cast<double>(S)));
            };
            std::size_t lo = 1;
            std::size_t hi = m;
            if (!(G(hi) >= 0.0))
            {
                lo = hi;
            }
            while (lo < hi)
            {
                const std::size_t mid = lo + (hi - lo) / 2;
                if (G(mid) >= 0.0)
                {
                    hi = mid;
                }
                else
                {
                    lo = mid + 1;
                }
            }
            const std::size_t from = lo > 3 ? lo - 2 : 1;
            const std::size_t to = std::min(m, lo + 2);
            best = {from, 1.0, F(from)};
            for (std::size_t S = from + 1; S <= to; ++S)
            {
                consider(S);
            }
        }

        if (xreal::multiply(L_minus, tm) <= best.F)
        {
            best.p = 1.0;
        }
        else
        {
            best.p = t_star(static_cast<double>(best.S), taus) / tm;
        }
        return best;
    }

    double page_stepsize(double p, double S, double L_minus, double L_pm)
    {
        check_probability(p);
        check_batch(S);
        return 1.0 / (L_minus + L_pm * radical(p, S));
    }

    double nice_stepsize(double p, double S, std::size_t m, double L_minus, double L_pm)
    {
        check_probability(p);
        check_batch(S);
        const auto mm = static_cast<double>(m);
        if (S > mm)
        {
            throw std::invalid_argument("nice sampling: S exceeds m");
        }
        if (S == mm)
        {
            return 1.0 / L_minus;
        }
        const double r = std::sqrt((1.0 - p) * (mm - S) / (p * (mm - 1.0) * S));
        return 1.0 / (L_minus + L_pm * r);
    }

    double importance_stepsize(double p, double S, double L_minus, double L_bar)
    {
        return page_stepsize(p, S, L_minus, L_bar);
    }

    double page_iterations(double delta0, double eps, double p, double S, double L_minus, double L_pm)
    {
        if (!(eps > 0.0))
        {
            throw std::invalid_argument("eps must be positive");
        }
        check_probability(p);
        check_batch(S);
        return 2.0 * delta0 / eps * (L_minus + L_pm * radical(p, S));
    }

    double log_augmented(double batch, std::size_t n)
    {
        const double k = std::min(batch, static_cast<double>(n));
        return k > 0.0 ? batch + k * std::log(k) : batch;
    }

    bool needs_log_term(std::size_t m, std::size_t n)
    {
        const auto nn = static_cast<double>(n);
        return static_cast<double>(m) < nn * std::log(nn);
    }

    double full_gradient_time_bound(std::size_t m, std::span<const double> taus)
    {
        return any_sampling_time_bound(m, taus);
    }

    double batch_difference_time_bound(double S, std::span<const double> taus) { return 4.0 * t_star(S, taus); }

    double batch_time_bound(double S, std::span<const double> taus) { return 2.0 * t_star(S, taus); }

    double any_sampling_time_bound(std::size_t size, std::span<const double> taus)
    {
        return 12.0 * t_star(log_augmented(static_cast<double>(size), taus.size()), taus);
    }

    double any_sampling_difference_time_bound(std::size_t size, std::span<const double> taus)
    {
        return 24.0 * t_star(log_augmented(static_cast<double>(size), taus.size()), taus);
    }

    double predicted_time(double p, double S, std::span<const double> taus, std::size_t m,
                          const ProblemConstants& c, std::optional<bool> log_term)
    {
        check_probability(p);
        check_batch(S);
        if (!(c.eps > 0.0))
        {
            throw std::invalid_argument("eps must be positive");
        }
        const bool with_log = log_term.value_or(needs_log_term(m, taus.size()));
        auto effective = [&](double b) { return with_log ? log_augmented(b, taus.size()) : b; };
        const double tm = t_star(effective(static_cast<double>(m)), taus);
        const double ts = t_star(effective(S), taus);
        const double rate = 48.0 * c.delta0 / c.eps * (c.L_minus + c.L_pm * radical(p, S));
        const double per_step = xreal::multiply(p, tm) + xreal::multiply(1.0 - p, ts);
        return 12.0 * tm + xreal::multiply(rate, per_step);
    }

    double large_scale_time(std::span<const double> taus, std::size_t m, const ProblemConstants& c)
    {
        const double tm = t_star(static_cast<double>(m), taus);
        const double tr = t_star(std::sqrt(static_cast<double>(m)), taus);
        return 12.0 * tm + xreal::multiply(192.0 * c.delta0 * std::max(c.L_minus, c.L_pm) / c.eps, tr);
    }

    double lower_bound_time(std::span<const double> taus, std::size_t m, double delta0, double eps, double L_plus)
    {
        const double tm = t_star(static_cast<double>(m), taus);
        return tm + xreal::multiply(delta0 * L_plus / (std::sqrt(static_cast<double>(m)) * eps), tm);
    }

    double hero_gd_time(std::span<const double> taus, std::size_t m, const ProblemConstants& c)
    {
        return xreal::multiply(min_tau(taus), static_cast<double>(m) * c.delta0 * c.L_minus / c.eps);
    }

    double soviet_gd_time(std::span<const double> taus, std::size_t m, const ProblemConstants& c)
    {
        const double share = std::max(static_cast<double>(m) / static_cast<double>(taus.size()), 1.0);
        return xreal::multiply(max_tau(taus), share * c.delta0 * c.L_minus / c.eps);
    }

    double hero_page_time(std::span<const double> taus, std::size_t m, const ProblemConstants& c)
    {
        const double mm = static_cast<double>(m);
        const double L = std::max(c.L_minus, c.L_pm);
        return xreal::multiply(min_tau(taus), mm + c.delta0 * L / c.eps * std::sqrt(mm));
    }

    double soviet_page_time(std::span<const double> taus, std::size_t m, const ProblemConstants& c)
    {
        const double mm = static_cast<double>(m);
        const double nn = static_cast<double>(taus.size());
        const double L = std::max(c.L_minus, c.L_pm);
        const double factor = std::max(mm / nn, 1.0) + c.delta0 * L / c.eps * std::max(std::sqrt(mm) / nn, 1.0);
        return xreal::multiply(max_tau(taus), factor);
    }

    std::size_t sgd_params(double delta0, double eps, double L_max, double delta_star)
    {
        if (!(eps > 0.0))
        {
            throw std::invalid_argument("eps must be positive");
        }
        const double raw = std::ceil(L_max / eps * (delta0 + delta_star));
        return raw < 1.0 ? 1 : static_cast<std::size_t>(raw);
    }

    double sgd_iterations(double S, const SgdConstants& c)
    {
        check_batch(S);
        if (!(c.eps > 0.0))
        {
            throw std::invalid_argument("eps must be positive");
        }
        const double a = 1.0 - 1.0 / S;
        const double b = 12.0 * c.L_max * c.delta0 / (S * c.eps);
        const double d = 4.0 * c.L_max * c.delta_star / (S * c.eps);
        return 12.0 * c.delta0 * c.L / c.eps * std::max({a, b, d});
    }

    double sgd_stepsize(double S, const SgdConstants& c)
    {
        const double K = sgd_iterations(S, c);
        const double first = xreal::divide(std::sqrt(S), std::sqrt(c.L * c.L_max * K));
        const double second = xreal::reciprocal(c.L * (1.0 - 1.0 / S));
        const double third = xreal::divide(S * c.eps, 4.0 * c.L * c.L_max * c.delta_star);
        return std::min({first, second, third});
    }

    SimpleBounds simple_upper_bounds_check(double S, std::span<const double> taus)
    {
        const std::vector<double> sorted = sorted_copy(taus);
        SimpleBounds out;
        out.t_star = equilibrium_time(S, sorted).value;
        out.bound_n = xreal::multiply(2.0 * sorted.back(), std::max(S / static_cast<double>(sorted.size()), 1.0));
        out.bound_1 = xreal::multiply(2.0 * sorted.front(), std::max(S, 1.0));
        out.holds_n = out.t_star <= out.bound_n;
        out.holds_1 = out.t_star <= out.bound_1;
        return out;
    }

    Sandwich lemma_sandwich(double S, std::span<const double> taus)
    {
        const std::vector<double> sorted = sorted_copy(taus);
        const std::vector<double> c = equilibrium_candidates(S, sorted);
        Sandwich out;
        const Equilibrium e = equilibrium_time(S, sorted);
        out.t_star = e.value;
        out.j_smallest = e.j;
        out.j_largest = e.j;
        for (std::size_t j = e.j + 1; j <= c.size(); ++j)
        {
            if (c[j - 1] == e.value)
            {
                out.j_largest = j;
            }
        }
        constexpr double slack = 1e-12;
        auto le = [&](double a, double b) { return a <= b * (1.0 + slack); };
        auto check = [&](std::size_t j) {
            bool ok = le(sorted[j - 1], out.t_star);
            if (j < sorted.size())
            {
                ok = ok && le(out.t_star, sorted[j]);
            }
            return ok;
        };
        out.holds = check(out.j_smallest) && check(out.j_largest);
        return out;
    }

    TheoryReport make_report(std::size_t m, std::span<const double> taus, const ProblemConstants& c,
                             std::optional<double> L_plus)
    {
        TheoryReport r;
        r.m = m;
        r.n = taus.size();
        r.constants = c;
        const Equilibrium em = equilibrium_time(static_cast<double>(m), taus);
        const Equilibrium er = equilibrium_time(std::sqrt(static_cast<double>(m)), taus);
        r.t_star_m = em.value;
        r.j_star_m = em.j;
        r.t_star_sqrt_m = er.value;
        r.j_star_sqrt_m = er.j;
        r.optimal = optimal_params(m, taus, c.L_minus, c.L_pm);
        r.large_scale = large_scale_params(m);
        r.ratio = ratio_params(m, c.L_minus, c.L_pm);
        const double S = static_cast<double>(r.optimal.S);
        r.gamma = page_stepsize(r.optimal.p, S, c.L_minus, c.L_pm);
        r.K_page = page_iterations(c.delta0, c.eps, r.optimal.p, S, c.L_minus, c.L_pm);
        r.log_term = needs_log_term(m, taus.size());
        r.predicted_time_optimal = predicted_time(r.optimal.p, S, taus, m, c);
        r.predicted_time_large_scale = predicted_time(std::min(r.large_scale.p, 1.0),
                                                      static_cast<double>(r.large_scale.S), taus, m, c);
        r.large_scale_time = large_scale_time(taus, m, c);
        r.lower_bound = lower_bound_time(taus, m, c.delta0, c.eps, L_plus.value_or(c.L_pm));
        r.hero_gd = hero_gd_time(taus, m, c);
        r.soviet_gd = soviet_gd_time(taus, m, c);
        r.hero_page = hero_page_time(taus, m, c);
        r.soviet_page = soviet_page_time(taus, m, c);
        return r;
    }

    nlohmann::json to_json(const TheoryReport& r)
    {
        nlohmann::json j;
        j["m"] = r.m;
        j["n"] = r.n;
        j["constants"] = {{"L_minus", r.constants.L_minus},
                          {"L_pm", r.constants.L_pm},
                          {"delta0", r.constants.delta0},
                          {"eps", r.constants.eps}};
        j["t_star_m"] = number(r.t_star_m);
        j["j_star_m"] = r.j_star_m;
        j["t_star_sqrt_m"] = number(r.t_star_sqrt_m);
        j["j_star_sqrt_m"] = r.j_star_sqrt_m;
        j["optimal"] = {{"S", r.optimal.S}, {"p", r.optimal.p}, {"F", number(r.optimal.F)}};
        j["large_scale"] = {{"S", r.large_scale.S}, {"p", r.large_scale.p}};
        j["ratio"] = {{"S", r.ratio.S}, {"p", r.ratio.p}};
        j["gamma"] = r.gamma;
        j["K_page"] = r.K_page;
        j["log_term"] = r.log_term;
        j["predicted_time"] = {{"optimal", number(r.predicted_time_optimal)},
                               {"large_scale", number(r.predicted_time_large_scale)},
                               {"large_scale_closed_form", number(r.large_scale_time)}};
        j["lower_bound"] = number(r.lower_bound);
        j["baselines"] = {{"hero_gd", number(r.hero_gd)},
                          {"soviet_gd", number(r.soviet_gd)},
                          {"hero_page", number(r.hero_page)},
                          {"soviet_page", number(r.soviet_page)}};
        return j;
    }
}
