#include "freya/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace freya
{
    const char* to_string(StopReason reason)
    {
        switch (reason)
        {
        case StopReason::Iterations:
            return "iterations";
        case StopReason::Time:
            return "time";
        case StopReason::Epsilon:
            return "eps";
        case StopReason::Target:
            return "target";
        case StopReason::Diverged:
            return "diverged";
        }
        return "unknown";
    }

    std::string OptimizerReport::to_csv() const
    {
        std::ostringstream out;
        out.precision(17);
        out << "k,time,grad_norm_sq,f_value\n";
        for (const auto& p : trajectory)
        {
            out << p.k << ',' << p.time << ',' << p.grad_norm_sq << ',' << p.f_value << '\n';
        }
        return out.str();
    }

    nlohmann::json OptimizerReport::summary() const
    {
        nlohmann::json j;
        j["algorithm"] = algorithm;
        j["stop"] = to_string(stop);
        j["iterations"] = iterations;
        j["total_time"] = total_time;
        j["min_grad_norm_sq"] = min_grad_norm_sq;
        j["reached_eps"] = reached_eps;
        j["gamma"] = gamma;
        j["S"] = S;
        j["p"] = p;
        j["max_delay"] = max_delay;
        if (!trajectory.empty())
        {
            j["final_f"] = trajectory.back().f_value;
            j["final_grad_norm_sq"] = trajectory.back().grad_norm_sq;
        }
        return j;
    }

    std::size_t block_start(std::size_t m, std::size_t n, std::size_t w)
    {
        const std::size_t base = m / n;
        const std::size_t rem = m % n;
        return w * base + std::min(w, rem);
    }

    std::size_t block_owner(std::size_t m, std::size_t n, std::size_t index)
    {
        const std::size_t base = m / n;
        const std::size_t rem = m % n;
        const std::size_t big = (base + 1) * rem;
        if (index < big)
        {
            return index / (base + 1);
        }
        return rem + (index - big) / base;
    }

    namespace
    {
        void validate(const StopRule& rule)
        {
            if (rule.max_iterations < 0 || rule.eval_every < 1 || rule.eps < 0.0 || std::isnan(rule.max_time))
            {
                throw std::invalid_argument("invalid stopping rule");
            }
            if (rule.max_iterations == 0 && std::isinf(rule.max_time) && rule.eps == 0.0 && !rule.target_f)
            {
                throw std::invalid_argument("stopping rule needs an iteration budget, a time budget, eps or a target");
            }
            if (rule.max_time <= 0.0)
            {
                throw std::invalid_argument("time budget must be positive");
            }
        }

        // Books the trajectory and decides when to stop.
        class Tracker
        {
        public:
            Tracker(const FiniteSumObjective& objective, const StopRule& rule, OptimizerReport& report)
                : objective_(objective), rule_(rule), report_(report)
            {
                validate(rule);
            }

            // True when eps, target or divergence fired.
            bool observe(long k, double time, const Vec& x)
            {
                if (!all_finite(x))
                {
                    record(k, time, x);
                    report_.stop = StopReason::Diverged;
                    return true;
                }
                if (k % rule_.eval_every != 0)
                {
                    return false;
                }
                return record(k, time, x);
            }

            bool budget_hit(long k, double now)
            {
                if (rule_.max_iterations > 0 && k >= rule_.max_iterations)
                {
                    report_.stop = StopReason::Iterations;
                    return true;
                }
                if (now >= rule_.max_time)
                {
                    report_.stop = StopReason::Time;
                    return true;
                }
                return false;
            }

            void finish(long k, double time, const Vec& x, const WorkerPool& pool)
            {
                if (report_.trajectory.empty() || report_.trajectory.back().k != k)
                {
                    record(k, time, x);
                }
                report_.iterations = k;
                report_.total_time = pool.clock().now();
                report_.final_x = x;
                report_.trace = pool.trace();
            }

        private:
            bool record(long k, double time, const Vec& x)
            {
                TrajectoryPoint p;
                p.k = k;
                p.time = time;
                p.grad_norm_sq = norm_sq(objective_.gradient(x));
                p.f_value = objective_.value(x);
                report_.trajectory.push_back(p);
                if (!std::isfinite(p.grad_norm_sq) || !std::isfinite(p.f_value))
                {
                    report_.stop = StopReason::Diverged;
                    return true;
                }
                report_.min_grad_norm_sq = std::min(report_.min_grad_norm_sq, p.grad_norm_sq);
                if (rule_.eps > 0.0 && report_.min_grad_norm_sq <= rule_.eps)
                {
                    report_.reached_eps = true;
                }
                if (rule_.eps > 0.0 && p.grad_norm_sq <= rule_.eps)
                {
                    report_.stop = StopReason::Epsilon;
                    return true;
                }
                if (rule_.target_f && p.f_value <= *rule_.target_f)
                {
                    report_.stop = StopReason::Target;
                    return true;
                }
                return false;
            }

            const FiniteSumObjective& objective_;
            StopRule rule_;
            OptimizerReport& report_;
        };

        double require_L_minus(const SmoothnessHints& hints)
        {
            if (!hints.L_minus)
            {
                throw std::invalid_argument("automatic stepsize needs L_minus");
            }
            return *hints.L_minus;
        }

        Sampler make_sampler(Sampler::Kind kind, const FiniteSumObjective& objective, std::uint64_t seed)
        {
            const std::uint64_t s = derive_seed(seed, 0, StreamPurpose::Sampler);
            switch (kind)
            {
            case Sampler::Kind::Uniform:
                return Sampler::uniform(objective.components(), s);
            case Sampler::Kind::Nice:
                return Sampler::nice(objective.components(), s);
            case Sampler::Kind::Importance:
            {
                const SmoothnessHints hints = objective.smoothness();
                if (hints.per_component.empty())
                {
                    throw std::invalid_argument("importance sampling needs per-component smoothness constants");
                }
                return Sampler::importance(hints.per_component, s);
            }
            }
            throw std::invalid_argument("unknown sampler");
        }

        // Synchronous phase where worker w computes counts[w] gradients.
        double synchronous_work(WorkerPool& pool, const std::vector<std::size_t>& counts)
        {
            const std::size_t n = pool.workers();
            std::vector<std::uint64_t> calls(n, 0);
            std::vector<double> busy(n, 0.0);
            double longest = 0.0;
            for (WorkerId w = 0; w < n; ++w)
            {
                const double d =
                    pool.model().batch_duration(w, pool.iteration(), counts[w], pool.time_stream(w));
                calls[w] = counts[w];
                busy[w] = d;
                longest = std::max(longest, d);
            }
            if (std::isinf(longest))
            {
                throw std::runtime_error("cannot make progress: a worker with infinite time holds assigned work");
            }
            return pool.synchronous_phase(longest, calls, busy);
        }

        std::vector<std::size_t> block_sizes(std::size_t m, std::size_t n)
        {
            std::vector<std::size_t> out(n);
            for (std::size_t w = 0; w < n; ++w)
            {
                out[w] = block_start(m, n, w + 1) - block_start(m, n, w);
            }
            return out;
        }

        OptimizerReport run_sgd_loop(const char* label, const FiniteSumObjective& objective, WorkerPool& pool,
                                     const SgdParams& params)
        {
            if (params.S == 0)
            {
                throw std::invalid_argument("batch size must be at least 1");
            }
            double gamma = 0.0;
            if (params.gamma)
            {
                gamma = *params.gamma;
            }
            else if (params.constants)
            {
                gamma = theory::sgd_stepsize(static_cast<double>(params.S), *params.constants);
            }
            else
            {
                throw std::invalid_argument("SGD needs a stepsize or the constants to derive one");
            }
            if (!(gamma > 0.0))
            {
                throw std::invalid_argument("stepsize must be positive");
            }

            OptimizerReport report;
            report.algorithm = label;
            report.gamma = gamma;
            report.S = params.S;
            Tracker tracker(objective, params.stop, report);

            Vec x = objective.initial_point();
            long k = 0;
            if (!tracker.observe(0, pool.clock().now(), x))
            {
                while (!tracker.budget_hit(k, pool.clock().now()))
                {
                    pool.set_iteration(k);
                    const CollectionResult r = compute_batch(params.S, objective, x, pool);
                    axpy(-gamma, r.g, x);
                    ++k;
                    if (tracker.observe(k, pool.clock().now(), x))
                    {
                        break;
                    }
                }
            }
            tracker.finish(k, pool.clock().now(), x, pool);
            return report;
        }
    }

    // ------------------------------------------------------------------

    PageState freya_page_init(const FiniteSumObjective& objective, Vec x0, double gamma, double p, std::size_t S,
                              std::uint64_t seed, WorkerPool& pool)
    {
        if (!(p > 0.0 && p <= 1.0))
        {
            throw std::invalid_argument("p must lie in (0, 1]");
        }
        if (S == 0)
        {
            throw std::invalid_argument("batch size must be at least 1");
        }
        PageState state{std::move(x0), {}, 0, gamma, p, S, Rng(derive_seed(seed, 0, StreamPurpose::Coin)), 0.0};
        pool.set_iteration(-1);
        state.g = compute_gradient(objective, state.x, pool).g;
        state.time = pool.clock().now();
        return state;
    }

    CollectionResult freya_page_step(PageState& state, const FiniteSumObjective& objective, WorkerPool& pool,
                                     Sampler* sampler)
    {
        Vec previous = state.x;
        axpy(-state.gamma, state.g, state.x);
        pool.set_iteration(state.k);

        CollectionResult r;
        if (state.coin.bernoulli(state.p))
        {
            r = compute_gradient(objective, state.x, pool);
            state.g = r.g;
        }
        else
        {
            if (sampler == nullptr || sampler->kind() == Sampler::Kind::Uniform)
            {
                r = compute_batch_difference(state.S, objective, state.x, previous, pool);
            }
            else
            {
                const Sampler::Draw draw = sampler->draw(state.S);
                r = compute_batch_difference_any_sampling(draw.indices, objective, state.x, previous, pool,
                                                          draw.weights);
            }
            axpy(1.0, r.g, state.g);
        }
        ++state.k;
        state.time = pool.clock().now();
        return r;
    }

    PageParams resolve_page_params(const FiniteSumObjective& objective, PageParams params)
    {
        const std::size_t m = objective.components();
        const theory::PageParams defaults = theory::large_scale_params(m);
        if (!params.S)
        {
            params.S = defaults.S;
        }
        if (!params.p)
        {
            params.p = std::min(defaults.p, 1.0);
        }
        if (*params.S == 0)
        {
            throw std::invalid_argument("batch size must be at least 1");
        }
        if (!(*params.p > 0.0 && *params.p <= 1.0))
        {
            throw std::invalid_argument("p must lie in (0, 1]");
        }
        if (!params.gamma)
        {
            const SmoothnessHints hints = objective.smoothness();
            const double L_minus = require_L_minus(hints);
            const auto S = static_cast<double>(*params.S);
            switch (params.sampler)
            {
            case Sampler::Kind::Uniform:
                params.gamma = theory::page_stepsize(*params.p, S, L_minus, hints.hessian_variance());
                break;
            case Sampler::Kind::Nice:
                params.gamma = theory::nice_stepsize(*params.p, S, m, L_minus, hints.hessian_variance());
                break;
            case Sampler::Kind::Importance:
                params.gamma = theory::importance_stepsize(*params.p, S, L_minus, hints.L_bar());
                break;
            }
        }
        if (!(*params.gamma > 0.0))
        {
            throw std::invalid_argument("stepsize must be positive");
        }
        return params;
    }

    OptimizerReport run_freya_page(const FiniteSumObjective& objective, WorkerPool& pool, PageParams params,
                                   std::uint64_t seed)
    {
        params = resolve_page_params(objective, std::move(params));
        OptimizerReport report;
        report.algorithm = "freya_page";
        report.gamma = *params.gamma;
        report.S = *params.S;
        report.p = *params.p;
        Tracker tracker(objective, params.stop, report);

        std::optional<Sampler> sampler;
        if (params.sampler != Sampler::Kind::Uniform)
        {
            sampler = make_sampler(params.sampler, objective, seed);
        }

        Vec x0 = objective.initial_point();
        if (tracker.observe(0, pool.clock().now(), x0))
        {
            tracker.finish(0, pool.clock().now(), x0, pool);
            return report;
        }
        PageState state = freya_page_init(objective, std::move(x0), *params.gamma, *params.p, *params.S, seed, pool);
        while (!tracker.budget_hit(state.k, pool.clock().now()))
        {
            // x^{k+1} exists as soon as g^k does.
            const double available = pool.clock().now();
            freya_page_step(state, objective, pool, sampler ? &*sampler : nullptr);
            if (tracker.observe(state.k, available, state.x))
            {
                break;
            }
        }
        tracker.finish(state.k, pool.clock().now(), state.x, pool);
        return report;
    }

    OptimizerReport run_soviet_page(const FiniteSumObjective& objective, WorkerPool& pool, PageParams params,
                                    std::uint64_t seed)
    {
        params = resolve_page_params(objective, std::move(params));
        const std::size_t m = objective.components();
        const std::size_t n = pool.workers();
        const std::size_t S = *params.S;
        const double gamma = *params.gamma;
        const double p = *params.p;

        OptimizerReport report;
        report.algorithm = "soviet_page";
        report.gamma = gamma;
        report.S = S;
        report.p = p;
        Tracker tracker(objective, params.stop, report);

        Rng coin(derive_seed(seed, 0, StreamPurpose::Coin));
        Sampler sampler = make_sampler(params.sampler, objective, seed);
        const std::vector<std::size_t> blocks = block_sizes(m, n);

        Vec x = objective.initial_point();
        long k = 0;
        if (tracker.observe(0, pool.clock().now(), x))
        {
            tracker.finish(0, pool.clock().now(), x, pool);
            return report;
        }
        pool.set_iteration(-1);
        synchronous_work(pool, blocks);
        Vec g = full_gradient_reference(objective, x);

        Vec a(objective.dimension());
        Vec b(objective.dimension());
        while (!tracker.budget_hit(k, pool.clock().now()))
        {
            const double available = pool.clock().now();
            Vec previous = x;
            axpy(-gamma, g, x);
            pool.set_iteration(k);
            if (coin.bernoulli(p))
            {
                synchronous_work(pool, blocks);
                g = full_gradient_reference(objective, x);
            }
            else
            {
                const Sampler::Draw draw = sampler.draw(S);
                std::vector<std::size_t> owned(n, 0);
                for (std::size_t idx : draw.indices)
                {
                    ++owned[block_owner(m, n, idx)];
                }
                synchronous_work(pool, owned);
                CompensatedSum sum(objective.dimension());
                for (std::size_t t = 0; t < draw.indices.size(); ++t)
                {
                    objective.component_gradient(draw.indices[t], x, a);
                    objective.component_gradient(draw.indices[t], previous, b);
                    for (std::size_t c = 0; c < a.size(); ++c)
                    {
                        a[c] -= b[c];
                    }
                    sum.add(a, draw.weights.empty() ? 1.0 : draw.weights[t]);
                }
                axpy(1.0, sum.result(1.0 / static_cast<double>(S)), g);
            }
            ++k;
            if (tracker.observe(k, available, x))
            {
                break;
            }
        }
        tracker.finish(k, pool.clock().now(), x, pool);
        return report;
    }

    OptimizerReport run_freya_sgd(const FiniteSumObjective& objective, WorkerPool& pool, const SgdParams& params)
    {
        return run_sgd_loop("freya_sgd", objective, pool, params);
    }

    OptimizerReport run_rennala_sgd(const FiniteSumObjective& objective, WorkerPool& pool, const SgdParams& params)
    {
        return run_sgd_loop("rennala_sgd", objective, pool, params);
    }

    OptimizerReport run_asynchronous_sgd(const FiniteSumObjective& objective, WorkerPool& pool,
                                         const AsyncSgdParams& params)
    {
        if (!(params.gamma > 0.0))
        {
            throw std::invalid_argument("stepsize must be positive");
        }
        const std::size_t m = objective.components();
        const std::size_t n = pool.workers();

        OptimizerReport report;
        report.algorithm = "asynchronous_sgd";
        report.gamma = params.gamma;
        report.S = 1;
        Tracker tracker(objective, params.stop, report);

        Vec x = objective.initial_point();
        long k = 0;
        if (tracker.observe(0, pool.clock().now(), x))
        {
            tracker.finish(0, pool.clock().now(), x, pool);
            return report;
        }

        pool.set_iteration(0);
        if (!pool.model().has_finite_worker(0))
        {
            throw std::runtime_error("cannot make progress: every worker has infinite compute time");
        }
        std::vector<Vec> snapshot(n, x);
        std::vector<long> version(n, 0);
        pool.begin_phase();
        for (WorkerId w = 0; w < n; ++w)
        {
            pool.dispatch(w, pool.index_stream(w).below(m));
        }
        Vec grad(objective.dimension());
        while (!tracker.budget_hit(k, pool.clock().now()))
        {
            const auto c = pool.wait();
            if (!c)
            {
                throw std::runtime_error("cannot make progress: no task can complete");
            }
            objective.component_gradient(c->task, snapshot[c->worker], grad);
            axpy(-params.gamma, grad, x);
            report.max_delay = std::max(report.max_delay, static_cast<std::size_t>(k - version[c->worker]));
            ++k;
            pool.end_phase();
            snapshot[c->worker] = x;
            version[c->worker] = k;
            pool.set_iteration(k);
            pool.begin_phase(false);
            pool.dispatch(c->worker, pool.index_stream(c->worker).below(m));
            if (tracker.observe(k, pool.clock().now(), x))
            {
                break;
            }
        }
        tracker.finish(k, pool.clock().now(), x, pool);
        return report;
    }

    OptimizerReport run_gd_baselines(const FiniteSumObjective& objective, WorkerPool& pool, GdVariant variant,
                                     const GdParams& params)
    {
        double gamma = 0.0;
        if (params.gamma)
        {
            gamma = *params.gamma;
        }
        else
        {
            gamma = 1.0 / require_L_minus(objective.smoothness());
        }
        if (!(gamma > 0.0))
        {
            throw std::invalid_argument("stepsize must be positive");
        }
        const std::size_t m = objective.components();
        const std::size_t n = pool.workers();

        OptimizerReport report;
        report.algorithm = variant == GdVariant::Hero ? "hero_gd" : "soviet_gd";
        report.gamma = gamma;
        report.S = m;
        Tracker tracker(objective, params.stop, report);

        std::vector<std::size_t> counts;
        if (variant == GdVariant::Hero)
        {
            // The fastest worker according to the preprocessing bounds.
            const std::vector<double> taus = pool.model().bounds(-1);
            const auto fastest = static_cast<std::size_t>(std::min_element(taus.begin(), taus.end()) - taus.begin());
            counts.assign(n, 0);
            counts[fastest] = m;
        }
        else
        {
            counts = block_sizes(m, n);
        }

        Vec x = objective.initial_point();
        long k = 0;
        if (!tracker.observe(0, pool.clock().now(), x))
        {
            while (!tracker.budget_hit(k, pool.clock().now()))
            {
                pool.set_iteration(k);
                synchronous_work(pool, counts);
                const Vec g = full_gradient_reference(objective, x);
                axpy(-gamma, g, x);
                ++k;
                if (tracker.observe(k, pool.clock().now(), x))
                {
                    break;
                }
            }
        }
        tracker.finish(k, pool.clock().now(), x, pool);
        return report;
    }
}
