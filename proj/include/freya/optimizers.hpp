#pragma once

#include "freya/collectors.hpp"
#include "freya/objectives.hpp"
#include "freya/rng.hpp"
#include "freya/simclock.hpp"
#include "freya/theory.hpp"

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace freya
{
    enum class StopReason
    {
        Iterations,
        Time,
        Epsilon,
        Target,
        Diverged,
    };

    const char* to_string(StopReason reason);

    /// When to stop. At least one of max_iterations, max_time, eps must be set.
    struct StopRule
    {
        /// 0 = unlimited.
        long max_iterations = 0;
        double max_time = std::numeric_limits<double>::infinity();
        /// Stop once ||grad f(x^k)||^2 <= eps at an evaluated iterate; 0 disables.
        double eps = 0.0;
        /// Stop once f(x^k) <= target.
        std::optional<double> target_f;
        /// Evaluate the true gradient every this many iterations (and at the end).
        long eval_every = 1;
    };

    struct TrajectoryPoint
    {
        long k = 0;
        double time = 0.0;
        double grad_norm_sq = 0.0;
        double f_value = 0.0;
    };

    struct OptimizerReport
    {
        std::string algorithm;
        std::vector<TrajectoryPoint> trajectory;
        StopReason stop = StopReason::Iterations;
        long iterations = 0;
        double total_time = 0.0;
        double min_grad_norm_sq = std::numeric_limits<double>::infinity();
        bool reached_eps = false;
        double gamma = 0.0;
        std::size_t S = 0;
        double p = 1.0;
        /// Largest staleness seen by the asynchronous baseline.
        std::size_t max_delay = 0;
        Vec final_x;
        RunTrace trace;

        /// k,time,grad_norm_sq,f_value
        std::string to_csv() const;
        nlohmann::json summary() const;
    };

    // ------------------------------------------------------------------
    // Freya PAGE
    // ------------------------------------------------------------------

    struct PageState
    {
        Vec x;
        Vec g;
        long k = 0;
        double gamma = 0.0;
        double p = 1.0;
        std::size_t S = 1;
        Rng coin;
        double time = 0.0;
    };

    /// g^0 = grad f(x^0) via compute_gradient at iteration -1.
    PageState freya_page_init(const FiniteSumObjective& objective, Vec x0, double gamma, double p, std::size_t S,
                              std::uint64_t seed, WorkerPool& pool);

    /// x^{k+1} = x^k - gamma g^k, then a Bernoulli(p) coin picks a fresh
    /// full gradient or g^k plus a batch difference at (x^{k+1}, x^k). A null
    /// or uniform sampler uses compute_batch_difference; nice and importance
    /// samplers feed the multiset variant.
    CollectionResult freya_page_step(PageState& state, const FiniteSumObjective& objective, WorkerPool& pool,
                                     Sampler* sampler = nullptr);

    struct PageParams
    {
        /// Unset: the stepsize matching the sampler's theory.
        std::optional<double> gamma;
        /// Unset: ceil(sqrt(m)) and 1/sqrt(m).
        std::optional<std::size_t> S;
        std::optional<double> p;
        Sampler::Kind sampler = Sampler::Kind::Uniform;
        StopRule stop;
    };

    /// Resolves S, p and gamma as run_freya_page would.
    PageParams resolve_page_params(const FiniteSumObjective& objective, PageParams params);

    OptimizerReport run_freya_page(const FiniteSumObjective& objective, WorkerPool& pool, PageParams params,
                                   std::uint64_t seed);

    /// Equal-allocation PAGE: contiguous blocks, synchronous phases timed by
    /// the slowest worker's share.
    OptimizerReport run_soviet_page(const FiniteSumObjective& objective, WorkerPool& pool, PageParams params,
                                    std::uint64_t seed);

    // ------------------------------------------------------------------
    // SGD family
    // ------------------------------------------------------------------

    struct SgdParams
    {
        std::optional<double> gamma;
        std::size_t S = 1;
        /// Needed when gamma is unset.
        std::optional<theory::SgdConstants> constants;
        StopRule stop;
    };

    /// x^{k+1} = x^k - gamma compute_batch(S, x^k).
    OptimizerReport run_freya_sgd(const FiniteSumObjective& objective, WorkerPool& pool, const SgdParams& params);

    /// Same loop as run_freya_sgd under its own label.
    OptimizerReport run_rennala_sgd(const FiniteSumObjective& objective, WorkerPool& pool, const SgdParams& params);

    struct AsyncSgdParams
    {
        double gamma = 0.0;
        StopRule stop;
    };

    /// One server update per completion with the gradient the worker
    /// computed at the iterate it last received.
    OptimizerReport run_asynchronous_sgd(const FiniteSumObjective& objective, WorkerPool& pool,
                                         const AsyncSgdParams& params);

    enum class GdVariant
    {
        Hero,
        Soviet,
    };

    struct GdParams
    {
        /// Unset: 1 / L_minus.
        std::optional<double> gamma;
        StopRule stop;
    };

    OptimizerReport run_gd_baselines(const FiniteSumObjective& objective, WorkerPool& pool, GdVariant variant,
                                     const GdParams& params);

    /// Worker w owns [block_start(w), block_start(w + 1)); sizes differ by at most 1.
    std::size_t block_start(std::size_t m, std::size_t n, std::size_t w);
    std::size_t block_owner(std::size_t m, std::size_t n, std::size_t index);
}
