#pragma once

#include "freya/objectives.hpp"
#include "freya/rng.hpp"
#include "freya/simclock.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace freya
{
    /// Result of one collection phase.
    struct CollectionResult
    {
        Vec g;
        double simulated_duration = 0.0;
        /// Completed tasks per worker during the phase.
        std::vector<std::uint64_t> oracle_calls;
        /// Samples folded into g.
        std::size_t aggregated = 0;
        /// Completed tasks whose result was discarded (duplicates).
        std::size_t wasted_calls = 0;

        std::uint64_t total_calls() const;
    };

    /// Exact full gradient (1/m) sum_i grad f_i(x). Every worker starts on a
    /// uniform index from [m]; a finishing worker is re-assigned a uniform
    /// index among those not yet collected. Ends once all m indices arrived.
    CollectionResult compute_gradient(const FiniteSumObjective& objective, std::span<const double> x,
                                      WorkerPool& pool);

    /// (1/S) sum over the first S arrivals of grad f_j(x) - grad f_j(y),
    /// indices drawn uniformly with replacement. Duration <= 4 t*(S).
    CollectionResult compute_batch_difference(std::size_t batch, const FiniteSumObjective& objective,
                                              std::span<const double> x, std::span<const double> y,
                                              WorkerPool& pool);

    /// (1/S) sum over the first S arrivals of grad f_j(x). Duration <= 2 t*(S).
    CollectionResult compute_batch(std::size_t batch, const FiniteSumObjective& objective,
                                   std::span<const double> x, WorkerPool& pool);

    /// (1/|S|) sum_{i in S} w_i grad f_i(x) for a given multiset S, each
    /// element collected exactly once. `weights` is either empty (all ones)
    /// or aligned with `multiset`; copies of the same index must carry the
    /// same weight.
    CollectionResult compute_batch_any_sampling(std::span<const std::size_t> multiset,
                                                const FiniteSumObjective& objective,
                                                std::span<const double> x, WorkerPool& pool,
                                                std::span<const double> weights = {});

    /// Multiset version of compute_batch_difference.
    CollectionResult compute_batch_difference_any_sampling(std::span<const std::size_t> multiset,
                                                           const FiniteSumObjective& objective,
                                                           std::span<const double> x, std::span<const double> y,
                                                           WorkerPool& pool,
                                                           std::span<const double> weights = {});

    /// Minibatch index sampler over [m].
    class Sampler
    {
    public:
        enum class Kind
        {
            Uniform,
            Nice,
            Importance,
        };

        struct Draw
        {
            std::vector<std::size_t> indices;
            /// Per-index reweighting making the batch mean unbiased; empty
            /// when every weight is 1.
            std::vector<double> weights;
        };

        static Sampler uniform(std::size_t m, std::uint64_t seed);
        static Sampler nice(std::size_t m, std::uint64_t seed);
        /// Index j drawn with probability L_j / sum L.
        static Sampler importance(std::span<const double> component_smoothness, std::uint64_t seed);

        Kind kind() const noexcept { return kind_; }
        std::size_t population() const noexcept { return m_; }

        Draw draw(std::size_t batch);

    private:
        Sampler(Kind kind, std::size_t m, std::uint64_t seed) : kind_(kind), m_(m), rng_(seed) {}

        Kind kind_;
        std::size_t m_;
        Rng rng_;
        std::vector<double> cumulative_;
        std::vector<double> weights_;
    };

    const char* to_string(Sampler::Kind kind);
    Sampler::Kind sampler_kind_from_string(const std::string& name);
}
