#include "freya/collectors.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace freya
{
    std::uint64_t CollectionResult::total_calls() const
    {
        return std::accumulate(oracle_calls.begin(), oracle_calls.end(), std::uint64_t{0});
    }

    namespace
    {
        void require_progress(const WorkerPool& pool)
        {
            if (!pool.model().has_finite_worker(pool.iteration()))
            {
                throw std::runtime_error("cannot make progress: every worker has infinite compute time");
            }
        }

        Completion wait_or_throw(WorkerPool& pool)
        {
            auto c = pool.wait();
            if (!c)
            {
                throw std::runtime_error("cannot make progress: no task can complete");
            }
            return *c;
        }

        // Evaluates grad f_p(x) - grad f_p(y) into out.
        class DifferenceEval
        {
        public:
            DifferenceEval(const FiniteSumObjective& objective, std::span<const double> x,
                           std::span<const double> y)
                : objective_(objective), x_(x), y_(y), scratch_(objective.dimension())
            {
            }

            void operator()(std::size_t p, std::span<double> out)
            {
                objective_.component_gradient(p, x_, out);
                objective_.component_gradient(p, y_, scratch_);
                for (std::size_t k = 0; k < out.size(); ++k)
                {
                    out[k] -= scratch_[k];
                }
            }

        private:
            const FiniteSumObjective& objective_;
            std::span<const double> x_;
            std::span<const double> y_;
            Vec scratch_;
        };

        class GradientEval
        {
        public:
            GradientEval(const FiniteSumObjective& objective, std::span<const double> x)
                : objective_(objective), x_(x)
            {
            }

            void operator()(std::size_t p, std::span<double> out) { objective_.component_gradient(p, x_, out); }

        private:
            const FiniteSumObjective& objective_;
            std::span<const double> x_;
        };

        void check_point(const FiniteSumObjective& objective, std::span<const double> x)
        {
            if (x.size() != objective.dimension())
            {
                throw std::invalid_argument("point dimension does not match the objective");
            }
        }

        // First `batch` arrivals of uniform-with-replacement draws.
        template <typename Eval>
        CollectionResult collect_with_replacement(std::size_t batch, std::size_t m, std::size_t dim,
                                                  WorkerPool& pool, Eval eval)
        {
            if (batch == 0)
            {
                throw std::invalid_argument("batch size must be at least 1");
            }
            require_progress(pool);

            const std::size_t n = pool.workers();
            pool.begin_phase();
            for (WorkerId w = 0; w < n; ++w)
            {
                pool.dispatch(w, pool.index_stream(w).below(m));
            }

            CollectionResult result;
            result.oracle_calls.assign(n, 0);
            CompensatedSum sum(dim);
            Vec value(dim);
            while (result.aggregated < batch)
            {
                const Completion c = wait_or_throw(pool);
                ++result.oracle_calls[c.worker];
                eval(c.task, value);
                sum.add(value);
                ++result.aggregated;
                // The last arrival closes the phase; nothing left to hand out.
                if (result.aggregated < batch)
                {
                    pool.dispatch(c.worker, pool.index_stream(c.worker).below(m));
                }
            }
            result.simulated_duration = pool.end_phase();
            result.g = sum.result(1.0 / static_cast<double>(batch));
            return result;
        }

        // Bookkeeping for "sample j from S \ M uniformly" over a multiset.
        // Every copy of an index occupies its own slot; copies are removed
        // from the top of their value's slot range.
        class RemainingMultiset
        {
        public:
            RemainingMultiset(std::span<const std::size_t> multiset, std::size_t m)
            {
                if (multiset.empty())
                {
                    throw std::invalid_argument("multiset must be nonempty");
                }
                std::vector<std::size_t> sorted(multiset.begin(), multiset.end());
                std::sort(sorted.begin(), sorted.end());
                if (sorted.back() >= m)
                {
                    throw std::out_of_range("multiset index out of range");
                }
                slot_value_.resize(sorted.size());
                for (std::size_t s = 0; s < sorted.size(); ++s)
                {
                    if (s == 0 || sorted[s] != sorted[s - 1])
                    {
                        values_.push_back(sorted[s]);
                        first_slot_.push_back(s);
                        left_.push_back(0);
                    }
                    slot_value_[s] = values_.size() - 1;
                    ++left_.back();
                }
                remaining_.resize(sorted.size());
                std::iota(remaining_.begin(), remaining_.end(), std::size_t{0});
                position_ = remaining_;
            }

            std::size_t total() const noexcept { return slot_value_.size(); }
            bool empty() const noexcept { return remaining_.empty(); }
            std::size_t component(std::size_t value_id) const { return values_[value_id]; }
            std::size_t distinct() const noexcept { return values_.size(); }
            std::size_t first_slot(std::size_t value_id) const { return first_slot_[value_id]; }

            // Uniform element of the full multiset (value id).
            std::size_t draw_any(Rng& rng) const { return slot_value_[rng.below(total())]; }

            // Uniform element of the remaining multiset (value id).
            std::size_t draw_remaining(Rng& rng) const
            {
                return slot_value_[remaining_[rng.below(remaining_.size())]];
            }

            // Removes one copy of value_id; false if none is left.
            bool take(std::size_t value_id)
            {
                if (left_[value_id] == 0)
                {
                    return false;
                }
                const std::size_t slot = first_slot_[value_id] + left_[value_id] - 1;
                --left_[value_id];
                const std::size_t pos = position_[slot];
                const std::size_t moved = remaining_.back();
                remaining_[pos] = moved;
                position_[moved] = pos;
                remaining_.pop_back();
                return true;
            }

        private:
            std::vector<std::size_t> values_;
            std::vector<std::size_t> first_slot_;
            std::vector<std::size_t> left_;
            std::vector<std::size_t> slot_value_;
            std::vector<std::size_t> remaining_;
            std::vector<std::size_t> position_;
        };

        template <typename Eval>
        CollectionResult collect_multiset(std::span<const std::size_t> multiset, std::span<const double> weights,
                                          std::size_t m, std::size_t dim, WorkerPool& pool, Eval eval)
        {
            RemainingMultiset remaining(multiset, m);
            if (!weights.empty() && weights.size() != multiset.size())
            {
                throw std::invalid_argument("weights must be empty or aligned with the multiset");
            }
            std::vector<double> value_weight(remaining.distinct(), 1.0);
            if (!weights.empty())
            {
                std::vector<bool> seen(remaining.distinct(), false);
                std::vector<std::size_t> order(multiset.size());
                std::iota(order.begin(), order.end(), std::size_t{0});
                std::sort(order.begin(), order.end(),
                          [&](std::size_t a, std::size_t b) { return multiset[a] < multiset[b]; });
                std::size_t id = 0;
                for (std::size_t k = 0; k < order.size(); ++k)
                {
                    if (k > 0 && multiset[order[k]] != multiset[order[k - 1]])
                    {
                        ++id;
                    }
                    const double w = weights[order[k]];
                    if (seen[id] && value_weight[id] != w)
                    {
                        throw std::invalid_argument("copies of an index must share one weight");
                    }
                    seen[id] = true;
                    value_weight[id] = w;
                }
            }
            require_progress(pool);

            const std::size_t n = pool.workers();
            pool.begin_phase();
            for (WorkerId w = 0; w < n; ++w)
            {
                pool.dispatch(w, remaining.draw_any(pool.index_stream(w)));
            }

            CollectionResult result;
            result.oracle_calls.assign(n, 0);
            CompensatedSum sum(dim);
            Vec value(dim);
            while (!remaining.empty())
            {
                const Completion c = wait_or_throw(pool);
                ++result.oracle_calls[c.worker];
                if (remaining.take(c.task))
                {
                    eval(remaining.component(c.task), value);
                    sum.add(value, value_weight[c.task]);
                    ++result.aggregated;
                }
                else
                {
                    ++result.wasted_calls;
                }
                if (remaining.empty())
                {
                    break;
                }
                pool.dispatch(c.worker, remaining.draw_remaining(pool.index_stream(c.worker)));
            }
            result.simulated_duration = pool.end_phase();
            result.g = sum.result(1.0 / static_cast<double>(remaining.total()));
            return result;
        }
    }

    CollectionResult compute_gradient(const FiniteSumObjective& objective, std::span<const double> x,
                                      WorkerPool& pool)
    {
        std::vector<std::size_t> all(objective.components());
        std::iota(all.begin(), all.end(), std::size_t{0});
        return compute_batch_any_sampling(all, objective, x, pool);
    }

    CollectionResult compute_batch_difference(std::size_t batch, const FiniteSumObjective& objective,
                                              std::span<const double> x, std::span<const double> y,
                                              WorkerPool& pool)
    {
        check_point(objective, x);
        check_point(objective, y);
        return collect_with_replacement(batch, objective.components(), objective.dimension(), pool,
                                        DifferenceEval(objective, x, y));
    }

    CollectionResult compute_batch(std::size_t batch, const FiniteSumObjective& objective, std::span<const double> x,
                                   WorkerPool& pool)
    {
        check_point(objective, x);
        return collect_with_replacement(batch, objective.components(), objective.dimension(), pool,
                                        GradientEval(objective, x));
    }

    CollectionResult compute_batch_any_sampling(std::span<const std::size_t> multiset,
                                                const FiniteSumObjective& objective, std::span<const double> x,
                                                WorkerPool& pool, std::span<const double> weights)
    {
        check_point(objective, x);
        return collect_multiset(multiset, weights, objective.components(), objective.dimension(), pool,
                                GradientEval(objective, x));
    }

    CollectionResult compute_batch_difference_any_sampling(std::span<const std::size_t> multiset,
                                                           const FiniteSumObjective& objective,
                                                           std::span<const double> x, std::span<const double> y,
                                                           WorkerPool& pool, std::span<const double> weights)
    {
        check_point(objective, x);
        check_point(objective, y);
        return collect_multiset(multiset, weights, objective.components(), objective.dimension(), pool,
                                DifferenceEval(objective, x, y));
    }

    // ------------------------------------------------------------------

    Sampler Sampler::uniform(std::size_t m, std::uint64_t seed)
    {
        if (m == 0)
        {
            throw std::invalid_argument("sampler: population must be nonempty");
        }
        return Sampler(Kind::Uniform, m, seed);
    }

    Sampler Sampler::nice(std::size_t m, std::uint64_t seed)
    {
        if (m == 0)
        {
            throw std::invalid_argument("sampler: population must be nonempty");
        }
        return Sampler(Kind::Nice, m, seed);
    }

    Sampler Sampler::importance(std::span<const double> component_smoothness, std::uint64_t seed)
    {
        if (component_smoothness.empty())
        {
            throw std::invalid_argument("importance sampling requires per-component smoothness constants");
        }
        Sampler s(Kind::Importance, component_smoothness.size(), seed);
        s.cumulative_.reserve(component_smoothness.size());
        CompensatedScalar total;
        for (double l : component_smoothness)
        {
            if (!(l >= 0.0) || !std::isfinite(l))
            {
                throw std::invalid_argument("importance sampling: constants must be finite and nonnegative");
            }
            total.add(l);
            s.cumulative_.push_back(total.value());
        }
        const double sum = total.value();
        if (!(sum > 0.0))
        {
            throw std::invalid_argument("importance sampling: constants sum to zero");
        }
        const double mean = sum / static_cast<double>(component_smoothness.size());
        s.weights_.reserve(component_smoothness.size());
        for (double l : component_smoothness)
        {
            s.weights_.push_back(l > 0.0 ? mean / l : 0.0);
        }
        return s;
    }

    Sampler::Draw Sampler::draw(std::size_t batch)
    {
        if (batch == 0)
        {
            throw std::invalid_argument("sampler: batch size must be at least 1");
        }
        Draw out;
        out.indices.reserve(batch);
        switch (kind_)
        {
        case Kind::Uniform:
            for (std::size_t k = 0; k < batch; ++k)
            {
                out.indices.push_back(rng_.below(m_));
            }
            break;
        case Kind::Nice:
        {
            if (batch > m_)
            {
                throw std::invalid_argument("nice sampling: batch size exceeds population");
            }
            // Floyd's algorithm: every subset of size `batch` is equally likely.
            std::unordered_set<std::size_t> chosen;
            chosen.reserve(batch * 2);
            for (std::size_t j = m_ - batch; j < m_; ++j)
            {
                const std::size_t t = rng_.below(j + 1);
                const std::size_t pick = chosen.insert(t).second ? t : j;
                if (pick == j)
                {
                    chosen.insert(j);
                }
                out.indices.push_back(pick);
            }
            break;
        }
        case Kind::Importance:
        {
            const double total = cumulative_.back();
            out.weights.reserve(batch);
            for (std::size_t k = 0; k < batch; ++k)
            {
                const double u = rng_.uniform() * total;
                auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
                if (it == cumulative_.end())
                {
                    --it;
                }
                // Skip zero-mass entries that share a cumulative value with their successor.
                auto j = static_cast<std::size_t>(it - cumulative_.begin());
                out.indices.push_back(j);
                out.weights.push_back(weights_[j]);
            }
            break;
        }
        }
        return out;
    }

    const char* to_string(Sampler::Kind kind)
    {
        switch (kind)
        {
        case Sampler::Kind::Uniform:
            return "uniform";
        case Sampler::Kind::Nice:
            return "nice";
        case Sampler::Kind::Importance:
            return "importance";
        }
        return "unknown";
    }

    Sampler::Kind sampler_kind_from_string(const std::string& name)
    {
        if (name == "uniform")
        {
            return Sampler::Kind::Uniform;
        }
        if (name == "nice")
        {
            return Sampler::Kind::Nice;
        }
        if (name == "importance")
        {
            return Sampler::Kind::Importance;
        }
        throw std::invalid_argument("unknown sampler '" + name + "'");
    }
}
