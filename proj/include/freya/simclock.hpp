#pragma once

#include "freya/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include <json.hpp>

namespace freya
{
    using WorkerId = std::size_t;

    inline constexpr double kNever = std::numeric_limits<double>::infinity();

    /// Per-worker time to compute one component gradient.
    ///
    /// Static: worker i always takes taus[i].
    /// Dynamic: row k+1 of the schedule holds the times for optimizer
    ///   iteration k; row 0 (k = -1) is the preprocessing full gradient.
    /// Stochastic: worker i takes bound[i] * (1 - jitter * u), u ~ U[0, 1),
    ///   so every draw stays within (1 - jitter) * bound[i] .. bound[i].
    ///
    /// Entries are in [0, inf]; inf means the worker never completes.
    class WorkerTimeModel
    {
    public:
        enum class Mode
        {
            Static,
            Dynamic,
            Stochastic,
        };

        static WorkerTimeModel fixed(std::vector<double> taus);
        static WorkerTimeModel schedule(std::vector<std::vector<double>> rows, bool hold_last = false);
        static WorkerTimeModel stochastic(std::vector<double> bounds, double jitter);

        Mode mode() const noexcept { return mode_; }
        std::size_t workers() const noexcept { return workers_; }

        /// Upper bound tau_i^k on one task of worker i during iteration k.
        double bound(WorkerId worker, long iteration) const;
        std::vector<double> bounds(long iteration) const;

        /// Time of one task. `rng` is the worker's time stream and is only
        /// consumed in stochastic mode.
        double task_duration(WorkerId worker, long iteration, Rng& rng) const;

        /// Time for `count` back-to-back tasks of one worker (synchronous
        /// baselines). Static and dynamic modes multiply, stochastic sums draws.
        double batch_duration(WorkerId worker, long iteration, std::size_t count, Rng& rng) const;

        bool has_finite_worker(long iteration) const;

    private:
        WorkerTimeModel(Mode mode, std::size_t workers) : mode_(mode), workers_(workers) {}
        const std::vector<double>& row(long iteration) const;

        Mode mode_;
        std::size_t workers_;
        std::vector<std::vector<double>> rows_;
        bool hold_last_ = false;
        double jitter_ = 0.0;
    };

    struct Completion
    {
        double time;
        WorkerId worker;
        std::size_t task;
    };

    /// Discrete-event clock for n workers. Events pop in ascending
    /// (completion time, assignment sequence number) order.
    class SimClock
    {
    public:
        explicit SimClock(std::size_t workers);

        double now() const noexcept { return now_; }
        std::size_t workers() const noexcept { return busy_.size(); }
        bool busy(WorkerId worker) const { return busy_.at(worker); }
        std::size_t pending() const noexcept { return queue_.size(); }

        /// Gives `worker` a task finishing `duration` seconds from now.
        /// An infinite duration parks the worker: it stays busy and no event
        /// is enqueued.
        void assign(WorkerId worker, std::size_t task, double duration);

        /// Pops the earliest completion, advances now to it and frees the
        /// worker. Empty optional when nothing is in flight.
        std::optional<Completion> next_completion();

        /// Drops every in-flight task and frees all workers.
        void release_all();

        /// Moves time forward without events (synchronous phases).
        void advance(double seconds);

        std::uint64_t dispatches() const noexcept { return dispatches_; }
        std::uint64_t completions() const noexcept { return completions_; }

    private:
        struct Event
        {
            double time;
            std::uint64_t sequence;
            WorkerId worker;
            std::size_t task;

            bool operator>(const Event& other) const noexcept
            {
                if (time != other.time)
                {
                    return time > other.time;
                }
                return sequence > other.sequence;
            }
        };

        double now_ = 0.0;
        std::uint64_t sequence_ = 0;
        std::uint64_t dispatches_ = 0;
        std::uint64_t completions_ = 0;
        std::vector<bool> busy_;
        std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
    };

    struct IterationRecord
    {
        long iteration = 0;
        double t_start = 0.0;
        double t_end = 0.0;
        std::uint64_t dispatches = 0;
        std::uint64_t completions = 0;
        /// Oracle calls per worker during this phase; empty unless
        /// per-worker recording is enabled on the trace.
        std::vector<std::uint64_t> worker_calls;
    };

    struct RunTrace
    {
        std::vector<IterationRecord> iterations;
        std::vector<std::uint64_t> worker_calls;
        /// Sum over completed tasks of their durations, per worker.
        std::vector<double> worker_busy_time;
        double total_time = 0.0;
        bool record_worker_calls = false;

        std::string to_csv() const;
        nlohmann::json to_json() const;
    };

    /// n simulated workers: the clock, the time model, one index stream and
    /// one time stream per worker (keyed by worker id), and the run trace.
    /// The optimizer sets the iteration counter that dynamic models index by.
    class WorkerPool
    {
    public:
        WorkerPool(WorkerTimeModel model, std::uint64_t seed);

        SimClock& clock() noexcept { return clock_; }
        const SimClock& clock() const noexcept { return clock_; }
        const WorkerTimeModel& model() const noexcept { return model_; }
        std::size_t workers() const noexcept { return model_.workers(); }

        Rng& index_stream(WorkerId worker) { return index_streams_.at(worker); }
        Rng& time_stream(WorkerId worker) { return time_streams_.at(worker); }

        void set_iteration(long k) noexcept { iteration_ = k; }
        long iteration() const noexcept { return iteration_; }

        /// Draws the duration of one task for `worker` at the current iteration.
        double draw_duration(WorkerId worker);

        /// Asks `worker` to compute `task`; the duration is drawn from the model.
        void dispatch(WorkerId worker, std::size_t task);

        /// Waits for the next completion and books it in the trace.
        std::optional<Completion> wait();

        /// Phase boundary: starts counting a new trace record. Frees every
        /// worker (dropping in-flight tasks) unless `release` is false.
        void begin_phase(bool release = true);
        /// Closes the phase, appends an IterationRecord and returns its duration.
        double end_phase();
        /// Synchronous phase of fixed length (no events); used by the
        /// equal-allocation baselines.
        double synchronous_phase(double seconds, const std::vector<std::uint64_t>& calls_per_worker,
                                 const std::vector<double>& busy_per_worker);

        RunTrace& trace() noexcept { return trace_; }
        const RunTrace& trace() const noexcept { return trace_; }

    private:
        WorkerTimeModel model_;
        SimClock clock_;
        std::vector<Rng> index_streams_;
        std::vector<Rng> time_streams_;
        long iteration_ = -1;

        RunTrace trace_;
        double phase_start_ = 0.0;
        std::uint64_t phase_dispatch_base_ = 0;
        std::uint64_t phase_completion_base_ = 0;
        std::vector<std::uint64_t> phase_calls_;
        std::vector<double> pending_task_time_;
    };
}
