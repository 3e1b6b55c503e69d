#include "freya/simclock.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace freya
{
    namespace
    {
        void validate_times(const std::vector<double>& taus, const char* what)
        {
            if (taus.empty())
            {
                throw std::invalid_argument(std::string(what) + ": need at least one worker");
            }
            for (double t : taus)
            {
                if (std::isnan(t) || t < 0.0)
                {
                    throw std::invalid_argument(std::string(what) + ": times must lie in [0, inf]");
                }
            }
        }
    }

    WorkerTimeModel WorkerTimeModel::fixed(std::vector<double> taus)
    {
        validate_times(taus, "static time model");
        WorkerTimeModel model(Mode::Static, taus.size());
        model.rows_.push_back(std::move(taus));
        return model;
    }

    WorkerTimeModel WorkerTimeModel::schedule(std::vector<std::vector<double>> rows, bool hold_last)
    {
        if (rows.empty())
        {
            throw std::invalid_argument("dynamic time model: schedule has no rows");
        }
        const std::size_t n = rows.front().size();
        for (const auto& row : rows)
        {
            validate_times(row, "dynamic time model");
            if (row.size() != n)
            {
                throw std::invalid_argument("dynamic time model: every row must list all workers");
            }
        }
        WorkerTimeModel model(Mode::Dynamic, n);
        model.rows_ = std::move(rows);
        model.hold_last_ = hold_last;
        return model;
    }

    WorkerTimeModel WorkerTimeModel::stochastic(std::vector<double> bounds, double jitter)
    {
        validate_times(bounds, "stochastic time model");
        if (!(jitter >= 0.0 && jitter <= 1.0))
        {
            throw std::invalid_argument("stochastic time model: jitter must lie in [0, 1]");
        }
        WorkerTimeModel model(Mode::Stochastic, bounds.size());
        model.rows_.push_back(std::move(bounds));
        model.jitter_ = jitter;
        return model;
    }

    const std::vector<double>& WorkerTimeModel::row(long iteration) const
    {
        if (mode_ != Mode::Dynamic)
        {
            return rows_.front();
        }
        if (iteration < -1)
        {
            throw std::out_of_range("dynamic time model: iteration must be >= -1");
        }
        const auto index = static_cast<std::size_t>(iteration + 1);
        if (index >= rows_.size())
        {
            if (hold_last_)
            {
                return rows_.back();
            }
            throw std::out_of_range("dynamic time model: no schedule entry for iteration " +
                                    std::to_string(iteration));
        }
        return rows_[index];
    }

    double WorkerTimeModel::bound(WorkerId worker, long iteration) const
    {
        if (worker >= workers_)
        {
            throw std::out_of_range("worker id " + std::to_string(worker) + " out of range");
        }
        return row(iteration)[worker];
    }

    std::vector<double> WorkerTimeModel::bounds(long iteration) const { return row(iteration); }

    double WorkerTimeModel::task_duration(WorkerId worker, long iteration, Rng& rng) const
    {
        const double tau = bound(worker, iteration);
        if (mode_ != Mode::Stochastic || std::isinf(tau) || tau == 0.0)
        {
            return tau;
        }
        return tau * (1.0 - jitter_ * rng.uniform());
    }

    double WorkerTimeModel::batch_duration(WorkerId worker, long iteration, std::size_t count, Rng& rng) const
    {
        if (count == 0)
        {
            return 0.0;
        }
        const double tau = bound(worker, iteration);
        if (mode_ != Mode::Stochastic)
        {
            return std::isinf(tau) ? tau : tau * static_cast<double>(count);
        }
        double total = 0.0;
        for (std::size_t c = 0; c < count; ++c)
        {
            total += task_duration(worker, iteration, rng);
        }
        return total;
    }

    bool WorkerTimeModel::has_finite_worker(long iteration) const
    {
        const auto& r = row(iteration);
        return std::any_of(r.begin(), r.end(), [](double t) { return std::isfinite(t); });
    }

    // ------------------------------------------------------------------

    SimClock::SimClock(std::size_t workers) : busy_(workers, false)
    {
        if (workers == 0)
        {
            throw std::invalid_argument("SimClock: need at least one worker");
        }
    }

    void SimClock::assign(WorkerId worker, std::size_t task, double duration)
    {
        if (worker >= busy_.size())
        {
            throw std::out_of_range("SimClock::assign: worker id out of range");
        }
        if (busy_[worker])
        {
            throw std::logic_error("SimClock::assign: worker " + std::to_string(worker) + " is busy");
        }
        if (std::isnan(duration) || duration < 0.0)
        {
            throw std::invalid_argument("SimClock::assign: duration must lie in [0, inf]");
        }
        busy_[worker] = true;
        ++dispatches_;
        const std::uint64_t seq = sequence_++;
        if (std::isinf(duration))
        {
            return;
        }
        queue_.push(Event{now_ + duration, seq, worker, task});
    }

    std::optional<Completion> SimClock::next_completion()
    {
        if (queue_.empty())
        {
            return std::nullopt;
        }
        const Event e = queue_.top();
        queue_.pop();
        now_ = std::max(now_, e.time);
        busy_[e.worker] = false;
        ++completions_;
        return Completion{now_, e.worker, e.task};
    }

    void SimClock::release_all()
    {
        queue_ = {};
        std::fill(busy_.begin(), busy_.end(), false);
    }

    void SimClock::advance(double seconds)
    {
        if (std::isnan(seconds) || seconds < 0.0)
        {
            throw std::invalid_argument("SimClock::advance: time cannot go backwards");
        }
        now_ += seconds;
    }

    // ------------------------------------------------------------------

    std::string RunTrace::to_csv() const
    {
        std::ostringstream out;
        out.precision(17);
        out << "k,t_start,t_end,dispatches,completions\n";
        for (const auto& r : iterations)
        {
            out << r.iteration << ',' << r.t_start << ',' << r.t_end << ',' << r.dispatches << ','
                << r.completions << '\n';
        }
        return out.str();
    }

    nlohmann::json RunTrace::to_json() const
    {
        nlohmann::json j;
        j["total_time"] = total_time;
        j["worker_calls"] = worker_calls;
        j["worker_busy_time"] = worker_busy_time;
        auto& its = j["iterations"] = nlohmann::json::array();
        for (const auto& r : iterations)
        {
            nlohmann::json e{{"k", r.iteration},
                             {"t_start", r.t_start},
                             {"t_end", r.t_end},
                             {"dispatches", r.dispatches},
                             {"completions", r.completions}};
            if (!r.worker_calls.empty())
            {
                e["worker_calls"] = r.worker_calls;
            }
            its.push_back(std::move(e));
        }
        return j;
    }

    // ------------------------------------------------------------------

    WorkerPool::WorkerPool(WorkerTimeModel model, std::uint64_t seed)
        : model_(std::move(model)), clock_(model_.workers()), phase_calls_(model_.workers(), 0),
          pending_task_time_(model_.workers(), 0.0)
    {
        const std::size_t n = model_.workers();
        index_streams_.reserve(n);
        time_streams_.reserve(n);
        for (std::size_t w = 0; w < n; ++w)
        {
            index_streams_.emplace_back(derive_seed(seed, w, StreamPurpose::WorkerIndex));
            time_streams_.emplace_back(derive_seed(seed, w, StreamPurpose::WorkerTime));
        }
        trace_.worker_calls.assign(n, 0);
        trace_.worker_busy_time.assign(n, 0.0);
    }

    double WorkerPool::draw_duration(WorkerId worker)
    {
        return model_.task_duration(worker, iteration_, time_streams_.at(worker));
    }

    void WorkerPool::dispatch(WorkerId worker, std::size_t task)
    {
        const double d = draw_duration(worker);
        clock_.assign(worker, task, d);
        pending_task_time_[worker] = d;
    }

    std::optional<Completion> WorkerPool::wait()
    {
        auto c = clock_.next_completion();
        if (c)
        {
            ++phase_calls_[c->worker];
            ++trace_.worker_calls[c->worker];
            trace_.worker_busy_time[c->worker] += pending_task_time_[c->worker];
        }
        return c;
    }

    void WorkerPool::begin_phase(bool release)
    {
        if (release)
        {
            clock_.release_all();
        }
        phase_start_ = clock_.now();
        phase_dispatch_base_ = clock_.dispatches();
        phase_completion_base_ = clock_.completions();
        std::fill(phase_calls_.begin(), phase_calls_.end(), 0);
    }

    double WorkerPool::end_phase()
    {
        IterationRecord r;
        r.iteration = iteration_;
        r.t_start = phase_start_;
        r.t_end = clock_.now();
        r.dispatches = clock_.dispatches() - phase_dispatch_base_;
        r.completions = clock_.completions() - phase_completion_base_;
        if (trace_.record_worker_calls)
        {
            r.worker_calls = phase_calls_;
        }
        trace_.total_time = clock_.now();
        trace_.iterations.push_back(std::move(r));
        return clock_.now() - phase_start_;
    }

    double WorkerPool::synchronous_phase(double seconds, const std::vector<std::uint64_t>& calls_per_worker,
                                         const std::vector<double>& busy_per_worker)
    {
        begin_phase();
        clock_.advance(seconds);
        std::uint64_t total = 0;
        for (std::size_t w = 0; w < calls_per_worker.size(); ++w)
        {
            phase_calls_[w] = calls_per_worker[w];
            trace_.worker_calls[w] += calls_per_worker[w];
            trace_.worker_busy_time[w] += busy_per_worker[w];
            total += calls_per_worker[w];
        }
        IterationRecord r;
        r.iteration = iteration_;
        r.t_start = phase_start_;
        r.t_end = clock_.now();
        r.dispatches = total;
        r.completions = total;
        if (trace_.record_worker_calls)
        {
            r.worker_calls = phase_calls_;
        }
        trace_.total_time = clock_.now();
        trace_.iterations.push_back(std::move(r));
        return seconds;
    }
}
