#pragma once

#include "freya/objectives.hpp"
#include "freya/optimizers.hpp"
#include "freya/simclock.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace freya
{
    /// Invalid or inconsistent experiment configuration.
    class ConfigError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    /// Worker times from the mini-language: "const c", "sqrt(i)", "linear"
    /// (or "i"), "file:<path>", or a comma/space separated list. i runs 1..n.
    std::vector<double> parse_taus(const std::string& formula, std::size_t n,
                                   const std::filesystem::path& base_dir = {});

    /// Reads whitespace/comma separated numbers; "inf" is accepted.
    std::vector<double> read_numbers(const std::filesystem::path& path);

    /// {"n", "mode": static|dynamic|stochastic, "taus", "schedule" | "schedule_file",
    ///  "hold_last", "jitter"}
    WorkerTimeModel build_worker_model(const nlohmann::json& spec, const std::filesystem::path& base_dir = {});

    /// {"kind": "quadratic", m, d, lambda, s, seed} | {"kind": "csv", path,
    ///  label_column, has_header, l2} | {"kind": "file", path}
    std::unique_ptr<FiniteSumObjective> build_problem(const nlohmann::json& spec,
                                                      const std::filesystem::path& base_dir = {});

    struct GammaSpec
    {
        enum class Kind
        {
            Fixed,
            Auto,
            Grid,
        };
        Kind kind = Kind::Auto;
        double value = 0.0;
        /// Grid of powers of two 2^lo .. 2^hi.
        int lo = 0;
        int hi = 0;

        std::vector<std::optional<double>> values() const;
    };

    struct AlgorithmSpec
    {
        std::string name;
        /// Output label; defaults to name. Must be unique in a config.
        std::string label;
        GammaSpec gamma;
        std::optional<std::size_t> S;
        std::optional<double> p;
        Sampler::Kind sampler = Sampler::Kind::Uniform;
    };

    /// Names accepted in the "algorithms" list.
    const std::vector<std::string>& registered_algorithms();

    enum class SelectionRule
    {
        MinTerminalF,
        FirstToEps,
    };

    const char* to_string(SelectionRule rule);

    struct ExperimentConfig
    {
        nlohmann::json problem;
        nlohmann::json workers;
        std::vector<AlgorithmSpec> algorithms;
        std::vector<std::uint64_t> seeds{0};
        StopRule budget;
        SelectionRule selection = SelectionRule::MinTerminalF;
        /// First-to-target threshold as a fraction of f(x^0) - f_best.
        std::optional<double> target_suboptimality;
        std::optional<double> trailing_window;
        std::filesystem::path output_dir;
        std::size_t threads = 1;
        std::filesystem::path base_dir;
    };

    ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    ExperimentConfig load_config(const std::filesystem::path& path);

    /// Seed of the worker pool for one (label, seed) cell. Independent of the
    /// position of the algorithm in the config.
    std::uint64_t cell_seed(const std::string& label, std::uint64_t seed);

    /// Runs one cell on a fresh pool.
    OptimizerReport run_cell(const FiniteSumObjective& objective, const WorkerTimeModel& model,
                             const AlgorithmSpec& algorithm, std::optional<double> gamma, std::uint64_t seed,
                             const StopRule& budget);

    struct RunSummary
    {
        double gamma = 0.0;
        std::uint64_t seed = 0;
        double terminal_f = 0.0;
        /// First time the run met the threshold, if it did.
        std::optional<double> time_to_eps;
    };

    /// min_terminal_f: smallest terminal f. first_to_eps: earliest
    /// time_to_eps; runs that never got there rank after all that did, by
    /// terminal f. Ties go to the smallest (gamma, seed). Throws on empty input.
    std::size_t best_run_select(std::span<const RunSummary> runs, SelectionRule rule);

    struct VarianceSummary
    {
        double mean = 0.0;
        /// Population variance (divides by the sample count).
        double variance = 0.0;
        std::size_t samples = 0;
    };

    /// Mean and variance of the values whose time lies in [t_end - window, t_end].
    /// series: (time, value) sorted by time. Throws when the window exceeds
    /// the run length.
    VarianceSummary summarize_variance(std::span<const std::pair<double, double>> series, double window);

    struct CellResult
    {
        std::string label;
        std::string algorithm;
        std::optional<double> requested_gamma;
        std::uint64_t seed = 0;
        OptimizerReport report;
        std::optional<double> time_to_target;
        std::filesystem::path file;
    };

    struct AlgorithmOutcome
    {
        std::string label;
        std::size_t best_cell = 0;
        std::optional<double> time_to_target;
        double terminal_f = 0.0;
        std::optional<VarianceSummary> trailing;
    };

    struct RaceResult
    {
        std::vector<CellResult> cells;
        std::vector<AlgorithmOutcome> outcomes;
        double f_best = 0.0;
        std::string f_best_convention;
        double f_initial = 0.0;
        std::optional<double> target_f;
        SelectionRule selection = SelectionRule::MinTerminalF;
        nlohmann::json summary;

        const AlgorithmOutcome& outcome(const std::string& label) const;
    };

    /// Runs every (algorithm, gamma, seed) cell. Writes one CSV per cell and
    /// summary.json when output_dir is set.
    RaceResult run_experiment(const ExperimentConfig& config);

    /// First time f <= f_threshold along a trajectory.
    std::optional<double> time_to_reach(const std::vector<TrajectoryPoint>& trajectory, double f_threshold);

    struct BoundCheck
    {
        std::string name;
        double measured = 0.0;
        double bound = 0.0;
        bool pass = false;
    };

    /// Runs collector timing checks for {"workers", "batch_sizes", "seeds",
    /// "m", "d"} and compares them with the closed-form bounds.
    std::vector<BoundCheck> check_bounds(const nlohmann::json& config, const std::filesystem::path& base_dir = {});
}
