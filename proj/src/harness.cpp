#include "freya/harness.hpp"

#include "freya/collectors.hpp"
#include "freya/theory.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>
#include <limits>

namespace freya
{
    namespace
    {
        namespace fs = std::filesystem;

        std::string trim(const std::string& s)
        {
            const auto b = s.find_first_not_of(" \t\r\n");
            if (b == std::string::npos)
            {
                return {};
            }
            const auto e = s.find_last_not_of(" \t\r\n");
            return s.substr(b, e - b + 1);
        }

        double parse_number(const std::string& token, const std::string& context)
        {
            const std::string t = trim(token);
            if (t == "inf" || t == "Inf" || t == "INF" || t == "infinity")
            {
                return std::numeric_limits<double>::infinity();
            }
            double v = 0.0;
            const char* first = t.data();
            const char* last = t.data() + t.size();
            if (!t.empty() && *first == '+')
            {
                ++first;
            }
            const auto [ptr, ec] = std::from_chars(first, last, v);
            if (t.empty() || ec != std::errc() || ptr != last)
            {
                throw ConfigError(context + ": cannot parse number '" + t + "'");
            }
            return v;
        }

        std::vector<double> split_numbers(const std::string& text, const std::string& context)
        {
            std::vector<double> out;
            std::string token;
            for (char c : text + "\n")
            {
                if (c == ',' || c == ' ' || c == '\t' || c == '\n' || c == '\r')
                {
                    if (!token.empty())
                    {
                        out.push_back(parse_number(token, context));
                        token.clear();
                    }
                }
                else
                {
                    token.push_back(c);
                }
            }
            return out;
        }

        fs::path resolve(const fs::path& base, const fs::path& p)
        {
            return p.is_absolute() || base.empty() ? p : base / p;
        }

        std::vector<double> json_numbers(const nlohmann::json& j, const std::string& context)
        {
            if (!j.is_array())
            {
                throw ConfigError(context + " must be an array");
            }
            std::vector<double> out;
            for (const auto& v : j)
            {
                if (v.is_number())
                {
                    out.push_back(v.get<double>());
                }
                else if (v.is_string())
                {
                    out.push_back(parse_number(v.get<std::string>(), context));
                }
                else
                {
                    throw ConfigError(context + ": entries must be numbers or \"inf\"");
                }
            }
            return out;
        }

        void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where)
        {
            if (!j.is_object())
            {
                throw ConfigError(where + " must be an object");
            }
            for (const auto& item : j.items())
            {
                if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; }))
                {
                    throw ConfigError(where + ": unknown key '" + item.key() + "'");
                }
            }
        }

        std::uint64_t fnv1a(const std::string& s)
        {
            std::uint64_t h = 0xcbf29ce484222325ULL;
            for (unsigned char c : s)
            {
                h ^= c;
                h *= 0x100000001b3ULL;
            }
            return h;
        }

        std::string format_double(double v)
        {
            char buf[64];
            const auto r = std::to_chars(buf, buf + sizeof(buf), v);
            return std::string(buf, r.ptr);
        }

        double finite_or_inf(double v) { return std::isnan(v) ? std::numeric_limits<double>::infinity() : v; }

        nlohmann::json optional_number(const std::optional<double>& v)
        {
            return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
        }
    }

    std::vector<double> read_numbers(const fs::path& path)
    {
        std::ifstream in(path);
        if (!in)
        {
            throw ConfigError("cannot open " + path.string());
        }
        std::ostringstream text;
        text << in.rdbuf();
        return split_numbers(text.str(), path.string());
    }

    std::vector<double> parse_taus(const std::string& formula, std::size_t n, const fs::path& base_dir)
    {
        const std::string f = trim(formula);
        std::vector<double> out;
        if (f.rfind("const", 0) == 0)
        {
            if (n == 0)
            {
                throw ConfigError("worker count must be positive");
            }
            out.assign(n, parse_number(f.substr(5), "const"));
        }
        else if (f == "sqrt(i)")
        {
            for (std::size_t i = 1; i <= n; ++i)
            {
                out.push_back(std::sqrt(static_cast<double>(i)));
            }
        }
        else if (f == "linear" || f == "i")
        {
            for (std::size_t i = 1; i <= n; ++i)
            {
                out.push_back(static_cast<double>(i));
            }
        }
        else if (f.rfind("file:", 0) == 0)
        {
            out = read_numbers(resolve(base_dir, trim(f.substr(5))));
        }
        else
        {
            out = split_numbers(f, "taus");
        }
        if (out.empty())
        {
            throw ConfigError("worker times: no workers");
        }
        if (n != 0 && out.size() != n)
        {
            throw ConfigError("worker times: expected " + std::to_string(n) + " entries, got " +
                              std::to_string(out.size()));
        }
        for (double t : out)
        {
            if (!(t >= 0.0))
            {
                throw ConfigError("worker times must lie in [0, inf]");
            }
        }
        return out;
    }

    WorkerTimeModel build_worker_model(const nlohmann::json& spec, const fs::path& base_dir)
    {
        check_keys(spec, {"n", "mode", "taus", "schedule", "schedule_file", "hold_last", "jitter"}, "workers");
        const std::size_t n = spec.value("n", std::size_t{0});
        const std::string mode = spec.value("mode", std::string("static"));
        auto taus = [&]() {
            if (!spec.contains("taus"))
            {
                throw ConfigError("workers: 'taus' is required");
            }
            const auto& t = spec.at("taus");
            if (t.is_string())
            {
                return parse_taus(t.get<std::string>(), n, base_dir);
            }
            std::vector<double> v = json_numbers(t, "workers.taus");
            if (v.empty() || (n != 0 && v.size() != n))
            {
                throw ConfigError("workers.taus: length does not match n");
            }
            return v;
        };
        try
        {
            if (mode == "static")
            {
                return WorkerTimeModel::fixed(taus());
            }
            if (mode == "stochastic")
            {
                return WorkerTimeModel::stochastic(taus(), spec.value("jitter", 0.5));
            }
            if (mode == "dynamic")
            {
                std::vector<std::vector<double>> rows;
                if (spec.contains("schedule"))
                {
                    for (const auto& row : spec.at("schedule"))
                    {
                        rows.push_back(json_numbers(row, "workers.schedule"));
                    }
                }
                else if (spec.contains("schedule_file"))
                {
                    const fs::path path = resolve(base_dir, spec.at("schedule_file").get<std::string>());
                    std::ifstream in(path);
                    if (!in)
                    {
                        throw ConfigError("cannot open " + path.string());
                    }
                    std::string line;
                    while (std::getline(in, line))
                    {
                        if (!trim(line).empty() && trim(line)[0] != '#')
                        {
                            rows.push_back(split_numbers(line, path.string()));
                        }
                    }
                }
                else
                {
                    throw ConfigError("workers: dynamic mode needs 'schedule' or 'schedule_file'");
                }
                for (const auto& row : rows)
                {
                    if (n != 0 && row.size() != n)
                    {
                        throw ConfigError("workers.schedule: row length does not match n");
                    }
                }
                return WorkerTimeModel::schedule(std::move(rows), spec.value("hold_last", false));
            }
        }
        catch (const std::invalid_argument& e)
        {
            throw ConfigError(std::string("workers: ") + e.what());
        }
        catch (const nlohmann::json::exception& e)
        {
            throw ConfigError(std::string("workers: ") + e.what());
        }
        throw ConfigError("workers: unknown mode '" + mode + "'");
    }

    std::unique_ptr<FiniteSumObjective> build_problem(const nlohmann::json& spec, const fs::path& base_dir)
    {
        try
        {
            const std::string kind = spec.value("kind", std::string("quadratic"));
            if (kind == "quadratic")
            {
                check_keys(spec, {"kind", "m", "d", "lambda", "s", "seed", "derived"}, "problem");
                return std::make_unique<QuadraticProblem>(generate_quadratic(spec.get<QuadraticSpec>()));
            }
            if (kind == "csv")
            {
                check_keys(spec, {"kind", "path", "label_column", "has_header", "l2"}, "problem");
                CsvOptions options;
                options.label_column = spec.value("label_column", -1);
                options.has_header = spec.value("has_header", false);
                options.l2 = spec.value("l2", 0.0);
                return std::make_unique<LogisticProblem>(
                    load_csv_dataset(resolve(base_dir, spec.at("path").get<std::string>()), options));
            }
            if (kind == "file")
            {
                check_keys(spec, {"kind", "path"}, "problem");
                const fs::path path = resolve(base_dir, spec.at("path").get<std::string>());
                std::ifstream in(path);
                if (!in)
                {
                    throw ConfigError("cannot open " + path.string());
                }
                const nlohmann::json inner = nlohmann::json::parse(in);
                if (inner.value("kind", std::string()) == "file")
                {
                    throw ConfigError("problem file may not refer to another file");
                }
                return build_problem(inner, path.parent_path());
            }
            throw ConfigError("problem: unknown kind '" + kind + "'");
        }
        catch (const ConfigError&)
        {
            throw;
        }
        catch (const std::runtime_error& e)
        {
            throw ConfigError(std::string("problem: ") + e.what());
        }
        catch (const nlohmann::json::exception& e)
        {
            throw ConfigError(std::string("problem: ") + e.what());
        }
        catch (const std::invalid_argument& e)
        {
            throw ConfigError(std::string("problem: ") + e.what());
        }
    }

    std::vector<std::optional<double>> GammaSpec::values() const
    {
        switch (kind)
        {
        case Kind::Fixed:
            return {value};
        case Kind::Auto:
            return {std::nullopt};
        case Kind::Grid:
        {
            std::vector<std::optional<double>> out;
            for (int i = lo; i <= hi; ++i)
            {
                out.emplace_back(std::ldexp(1.0, i));
            }
            return out;
        }
        }
        return {};
    }

    const std::vector<std::string>& registered_algorithms()
    {
        static const std::vector<std::string> names{"freya_page",       "soviet_page", "freya_sgd", "rennala_sgd",
                                                    "asynchronous_sgd", "hero_gd",     "soviet_gd"};
        return names;
    }

    const char* to_string(SelectionRule rule)
    {
        return rule == SelectionRule::MinTerminalF ? "min_terminal_f" : "first_to_eps";
    }

    namespace
    {
        GammaSpec parse_gamma(const nlohmann::json& j)
        {
            GammaSpec g;
            if (j.is_number())
            {
                g.kind = GammaSpec::Kind::Fixed;
                g.value = j.get<double>();
                if (!(g.value > 0.0) || !std::isfinite(g.value))
                {
                    throw ConfigError("gamma must be positive");
                }
            }
            else if (j.is_string() && j.get<std::string>() == "auto")
            {
                g.kind = GammaSpec::Kind::Auto;
            }
            else if (j.is_object() && j.contains("grid"))
            {
                const auto& r = j.at("grid");
                if (!r.is_array() || r.size() != 2 || !r[0].is_number_integer() || !r[1].is_number_integer())
                {
                    throw ConfigError("gamma grid must be [lo, hi] with integer exponents");
                }
                g.kind = GammaSpec::Kind::Grid;
                g.lo = r[0].get<int>();
                g.hi = r[1].get<int>();
                if (g.lo > g.hi || g.hi - g.lo > 128 || std::abs(g.lo) > 1000 || std::abs(g.hi) > 1000)
                {
                    throw ConfigError("gamma grid must satisfy lo <= hi with at most 129 points");
                }
            }
            else
            {
                throw ConfigError("gamma must be a number, \"auto\" or {\"grid\": [lo, hi]}");
            }
            return g;
        }

        AlgorithmSpec parse_algorithm(const nlohmann::json& j)
        {
            if (j.is_string())
            {
                return parse_algorithm(nlohmann::json{{"name", j}});
            }
            check_keys(j, {"name", "label", "gamma", "S", "p", "sampler"}, "algorithm");
            AlgorithmSpec a;
            a.name = j.at("name").get<std::string>();
            const auto& names = registered_algorithms();
            if (std::find(names.begin(), names.end(), a.name) == names.end())
            {
                throw ConfigError("unknown algorithm '" + a.name + "'");
            }
            a.label = j.value("label", a.name);
            a.gamma = j.contains("gamma") ? parse_gamma(j.at("gamma")) : GammaSpec{};
            if (j.contains("S"))
            {
                const auto S = j.at("S").get<long long>();
                if (S < 1)
                {
                    throw ConfigError("S must be at least 1");
                }
                a.S = static_cast<std::size_t>(S);
            }
            if (j.contains("p"))
            {
                a.p = j.at("p").get<double>();
                if (!(*a.p > 0.0 && *a.p <= 1.0))
                {
                    throw ConfigError("p must lie in (0, 1]");
                }
            }
            if (j.contains("sampler"))
            {
                try
                {
                    a.sampler = sampler_kind_from_string(j.at("sampler").get<std::string>());
                }
                catch (const std::invalid_argument& e)
                {
                    throw ConfigError(e.what());
                }
            }
            const bool sgd_like = a.name == "freya_sgd" || a.name == "rennala_sgd" || a.name == "asynchronous_sgd";
            if (sgd_like && a.gamma.kind == GammaSpec::Kind::Auto)
            {
                throw ConfigError(a.name + " needs an explicit gamma or a grid");
            }
            return a;
        }
    }

    ExperimentConfig parse_config(const nlohmann::json& j, const fs::path& base_dir)
    {
        try
        {
            check_keys(j,
                       {"problem", "workers", "algorithms", "seeds", "budget", "eval_every", "selection",
                        "target_suboptimality", "trailing_window", "output_dir", "threads"},
                       "config");
            ExperimentConfig c;
            c.base_dir = base_dir;
            c.problem = j.at("problem");
            c.workers = j.at("workers");
            const auto& algs = j.at("algorithms");
            if (!algs.is_array() || algs.empty())
            {
                throw ConfigError("algorithms must be a nonempty list");
            }
            std::set<std::string> labels;
            for (const auto& a : algs)
            {
                c.algorithms.push_back(parse_algorithm(a));
                if (!labels.insert(c.algorithms.back().label).second)
                {
                    throw ConfigError("duplicate algorithm label '" + c.algorithms.back().label + "'");
                }
            }
            if (j.contains("seeds"))
            {
                const auto& s = j.at("seeds");
                c.seeds.clear();
                if (s.is_number_integer())
                {
                    for (std::uint64_t i = 0; i < s.get<std::uint64_t>(); ++i)
                    {
                        c.seeds.push_back(i);
                    }
                }
                else
                {
                    c.seeds = s.get<std::vector<std::uint64_t>>();
                }
                if (c.seeds.empty())
                {
                    throw ConfigError("seeds must not be empty");
                }
            }
            const auto& b = j.at("budget");
            check_keys(b, {"time", "iterations", "eps"}, "budget");
            if (b.contains("time"))
            {
                c.budget.max_time = b.at("time").get<double>();
                if (!(c.budget.max_time > 0.0))
                {
                    throw ConfigError("budget of zero: time must be positive");
                }
            }
            if (b.contains("iterations"))
            {
                c.budget.max_iterations = b.at("iterations").get<long>();
                if (c.budget.max_iterations <= 0)
                {
                    throw ConfigError("budget of zero: iterations must be positive");
                }
            }
            if (b.contains("eps"))
            {
                c.budget.eps = b.at("eps").get<double>();
                if (!(c.budget.eps > 0.0))
                {
                    throw ConfigError("budget of zero: eps must be positive");
                }
            }
            if (c.budget.max_iterations == 0 && std::isinf(c.budget.max_time) && c.budget.eps == 0.0)
            {
                throw ConfigError("budget needs time, iterations or eps");
            }
            c.budget.eval_every = j.value("eval_every", 1L);
            if (c.budget.eval_every < 1)
            {
                throw ConfigError("eval_every must be at least 1");
            }
            const std::string sel = j.value("selection", std::string("min_terminal_f"));
            if (sel == "min_terminal_f")
            {
                c.selection = SelectionRule::MinTerminalF;
            }
            else if (sel == "first_to_eps")
            {
                c.selection = SelectionRule::FirstToEps;
            }
            else
            {
                throw ConfigError("unknown selection rule '" + sel + "'");
            }
            if (j.contains("target_suboptimality"))
            {
                c.target_suboptimality = j.at("target_suboptimality").get<double>();
                if (!(*c.target_suboptimality > 0.0))
                {
                    throw ConfigError("target_suboptimality must be positive");
                }
            }
            if (c.selection == SelectionRule::FirstToEps && !c.target_suboptimality)
            {
                throw ConfigError("first_to_eps selection needs target_suboptimality");
            }
            if (j.contains("trailing_window"))
            {
                c.trailing_window = j.at("trailing_window").get<double>();
                if (!(*c.trailing_window >= 0.0))
                {
                    throw ConfigError("trailing_window must be nonnegative");
                }
            }
            if (j.contains("output_dir"))
            {
                c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
            }
            c.threads = j.value("threads", std::size_t{1});
            if (c.threads == 0)
            {
                throw ConfigError("threads must be at least 1");
            }
            return c;
        }
        catch (const nlohmann::json::exception& e)
        {
            throw ConfigError(std::string("config: ") + e.what());
        }
    }

    ExperimentConfig load_config(const fs::path& path)
    {
        std::ifstream in(path);
        if (!in)
        {
            throw ConfigError("cannot open " + path.string());
        }
        nlohmann::json j;
        try
        {
            j = nlohmann::json::parse(in);
        }
        catch (const nlohmann::json::exception& e)
        {
            throw ConfigError(path.string() + ": " + e.what());
        }
        return parse_config(j, path.parent_path());
    }

    std::uint64_t cell_seed(const std::string& label, std::uint64_t seed)
    {
        return derive_seed(seed, fnv1a(label), std::uint64_t{0});
    }

    OptimizerReport run_cell(const FiniteSumObjective& objective, const WorkerTimeModel& model,
                             const AlgorithmSpec& algorithm, std::optional<double> gamma, std::uint64_t seed,
                             const StopRule& budget)
    {
        const std::uint64_t s = cell_seed(algorithm.label.empty() ? algorithm.name : algorithm.label, seed);
        WorkerPool pool(model, s);
        const std::string& name = algorithm.name;
        if (name == "freya_page" || name == "soviet_page")
        {
            PageParams params;
            params.gamma = gamma;
            params.S = algorithm.S;
            params.p = algorithm.p;
            params.sampler = algorithm.sampler;
            params.stop = budget;
            return name == "freya_page" ? run_freya_page(objective, pool, params, s)
                                        : run_soviet_page(objective, pool, params, s);
        }
        if (name == "freya_sgd" || name == "rennala_sgd")
        {
            SgdParams params;
            params.gamma = gamma;
            params.S = algorithm.S.value_or(1);
            params.stop = budget;
            return name == "freya_sgd" ? run_freya_sgd(objective, pool, params)
                                       : run_rennala_sgd(objective, pool, params);
        }
        if (name == "asynchronous_sgd")
        {
            if (!gamma)
            {
                throw ConfigError("asynchronous_sgd needs an explicit gamma");
            }
            return run_asynchronous_sgd(objective, pool, AsyncSgdParams{*gamma, budget});
        }
        if (name == "hero_gd" || name == "soviet_gd")
        {
            return run_gd_baselines(objective, pool, name == "hero_gd" ? GdVariant::Hero : GdVariant::Soviet,
                                    GdParams{gamma, budget});
        }
        throw ConfigError("unknown algorithm '" + name + "'");
    }

    std::size_t best_run_select(std::span<const RunSummary> runs, SelectionRule rule)
    {
        if (runs.empty())
        {
            throw std::invalid_argument("best_run_select: no runs");
        }
        auto key_less = [](const RunSummary& a, const RunSummary& b) {
            return std::tie(a.gamma, a.seed) < std::tie(b.gamma, b.seed);
        };
        auto better = [&](const RunSummary& a, const RunSummary& b) {
            if (rule == SelectionRule::FirstToEps)
            {
                if (a.time_to_eps.has_value() != b.time_to_eps.has_value())
                {
                    return a.time_to_eps.has_value();
                }
                if (a.time_to_eps && *a.time_to_eps != *b.time_to_eps)
                {
                    return *a.time_to_eps < *b.time_to_eps;
                }
            }
            const double fa = finite_or_inf(a.terminal_f);
            const double fb = finite_or_inf(b.terminal_f);
            if (fa != fb)
            {
                return fa < fb;
            }
            return key_less(a, b);
        };
        std::size_t best = 0;
        for (std::size_t i = 1; i < runs.size(); ++i)
        {
            if (better(runs[i], runs[best]))
            {
                best = i;
            }
        }
        return best;
    }

    VarianceSummary summarize_variance(std::span<const std::pair<double, double>> series, double window)
    {
        if (series.empty())
        {
            throw std::invalid_argument("summarize_variance: empty series");
        }
        if (!(window >= 0.0))
        {
            throw std::invalid_argument("summarize_variance: window must be nonnegative");
        }
        const double t_end = series.back().first;
        const double length = t_end - series.front().first;
        if (window > length)
        {
            throw std::invalid_argument("summarize_variance: window exceeds the run length");
        }
        const double from = t_end - window;
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& [t, v] : series)
        {
            if (t >= from)
            {
                sum += v;
                ++count;
            }
        }
        VarianceSummary out;
        out.samples = count;
        out.mean = sum / static_cast<double>(count);
        double sq = 0.0;
        for (const auto& [t, v] : series)
        {
            if (t >= from)
            {
                sq += (v - out.mean) * (v - out.mean);
            }
        }
        out.variance = sq / static_cast<double>(count);
        return out;
    }

    std::optional<double> time_to_reach(const std::vector<TrajectoryPoint>& trajectory, double f_threshold)
    {
        for (const auto& p : trajectory)
        {
            if (p.f_value <= f_threshold)
            {
                return p.time;
            }
        }
        return std::nullopt;
    }

    const AlgorithmOutcome& RaceResult::outcome(const std::string& label) const
    {
        for (const auto& o : outcomes)
        {
            if (o.label == label)
            {
                return o;
            }
        }
        throw std::out_of_range("no algorithm labelled '" + label + "'");
    }

    RaceResult run_experiment(const ExperimentConfig& config)
    {
        const std::unique_ptr<FiniteSumObjective> objective = build_problem(config.problem, config.base_dir);
        const WorkerTimeModel model = build_worker_model(config.workers, config.base_dir);

        RaceResult race;
        race.selection = config.selection;
        for (const auto& alg : config.algorithms)
        {
            for (const auto& gamma : alg.gamma.values())
            {
                for (std::uint64_t seed : config.seeds)
                {
                    CellResult cell;
                    cell.label = alg.label;
                    cell.algorithm = alg.name;
                    cell.requested_gamma = gamma;
                    cell.seed = seed;
                    race.cells.push_back(std::move(cell));
                }
            }
        }

        // With a known optimum the first-to-target race can stop each cell at the target.
        StopRule budget = config.budget;
        if (config.selection == SelectionRule::FirstToEps && config.target_suboptimality)
        {
            if (auto f_star = objective->optimal_value())
            {
                const double f0 = objective->value(objective->initial_point());
                budget.target_f = *f_star + *config.target_suboptimality * (f0 - *f_star);
            }
        }

        auto spec_of = [&](const CellResult& cell) -> const AlgorithmSpec& {
            return *std::find_if(config.algorithms.begin(), config.algorithms.end(),
                                 [&](const AlgorithmSpec& a) { return a.label == cell.label; });
        };

        std::atomic<std::size_t> next{0};
        std::mutex error_mutex;
        std::exception_ptr error;
        auto work = [&]() {
            for (std::size_t i = next++; i < race.cells.size(); i = next++)
            {
                try
                {
                    CellResult& cell = race.cells[i];
                    cell.report = run_cell(*objective, model, spec_of(cell), cell.requested_gamma, cell.seed,
                                           budget);
                }
                catch (...)
                {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error)
                    {
                        error = std::current_exception();
                    }
                }
            }
        };
        const std::size_t threads = std::min(config.threads, race.cells.size());
        if (threads <= 1)
        {
            work();
        }
        else
        {
            std::vector<std::thread> pool;
            for (std::size_t t = 0; t < threads; ++t)
            {
                pool.emplace_back(work);
            }
            for (auto& t : pool)
            {
                t.join();
            }
        }
        if (error)
        {
            std::rethrow_exception(error);
        }

        race.f_initial = objective->value(objective->initial_point());
        if (auto f_star = objective->optimal_value())
        {
            race.f_best = *f_star;
            race.f_best_convention = "closed_form";
        }
        else
        {
            race.f_best = race.f_initial;
            for (const auto& cell : race.cells)
            {
                for (const auto& p : cell.report.trajectory)
                {
                    if (std::isfinite(p.f_value))
                    {
                        race.f_best = std::min(race.f_best, p.f_value);
                    }
                }
            }
            race.f_best_convention = "min_observed";
        }
        if (config.target_suboptimality)
        {
            race.target_f = race.f_best + *config.target_suboptimality * (race.f_initial - race.f_best);
        }
        for (auto& cell : race.cells)
        {
            if (race.target_f)
            {
                cell.time_to_target = time_to_reach(cell.report.trajectory, *race.target_f);
            }
        }

        nlohmann::json summary;
        summary["selection_rule"] = to_string(config.selection);
        summary["f_best"] = race.f_best;
        summary["f_best_convention"] = race.f_best_convention;
        summary["f_initial"] = race.f_initial;
        summary["target_f"] = optional_number(race.target_f);
        summary["variance_convention"] = "population";

        for (const auto& alg : config.algorithms)
        {
            std::vector<std::size_t> members;
            std::vector<RunSummary> runs;
            for (std::size_t i = 0; i < race.cells.size(); ++i)
            {
                const CellResult& c = race.cells[i];
                if (c.label != alg.label)
                {
                    continue;
                }
                members.push_back(i);
                RunSummary r;
                r.gamma = c.report.gamma;
                r.seed = c.seed;
                r.terminal_f = c.report.trajectory.empty() ? std::numeric_limits<double>::infinity()
                                                           : c.report.trajectory.back().f_value;
                r.time_to_eps = c.time_to_target;
                runs.push_back(r);
            }
            AlgorithmOutcome o;
            o.label = alg.label;
            o.best_cell = members[best_run_select(runs, config.selection)];
            const CellResult& best = race.cells[o.best_cell];
            o.time_to_target = best.time_to_target;
            o.terminal_f = best.report.trajectory.empty() ? std::numeric_limits<double>::infinity()
                                                          : best.report.trajectory.back().f_value;
            nlohmann::json entry;
            entry["algorithm"] = alg.name;
            entry["best_gamma"] = best.report.gamma;
            entry["best_seed"] = best.seed;
            entry["terminal_f"] = o.terminal_f;
            entry["time_to_target"] = optional_number(o.time_to_target);
            entry["stop"] = to_string(best.report.stop);
            entry["total_time"] = best.report.total_time;
            if (config.trailing_window)
            {
                std::vector<std::pair<double, double>> series;
                for (const auto& p : best.report.trajectory)
                {
                    series.emplace_back(p.time, p.f_value - race.f_best);
                }
                try
                {
                    o.trailing = summarize_variance(series, *config.trailing_window);
                    entry["trailing"] = {{"window", *config.trailing_window},
                                         {"mean", o.trailing->mean},
                                         {"variance", o.trailing->variance},
                                         {"samples", o.trailing->samples}};
                }
                catch (const std::invalid_argument& e)
                {
                    entry["trailing"] = {{"window", *config.trailing_window}, {"error", e.what()}};
                }
            }
            summary["algorithms"][alg.label] = entry;
            race.outcomes.push_back(std::move(o));
        }

        if (!config.output_dir.empty())
        {
            std::error_code ec;
            fs::create_directories(config.output_dir / "cells", ec);
            if (ec)
            {
                throw ConfigError("cannot create output directory " + config.output_dir.string() + ": " +
                                  ec.message());
            }
            nlohmann::json files = nlohmann::json::array();
            for (auto& cell : race.cells)
            {
                const std::string gamma_tag = cell.requested_gamma ? format_double(*cell.requested_gamma) : "auto";
                cell.file = config.output_dir / "cells" /
                            (cell.label + "__gamma=" + gamma_tag + "__seed=" + std::to_string(cell.seed) + ".csv");
                std::ofstream out(cell.file);
                if (!out)
                {
                    throw ConfigError("cannot write " + cell.file.string());
                }
                out.precision(17);
                out << "k,time,grad_norm_sq,f_value,f_minus_fbest\n";
                for (const auto& p : cell.report.trajectory)
                {
                    out << p.k << ',' << p.time << ',' << p.grad_norm_sq << ',' << p.f_value << ','
                        << (p.f_value - race.f_best) << '\n';
                }
                nlohmann::json f = cell.report.summary();
                f["label"] = cell.label;
                f["seed"] = cell.seed;
                f["file"] = fs::relative(cell.file, config.output_dir).generic_string();
                f["time_to_target"] = optional_number(cell.time_to_target);
                files.push_back(f);
            }
            for (const auto& o : race.outcomes)
            {
                summary["algorithms"][o.label]["best_file"] =
                    fs::relative(race.cells[o.best_cell].file, config.output_dir).generic_string();
            }
            summary["cells"] = files;
            std::ofstream out(config.output_dir / "summary.json");
            if (!out)
            {
                throw ConfigError("cannot write summary.json");
            }
            out << summary.dump(2) << '\n';
        }
        race.summary = std::move(summary);
        return race;
    }

    std::vector<BoundCheck> check_bounds(const nlohmann::json& config, const fs::path& base_dir)
    {
        std::vector<BoundCheck> out;
        try
        {
            check_keys(config, {"workers", "batch_sizes", "seeds", "m", "d"}, "check-bounds");
            const WorkerTimeModel model = build_worker_model(config.at("workers"), base_dir);
            const auto batches = config.value("batch_sizes", std::vector<std::size_t>{1, 8, 64});
            const std::size_t seeds = config.value("seeds", std::size_t{200});
            const std::size_t m = config.value("m", std::size_t{100});
            const std::size_t d = config.value("d", std::size_t{2});
            if (seeds == 0 || m == 0)
            {
                throw ConfigError("check-bounds: seeds and m must be positive");
            }
            const QuadraticProblem problem = generate_quadratic(m, d, 1.0, 1.0, 0);
            const std::vector<double> taus = model.bounds(-1);
            const Vec x = problem.initial_point();
            Vec y = x;
            y[0] += 1.0;

            for (std::size_t S : batches)
            {
                if (S == 0)
                {
                    throw ConfigError("check-bounds: batch sizes must be positive");
                }
                BoundCheck diff{"batch_difference S=" + std::to_string(S), 0.0,
                                theory::batch_difference_time_bound(static_cast<double>(S), taus), true};
                BoundCheck batch{"batch S=" + std::to_string(S), 0.0,
                                 theory::batch_time_bound(static_cast<double>(S), taus), true};
                for (std::size_t s = 0; s < seeds; ++s)
                {
                    WorkerPool pool(model, s);
                    diff.measured =
                        std::max(diff.measured, compute_batch_difference(S, problem, x, y, pool).simulated_duration);
                    batch.measured = std::max(batch.measured, compute_batch(S, problem, x, pool).simulated_duration);
                }
                diff.pass = diff.measured <= diff.bound;
                batch.pass = batch.measured <= batch.bound;
                out.push_back(diff);
                out.push_back(batch);
            }

            // Expected-time bound: one-sided 99% upper confidence limit.
            double sum = 0.0;
            double sq = 0.0;
            for (std::size_t s = 0; s < seeds; ++s)
            {
                WorkerPool pool(model, s);
                const double t = compute_gradient(problem, x, pool).simulated_duration;
                sum += t;
                sq += t * t;
            }
            const double N = static_cast<double>(seeds);
            const double mean = sum / N;
            const double var = seeds > 1 ? std::max(0.0, (sq - N * mean * mean) / (N - 1.0)) : 0.0;
            BoundCheck grad{"gradient m=" + std::to_string(m), mean + 2.326 * std::sqrt(var / N),
                            theory::full_gradient_time_bound(m, taus), false};
            grad.pass = grad.measured <= grad.bound;
            out.push_back(grad);
        }
        catch (const nlohmann::json::exception& e)
        {
            throw ConfigError(std::string("check-bounds: ") + e.what());
        }
        return out;
    }
}
