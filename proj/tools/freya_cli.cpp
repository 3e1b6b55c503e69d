// freya: experiment runner and theory calculator.
//
//   freya run <config.json>
//   freya advise --m M --n N --taus FILE --constants FILE [--json]
//   freya gen-quadratic --m M --d D --lambda L --s S --seed SEED --out FILE
//   freya check-bounds <config.json>
//
// Exit codes: 0 success, 2 configuration error, 3 failed assertion.

#include "freya/harness.hpp"
#include "freya/objectives.hpp"
#include "freya/theory.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace
{
    constexpr int kOk = 0;
    constexpr int kConfigError = 2;
    constexpr int kAssertionFailed = 3;

    std::string show(double v)
    {
        std::ostringstream out;
        out << std::setprecision(6) << v;
        return out.str();
    }

    int cmd_run(const std::string& path)
    {
        const freya::ExperimentConfig config = freya::load_config(path);
        const freya::RaceResult race = freya::run_experiment(config);
        std::cout << "f_best " << show(race.f_best) << " (" << race.f_best_convention << "), selection "
                  << freya::to_string(race.selection) << "\n";
        std::cout << std::left << std::setw(20) << "algorithm" << std::setw(14) << "gamma" << std::setw(8) << "seed"
                  << std::setw(16) << "terminal_f" << "time_to_target\n";
        for (const auto& o : race.outcomes)
        {
            const auto& best = race.cells[o.best_cell];
            std::cout << std::setw(20) << o.label << std::setw(14) << show(best.report.gamma) << std::setw(8)
                      << best.seed << std::setw(16) << show(o.terminal_f)
                      << (o.time_to_target ? show(*o.time_to_target) : std::string("-")) << "\n";
        }
        if (!config.output_dir.empty())
        {
            std::cout << "wrote " << (config.output_dir / "summary.json").string() << "\n";
        }
        return kOk;
    }

    int cmd_advise(std::size_t m, std::size_t n, const std::string& taus_file, const std::string& constants_file,
                   bool as_json)
    {
        const std::vector<double> taus = freya::read_numbers(taus_file);
        if (taus.size() != n)
        {
            throw freya::ConfigError("--taus holds " + std::to_string(taus.size()) + " entries but --n is " +
                                     std::to_string(n));
        }
        std::ifstream in(constants_file);
        if (!in)
        {
            throw freya::ConfigError("cannot open " + constants_file);
        }
        nlohmann::json cj;
        try
        {
            cj = nlohmann::json::parse(in);
        }
        catch (const nlohmann::json::exception& e)
        {
            throw freya::ConfigError(constants_file + ": " + e.what());
        }
        freya::theory::ProblemConstants c;
        std::optional<double> L_plus;
        try
        {
            c.L_minus = cj.at("L_minus").get<double>();
            c.L_pm = cj.value("L_pm", c.L_minus);
            c.delta0 = cj.at("delta0").get<double>();
            c.eps = cj.at("eps").get<double>();
            if (cj.contains("L_plus"))
            {
                L_plus = cj.at("L_plus").get<double>();
            }
        }
        catch (const nlohmann::json::exception& e)
        {
            throw freya::ConfigError(constants_file + ": " + e.what());
        }
        if (!(c.L_minus > 0.0) || c.L_pm < 0.0 || !(c.eps > 0.0) || c.delta0 < 0.0)
        {
            throw freya::ConfigError("constants: need L_minus > 0, L_pm >= 0, delta0 >= 0, eps > 0");
        }

        const freya::theory::TheoryReport r = freya::theory::make_report(m, taus, c, L_plus);
        if (as_json)
        {
            std::cout << freya::theory::to_json(r).dump(2) << "\n";
            return kOk;
        }
        auto row = [](const std::string& name, const std::string& value) {
            std::cout << "  " << std::left << std::setw(34) << name << value << "\n";
        };
        std::cout << "m = " << m << ", n = " << n << "\n";
        row("t*(m)", show(r.t_star_m) + "  (j* = " + std::to_string(r.j_star_m) + ")");
        row("t*(sqrt m)", show(r.t_star_sqrt_m) + "  (j* = " + std::to_string(r.j_star_sqrt_m) + ")");
        row("optimal S*, p*", std::to_string(r.optimal.S) + ", " + show(r.optimal.p));
        row("large-scale S, p", std::to_string(r.large_scale.S) + ", " + show(r.large_scale.p));
        row("ratio S, p", std::to_string(r.ratio.S) + ", " + show(r.ratio.p));
        row("stepsize", show(r.gamma));
        row("iterations K", show(r.K_page));
        row("log term", r.log_term ? "on" : "off");
        row("predicted time (S*, p*)", show(r.predicted_time_optimal));
        row("predicted time (large-scale)", show(r.predicted_time_large_scale));
        row("large-scale closed form", show(r.large_scale_time));
        row("lower bound (no constant)", show(r.lower_bound));
        row("Hero GD (order)", show(r.hero_gd));
        row("Soviet GD (order)", show(r.soviet_gd));
        row("Hero PAGE (order)", show(r.hero_page));
        row("Soviet PAGE (order)", show(r.soviet_page));
        return kOk;
    }

    int cmd_gen_quadratic(const freya::QuadraticSpec& spec, const std::string& out_path)
    {
        freya::QuadraticProblem problem = [&]() {
            try
            {
                return freya::generate_quadratic(spec);
            }
            catch (const std::invalid_argument& e)
            {
                throw freya::ConfigError(e.what());
            }
        }();
        nlohmann::json j = spec;
        const freya::SmoothnessHints h = problem.smoothness();
        j["derived"] = {{"shift", problem.shift()},
                        {"lambda_min_unshifted", problem.lambda_min_unshifted()},
                        {"L_minus", *h.L_minus},
                        {"L_plus", *h.L_plus},
                        {"f_star", *problem.optimal_value()},
                        {"f_initial", problem.value(problem.initial_point())}};
        std::ofstream out(out_path);
        if (!out)
        {
            throw freya::ConfigError("cannot write " + out_path);
        }
        out << std::setprecision(17) << j.dump(2) << "\n";
        return kOk;
    }

    int cmd_check_bounds(const std::string& path)
    {
        std::ifstream in(path);
        if (!in)
        {
            throw freya::ConfigError("cannot open " + path);
        }
        nlohmann::json j;
        try
        {
            j = nlohmann::json::parse(in);
        }
        catch (const nlohmann::json::exception& e)
        {
            throw freya::ConfigError(path + ": " + e.what());
        }
        const auto checks = freya::check_bounds(j, std::filesystem::path(path).parent_path());
        bool all = true;
        for (const auto& c : checks)
        {
            std::cout << (c.pass ? "PASS " : "FAIL ") << std::left << std::setw(28) << c.name << " measured "
                      << show(c.measured) << " <= bound " << show(c.bound) << "\n";
            all = all && c.pass;
        }
        return all ? kOk : kAssertionFailed;
    }
}

int main(int argc, char** argv)
{
    CLI::App app{"Asynchronous finite-sum optimization simulator"};
    app.require_subcommand(1);

    std::string run_config;
    auto* run = app.add_subcommand("run", "Run an experiment config");
    run->add_option("config", run_config, "Experiment JSON")->required();

    std::size_t m = 0;
    std::size_t n = 0;
    std::string taus_file;
    std::string constants_file;
    bool as_json = false;
    auto* advise = app.add_subcommand("advise", "Print parameter advice and predicted times");
    advise->add_option("--m", m, "Number of components")->required()->check(CLI::PositiveNumber);
    advise->add_option("--n", n, "Number of workers")->required()->check(CLI::PositiveNumber);
    advise->add_option("--taus", taus_file, "File with n worker times")->required();
    advise->add_option("--constants", constants_file, "JSON with L_minus, L_pm, delta0, eps")->required();
    advise->add_flag("--json", as_json, "Print JSON");

    freya::QuadraticSpec spec;
    std::string out_path;
    auto* gen = app.add_subcommand("gen-quadratic", "Write a quadratic problem description");
    gen->add_option("--m", spec.m, "Components")->required();
    gen->add_option("--d", spec.d, "Dimension")->required();
    gen->add_option("--lambda", spec.lambda, "Smallest eigenvalue of the mean matrix")->required();
    gen->add_option("--s", spec.noise, "Noise scale")->default_val(0.0);
    gen->add_option("--seed", spec.seed, "Seed")->default_val(0);
    gen->add_option("--out", out_path, "Output JSON")->required();

    std::string bounds_config;
    auto* bounds = app.add_subcommand("check-bounds", "Check collector times against their bounds");
    bounds->add_option("config", bounds_config, "Check JSON")->required();

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp& e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError& e)
    {
        app.exit(e);
        return kConfigError;
    }

    try
    {
        if (*run)
        {
            return cmd_run(run_config);
        }
        if (*advise)
        {
            return cmd_advise(m, n, taus_file, constants_file, as_json);
        }
        if (*gen)
        {
            return cmd_gen_quadratic(spec, out_path);
        }
        if (*bounds)
        {
            return cmd_check_bounds(bounds_config);
        }
    }
    catch (const freya::ConfigError& e)
    {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    }
    catch (const std::invalid_argument& e)
    {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kOk;
}
