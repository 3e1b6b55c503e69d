#include "freya/harness.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace freya;
using nlohmann::json;

namespace
{
    json small_config()
    {
        return json::parse(R"cfg({
            "problem": {"kind": "quadratic", "m": 10, "d": 3, "lambda": 0.01, "s": 0.5, "seed": 1},
            "workers": {"n": 3, "taus": "sqrt(i)"},
            "algorithms": [{"name": "soviet_gd", "gamma": "auto"},
                           {"name": "freya_page", "gamma": {"grid": [-2, 0]}}],
            "seeds": 2,
            "budget": {"iterations": 30},
            "target_suboptimality": 0.1
        })cfg");
    }

    std::string read_file(const std::filesystem::path& p)
    {
        std::ifstream in(p);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }
}

TEST_CASE("worker time formulas")
{
    CHECK(parse_taus("const 2.5", 3) == std::vector<double>{2.5, 2.5, 2.5});
    const auto s = parse_taus("sqrt(i)", 4);
    CHECK(s[0] == 1.0);
    CHECK(s[3] == 2.0);
    CHECK(parse_taus("linear", 3) == std::vector<double>{1.0, 2.0, 3.0});
    CHECK(parse_taus("i", 2) == std::vector<double>{1.0, 2.0});
    CHECK(parse_taus("1, 2 inf", 3) == std::vector<double>{1.0, 2.0, kNever});
    const auto file = test::scratch_file("taus.txt", "0.5\n1.5\n");
    CHECK(parse_taus("file:" + file.filename().string(), 2, file.parent_path()) == std::vector<double>{0.5, 1.5});
    CHECK_THROWS_AS(parse_taus("1, 2", 3), ConfigError);
    CHECK_THROWS_AS(parse_taus("cubic", 3), ConfigError);
    CHECK_THROWS_AS(parse_taus("1, -2", 2), ConfigError);
}

TEST_CASE("worker models from json")
{
    const WorkerTimeModel a = build_worker_model(json{{"n", 2}, {"taus", "const 3"}});
    CHECK(a.mode() == WorkerTimeModel::Mode::Static);
    CHECK(a.bounds(0) == std::vector<double>{3.0, 3.0});
    const WorkerTimeModel b = build_worker_model(json{{"n", 2}, {"mode", "stochastic"}, {"taus", {1.0, 2.0}}});
    CHECK(b.mode() == WorkerTimeModel::Mode::Stochastic);
    const WorkerTimeModel c =
        build_worker_model(json{{"n", 2}, {"mode", "dynamic"}, {"schedule", {{1.0, 2.0}, {2.0, 1.0}}}});
    CHECK(c.bounds(0) == std::vector<double>{2.0, 1.0});
    CHECK_THROWS_AS(build_worker_model(json{{"n", 2}, {"taus", "const 1"}, {"speed", 1}}), ConfigError);
    CHECK_THROWS_AS(build_worker_model(json{{"n", 2}, {"mode", "chaotic"}, {"taus", "const 1"}}), ConfigError);
    CHECK_THROWS_AS(build_worker_model(json{{"n", 2}, {"mode", "dynamic"}}), ConfigError);
}

TEST_CASE("problems from json")
{
    const auto q = build_problem(json{{"kind", "quadratic"}, {"m", 5}, {"d", 4}, {"lambda", 0.1}});
    CHECK(q->components() == 5);
    CHECK(q->dimension() == 4);
    const auto csv = test::scratch_file("data.csv", "1,2,0\n0.5,-1,1\n3,0,1\n");
    const auto l = build_problem(json{{"kind", "csv"}, {"path", csv.string()}});
    CHECK(l->components() == 3);
    CHECK(l->dimension() == 2);
    const auto bad = test::scratch_file("bad.csv", "1,2,0\n0.5,x,1\n");
    CHECK_THROWS_WITH_AS(build_problem(json{{"kind", "csv"}, {"path", bad.string()}}), doctest::Contains(":2:"),
                         ConfigError);
    CHECK_THROWS_AS(build_problem(json{{"kind", "tensor"}}), ConfigError);
    CHECK_THROWS_AS(build_problem(json{{"kind", "quadratic"}, {"m", 5}, {"d", 4}, {"lambda", -1.0}}), ConfigError);
}

TEST_CASE("config parsing")
{
    const ExperimentConfig c = parse_config(small_config());
    CHECK(c.algorithms.size() == 2);
    CHECK(c.algorithms[1].gamma.values().size() == 3);
    CHECK(*c.algorithms[1].gamma.values()[0] == 0.25);
    CHECK(c.seeds == std::vector<std::uint64_t>{0, 1});
    CHECK(c.budget.max_iterations == 30);
    CHECK(c.selection == SelectionRule::MinTerminalF);

    auto j = small_config();
    j["budget"] = json::object();
    CHECK_THROWS_AS(parse_config(j), ConfigError);
    j = small_config();
    j["budget"] = {{"iterations", 0}};
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("budget of zero"), ConfigError);
    j = small_config();
    j["colour"] = "red";
    CHECK_THROWS_AS(parse_config(j), ConfigError);
    j = small_config();
    j["algorithms"] = {{{"name", "adam"}}};
    CHECK_THROWS_AS(parse_config(j), ConfigError);
    j = small_config();
    j["algorithms"] = {{{"name", "freya_sgd"}, {"gamma", "auto"}}};
    CHECK_THROWS_AS(parse_config(j), ConfigError);
    j = small_config();
    j["algorithms"] = {"hero_gd", "hero_gd"};
    CHECK_THROWS_AS(parse_config(j), ConfigError);
    j = small_config();
    j["selection"] = "first_to_eps";
    j.erase("target_suboptimality");
    CHECK_THROWS_AS(parse_config(j), ConfigError);
    j = small_config();
    j["algorithms"] = {{{"name", "freya_page"}, {"gamma", {{"grid", {3, 1}}}}}};
    CHECK_THROWS_AS(parse_config(j), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/freya.json"), ConfigError);
}

TEST_CASE("best run selection")
{
    const std::vector<RunSummary> runs{
        {0.5, 0, 3.0, 10.0}, {0.25, 0, 2.0, std::nullopt}, {0.125, 1, 2.0, 12.0}, {1.0, 0, std::nan(""), 1.0}};
    // Equal terminal f: the smaller gamma wins.
    CHECK(best_run_select(runs, SelectionRule::MinTerminalF) == 2);
    CHECK(best_run_select(runs, SelectionRule::FirstToEps) == 3);
    const std::vector<RunSummary> never{{0.5, 0, 3.0, std::nullopt}, {0.25, 0, 4.0, std::nullopt}};
    CHECK(best_run_select(never, SelectionRule::FirstToEps) == 0);
    const std::vector<RunSummary> tie{{0.5, 3, 1.0, std::nullopt}, {0.5, 1, 1.0, std::nullopt}};
    CHECK(best_run_select(tie, SelectionRule::MinTerminalF) == 1);
    CHECK_THROWS_AS(best_run_select(std::vector<RunSummary>{}, SelectionRule::MinTerminalF),
                    std::invalid_argument);
}

TEST_CASE("trailing variance")
{
    const std::vector<std::pair<double, double>> s{{0.0, 10.0}, {1.0, 1.0}, {2.0, 3.0}, {3.0, 5.0}};
    const VarianceSummary v = summarize_variance(s, 2.0);
    CHECK(v.samples == 3);
    CHECK(v.mean == 3.0);
    CHECK(v.variance == doctest::Approx(8.0 / 3.0));
    CHECK(summarize_variance(s, 0.0).samples == 1);
    CHECK(summarize_variance(s, 0.0).variance == 0.0);
    CHECK_THROWS_AS(summarize_variance(s, 3.5), std::invalid_argument);
}

TEST_CASE("time to reach")
{
    const std::vector<TrajectoryPoint> t{{0, 0.0, 1.0, 5.0}, {1, 2.0, 1.0, 3.0}, {2, 4.0, 1.0, 1.0}};
    CHECK(*time_to_reach(t, 3.0) == 2.0);
    CHECK_FALSE(time_to_reach(t, 0.5).has_value());
}

TEST_CASE("cell seeds depend on label and seed only")
{
    CHECK(cell_seed("freya_page", 3) == cell_seed("freya_page", 3));
    CHECK(cell_seed("freya_page", 3) != cell_seed("freya_page", 4));
    CHECK(cell_seed("freya_page", 3) != cell_seed("soviet_page", 3));
}

TEST_CASE("small experiment writes its outputs")
{
    auto j = small_config();
    const auto dir = std::filesystem::temp_directory_path() / "freya_tests" / "race";
    std::filesystem::remove_all(dir);
    j["output_dir"] = dir.string();
    j["threads"] = 3;
    const RaceResult race = run_experiment(parse_config(j));
    CHECK(race.cells.size() == 2 + 6);
    CHECK(race.outcomes.size() == 2);
    CHECK(race.f_best_convention == "closed_form");
    REQUIRE(race.target_f.has_value());

    // Gradient descent with 1/L_minus never increases f.
    const auto& gd = race.cells[race.outcome("soviet_gd").best_cell];
    for (std::size_t i = 1; i < gd.report.trajectory.size(); ++i)
    {
        CHECK(gd.report.trajectory[i].f_value <= gd.report.trajectory[i - 1].f_value + 1e-12);
    }

    const json summary = json::parse(read_file(dir / "summary.json"));
    CHECK(summary.at("selection_rule") == "min_terminal_f");
    CHECK(summary.at("f_best_convention") == "closed_form");
    CHECK(summary.at("algorithms").contains("freya_page"));
    CHECK(std::filesystem::exists(dir / "cells" / "soviet_gd__gamma=auto__seed=0.csv"));
    CHECK(std::filesystem::exists(dir / "cells" / "freya_page__gamma=0.25__seed=1.csv"));
    const std::string csv = read_file(dir / "cells" / "soviet_gd__gamma=auto__seed=0.csv");
    CHECK(csv.rfind("k,time,grad_norm_sq,f_value,f_minus_fbest\n", 0) == 0);
}

TEST_CASE("experiments are reproducible and isolated from algorithm order")
{
    auto j = small_config();
    j["workers"] = {{"n", 3}, {"mode", "stochastic"}, {"taus", "sqrt(i)"}};
    const RaceResult a = run_experiment(parse_config(j));
    j["threads"] = 4;
    const RaceResult b = run_experiment(parse_config(j));
    auto flipped = j;
    flipped["algorithms"] = {j["algorithms"][1], j["algorithms"][0]};
    const RaceResult c = run_experiment(parse_config(flipped));

    auto find = [](const RaceResult& r, const std::string& label, double gamma, std::uint64_t seed) {
        for (const auto& cell : r.cells)
        {
            if (cell.label == label && cell.seed == seed && cell.report.gamma == gamma)
            {
                return cell.report.to_csv();
            }
        }
        FAIL("cell not found");
        return std::string();
    };
    for (const auto& cell : a.cells)
    {
        const std::string ref = cell.report.to_csv();
        CHECK(find(b, cell.label, cell.report.gamma, cell.seed) == ref);
        CHECK(find(c, cell.label, cell.report.gamma, cell.seed) == ref);
    }
}

TEST_CASE("without a closed-form optimum the best observed value is used")
{
    const auto csv = test::scratch_file("race.csv", "1,2,0\n0.5,-1,1\n3,0,1\n-1,-1,0\n");
    json j = small_config();
    j["problem"] = {{"kind", "csv"}, {"path", csv.string()}, {"l2", 0.1}};
    j["algorithms"] = {{{"name", "hero_gd"}, {"gamma", 0.5}}};
    const RaceResult r = run_experiment(parse_config(j));
    CHECK(r.f_best_convention == "min_observed");
    CHECK(r.f_best <= r.f_initial);
}

TEST_CASE("bound checks on a small corpus")
{
    const json j = {{"workers", {{"n", 3}, {"taus", "sqrt(i)"}}}, {"batch_sizes", {1, 4}}, {"seeds", 40}, {"m", 20}};
    const auto checks = check_bounds(j);
    CHECK(!checks.empty());
    for (const auto& c : checks)
    {
        CHECK_MESSAGE(c.pass, c.name);
    }
    CHECK_THROWS_AS(check_bounds(json{{"workers", {{"n", 1}, {"taus", "const 1"}}}, {"size", 3}}), ConfigError);
}
