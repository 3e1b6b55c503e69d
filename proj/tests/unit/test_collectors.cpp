#include "freya/collectors.hpp"
#include "freya/theory.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <map>
#include <set>

using namespace freya;

namespace
{
    WorkerPool pool_of(std::vector<double> taus, std::uint64_t seed = 0)
    {
        return WorkerPool(WorkerTimeModel::fixed(std::move(taus)), seed);
    }
}

TEST_CASE("single worker collects the full gradient in m task times")
{
    const QuadraticProblem q = generate_quadratic(5, 3, 1e-3, 1.0, 1);
    auto pool = pool_of({1.0});
    const CollectionResult r = compute_gradient(q, q.initial_point(), pool);
    CHECK(r.simulated_duration == 5.0);
    CHECK(r.total_calls() == 5);
    CHECK(r.aggregated == 5);
    CHECK(r.wasted_calls == 0);
}

TEST_CASE("one component takes the fastest single completion")
{
    const QuadraticProblem q = generate_quadratic(1, 3, 1e-3, 1.0, 1);
    auto pool = pool_of({3.0, 1.5, 2.0});
    const CollectionResult r = compute_gradient(q, q.initial_point(), pool);
    CHECK(r.simulated_duration == 1.5);
    CHECK(r.aggregated == 1);
    CHECK(r.g == q.component_gradient(0, q.initial_point()));
}

TEST_CASE("full gradient is exact for any speeds, including zero and infinite workers")
{
    Rng rng(17);
    for (int t = 0; t < 30; ++t)
    {
        const std::size_t m = 1 + rng.below(60);
        const QuadraticProblem q = generate_quadratic(m, 4, 1e-3, 2.0, t);
        std::vector<double> taus;
        const std::size_t n = 1 + rng.below(8);
        for (std::size_t w = 0; w < n; ++w)
        {
            const double u = rng.uniform();
            taus.push_back(u < 0.15 ? 0.0 : (u < 0.3 ? kNever : 0.1 + 5.0 * rng.uniform()));
        }
        taus.push_back(1.0);
        auto pool = pool_of(taus, t);
        const Vec x = test::random_point(4, rng, 2.0);
        const CollectionResult r = compute_gradient(q, x, pool);
        const Vec ref = full_gradient_reference(q, x);
        CHECK(test::relative_error(r.g, ref) <= 1e-12);
        CHECK(r.aggregated == m);
        CHECK(r.wasted_calls == r.total_calls() - m);
    }
}

TEST_CASE("collectors refuse to run without a finite worker")
{
    const QuadraticProblem q = generate_quadratic(3, 2, 1e-3, 1.0, 1);
    auto pool = pool_of({kNever, kNever});
    const Vec x = q.initial_point();
    CHECK_THROWS_WITH(compute_gradient(q, x, pool), doctest::Contains("cannot make progress"));
    CHECK_THROWS_WITH(compute_batch(2, q, x, pool), doctest::Contains("cannot make progress"));
    CHECK_THROWS_WITH(compute_batch_difference(2, q, x, x, pool), doctest::Contains("cannot make progress"));
}

TEST_CASE("batch difference at identical points is exactly zero")
{
    const QuadraticProblem q = generate_quadratic(20, 5, 1e-3, 1.0, 1);
    auto pool = pool_of({1.0, 0.3, 2.0});
    const Vec x{1.0, 2.0, -3.0, 0.5, 0.0};
    const CollectionResult r = compute_batch_difference(7, q, x, x, pool);
    for (double v : r.g)
    {
        CHECK(v == 0.0);
    }
}

TEST_CASE("single worker batch difference takes S task times")
{
    const QuadraticProblem q = generate_quadratic(20, 5, 1e-3, 1.0, 1);
    auto pool = pool_of({1.0});
    const Vec x = q.initial_point();
    const Vec y(5, 0.0);
    const CollectionResult r = compute_batch_difference(5, q, x, y, pool);
    CHECK(r.simulated_duration == 5.0);
    CHECK(r.simulated_duration <= theory::batch_difference_time_bound(5, std::vector<double>{1.0}));
    CHECK(theory::batch_difference_time_bound(5, std::vector<double>{1.0}) == 24.0);
}

TEST_CASE("one-component batch difference ignores S")
{
    const QuadraticProblem q = generate_quadratic(1, 3, 1e-3, 1.0, 1);
    const Vec x{1.0, 2.0, 3.0};
    const Vec y{0.0, -1.0, 1.0};
    Vec expected = q.component_gradient(0, x);
    axpy(-1.0, q.component_gradient(0, y), expected);
    for (std::size_t S : {1u, 4u, 9u})
    {
        auto pool = pool_of({1.0, 2.0});
        const CollectionResult r = compute_batch_difference(S, q, x, y, pool);
        CHECK(test::relative_error(r.g, expected) <= 1e-15);
    }
}

TEST_CASE("batch of one is the first completion")
{
    const QuadraticProblem q = generate_quadratic(10, 3, 1e-3, 1.0, 1);
    auto pool = pool_of({2.0, 0.5, 1.0});
    const CollectionResult r = compute_batch(1, q, q.initial_point(), pool);
    CHECK(r.simulated_duration == 0.5);
    CHECK(r.total_calls() == 1);
}

TEST_CASE("batch duration for three heterogeneous workers")
{
    const QuadraticProblem q = generate_quadratic(10, 3, 1e-3, 1.0, 1);
    const std::vector<double> taus{1.0, 2.0, 4.0};
    // min(7, 8 / 1.5, 9 / 1.75) is attained at j = 3
    CHECK(theory::batch_time_bound(6, taus) == doctest::Approx(2.0 * 36.0 / 7.0));
    for (std::uint64_t seed = 0; seed < 20; ++seed)
    {
        auto pool = pool_of(taus, seed);
        const CollectionResult r = compute_batch(6, q, q.initial_point(), pool);
        CHECK(r.simulated_duration <= theory::batch_time_bound(6, taus));
        CHECK(r.aggregated == 6);
    }
}

TEST_CASE("dispatch counts show no idle finite worker")
{
    const QuadraticProblem q = generate_quadratic(40, 3, 1e-3, 1.0, 1);
    WorkerPool pool(WorkerTimeModel::fixed({1.0, 1.7, 2.3, 0.4}), 4);
    compute_batch(13, q, q.initial_point(), pool);
    compute_gradient(q, q.initial_point(), pool);
    const auto& its = pool.trace().iterations;
    REQUIRE(its.size() == 2);
    // Every completion except the last one is followed by a reassignment.
    CHECK(its[0].dispatches == 4 + its[0].completions - 1);
    CHECK(its[1].dispatches == 4 + its[1].completions - 1);
}

TEST_CASE("batch difference bound holds on random static models")
{
    const QuadraticProblem q = generate_quadratic(50, 2, 1e-3, 1.0, 1);
    Rng rng(99);
    for (int t = 0; t < 60; ++t)
    {
        const std::size_t n = 1 + rng.below(16);
        std::vector<double> taus(n);
        for (auto& tau : taus)
        {
            tau = std::exp(std::log(0.01) + rng.uniform() * std::log(1e4));
        }
        const std::size_t S = 1 + rng.below(100);
        auto pool = pool_of(taus, t);
        const Vec x = q.initial_point();
        const double d = compute_batch_difference(S, q, x, Vec(2, 0.0), pool).simulated_duration;
        CHECK(d <= theory::batch_difference_time_bound(static_cast<double>(S), taus));
        auto pool2 = pool_of(taus, t);
        const double b = compute_batch(S, q, x, pool2).simulated_duration;
        CHECK(b <= theory::batch_time_bound(static_cast<double>(S), taus));
    }
}

TEST_CASE("minibatch mean is unbiased")
{
    const QuadraticProblem q = generate_quadratic(8, 3, 1e-3, 3.0, 5);
    const Vec x{1.0, -1.0, 0.5};
    const Vec truth = full_gradient_reference(q, x);
    const int N = 20000;
    Vec sum(3, 0.0);
    Vec sq(3, 0.0);
    WorkerPool pool(WorkerTimeModel::fixed({1.0, 2.0, 3.0}), 1);
    for (int t = 0; t < N; ++t)
    {
        const Vec g = compute_batch(2, q, x, pool).g;
        for (std::size_t k = 0; k < 3; ++k)
        {
            sum[k] += g[k];
            sq[k] += g[k] * g[k];
        }
    }
    for (std::size_t k = 0; k < 3; ++k)
    {
        const double mean = sum[k] / N;
        const double sd = std::sqrt(std::max(0.0, sq[k] / N - mean * mean));
        CHECK(std::abs(mean - truth[k]) <= 3.0 * sd / std::sqrt(static_cast<double>(N)) + 1e-15);
    }
}

TEST_CASE("an infinite straggler changes nothing for the others")
{
    const QuadraticProblem q = generate_quadratic(30, 4, 1e-3, 1.0, 2);
    const Vec x = q.initial_point();
    const Vec y(4, 0.1);
    for (std::uint64_t seed = 0; seed < 10; ++seed)
    {
        auto a = pool_of({1.0, 1.3, 2.0}, seed);
        auto b = pool_of({1.0, 1.3, 2.0, kNever}, seed);
        const CollectionResult ra = compute_batch_difference(9, q, x, y, a);
        const CollectionResult rb = compute_batch_difference(9, q, x, y, b);
        CHECK(ra.g == rb.g);
        CHECK(ra.simulated_duration == rb.simulated_duration);
        auto c = pool_of({1.0, 1.3, 2.0}, seed);
        auto d = pool_of({1.0, 1.3, 2.0, kNever}, seed);
        CHECK(compute_gradient(q, x, c).simulated_duration == compute_gradient(q, x, d).simulated_duration);
    }
}

TEST_CASE("any-sampling over all indices is the full-gradient path")
{
    const QuadraticProblem q = generate_quadratic(12, 3, 1e-3, 1.0, 3);
    std::vector<std::size_t> all(12);
    std::iota(all.begin(), all.end(), std::size_t{0});
    auto a = pool_of({1.0, 2.0, 0.7}, 5);
    auto b = pool_of({1.0, 2.0, 0.7}, 5);
    const CollectionResult ra = compute_batch_any_sampling(all, q, q.initial_point(), a);
    const CollectionResult rb = compute_gradient(q, q.initial_point(), b);
    CHECK(ra.g == rb.g);
    CHECK(ra.simulated_duration == rb.simulated_duration);
    CHECK(ra.oracle_calls == rb.oracle_calls);
}

TEST_CASE("any-sampling singleton and duplicates")
{
    const QuadraticProblem q = generate_quadratic(6, 3, 1e-3, 1.0, 3);
    const Vec x{0.3, 0.2, 0.1};
    {
        auto pool = pool_of({1.0, 2.0});
        const std::vector<std::size_t> one{4};
        const CollectionResult r = compute_batch_any_sampling(one, q, x, pool);
        CHECK(r.g == q.component_gradient(4, x));
        CHECK(r.aggregated == 1);
    }
    {
        auto pool = pool_of({1.0});
        const std::vector<std::size_t> twice{1, 1};
        const CollectionResult r = compute_batch_any_sampling(twice, q, x, pool);
        CHECK(test::relative_error(r.g, q.component_gradient(1, x)) <= 1e-15);
        CHECK(r.aggregated == 2);
        CHECK(r.simulated_duration == 2.0);
    }
    {
        auto pool = pool_of({1.0, 1.0, 1.0});
        const std::vector<std::size_t> mixed{2, 5, 2, 2};
        const CollectionResult r = compute_batch_any_sampling(mixed, q, x, pool);
        Vec expected(3, 0.0);
        for (std::size_t i : mixed)
        {
            axpy(0.25, q.component_gradient(i, x), expected);
        }
        CHECK(test::relative_error(r.g, expected) <= 1e-14);
        CHECK(r.aggregated == 4);
    }
}

TEST_CASE("any-sampling rejects malformed input")
{
    const QuadraticProblem q = generate_quadratic(6, 3, 1e-3, 1.0, 3);
    auto pool = pool_of({1.0});
    const Vec x(3, 0.0);
    CHECK_THROWS_AS(compute_batch_any_sampling(std::vector<std::size_t>{}, q, x, pool), std::invalid_argument);
    CHECK_THROWS_AS(compute_batch_any_sampling(std::vector<std::size_t>{6}, q, x, pool), std::out_of_range);
    const std::vector<std::size_t> dup{1, 1};
    const std::vector<double> w{1.0, 2.0};
    CHECK_THROWS_AS(compute_batch_any_sampling(dup, q, x, pool, w), std::invalid_argument);
    CHECK_THROWS_AS(compute_batch(0, q, x, pool), std::invalid_argument);
    CHECK_THROWS_AS(compute_batch(1, q, Vec(2, 0.0), pool), std::invalid_argument);
}

TEST_CASE("difference over all indices equals the gradient difference")
{
    const QuadraticProblem q = generate_quadratic(15, 4, 1e-3, 1.0, 3);
    std::vector<std::size_t> all(15);
    std::iota(all.begin(), all.end(), std::size_t{0});
    const Vec x{1.0, 0.0, -2.0, 1.0};
    const Vec y{0.0, 0.5, 0.5, 0.0};
    Vec expected = full_gradient_reference(q, x);
    axpy(-1.0, full_gradient_reference(q, y), expected);
    auto pool = pool_of({1.0, 3.0, 0.5, kNever});
    const CollectionResult r = compute_batch_difference_any_sampling(all, q, x, y, pool);
    CHECK(test::relative_error(r.g, expected) <= 1e-12);
    auto pool2 = pool_of({1.0, 3.0});
    CHECK(norm(compute_batch_difference_any_sampling(all, q, x, x, pool2).g) == 0.0);
}

TEST_CASE("expected full-gradient time stays within its bound for two equal workers")
{
    const QuadraticProblem q = generate_quadratic(100, 2, 1e-3, 1.0, 3);
    const std::vector<double> taus{1.0, 1.0};
    double sum = 0.0;
    for (std::uint64_t seed = 0; seed < 200; ++seed)
    {
        auto pool = pool_of(taus, seed);
        sum += compute_gradient(q, q.initial_point(), pool).simulated_duration;
    }
    // 12 min_j H_j^-1 (100 + 2 ln 2 + j)
    const double bound = 12.0 * std::min(1.0 * (100.0 + 2.0 * std::log(2.0) + 1.0),
                                          0.5 * (100.0 + 2.0 * std::log(2.0) + 2.0));
    CHECK(theory::full_gradient_time_bound(100, taus) == doctest::Approx(bound).epsilon(1e-14));
    CHECK(sum / 200.0 <= bound);
}

TEST_CASE("uniform sampler draws each index equally often")
{
    Sampler s = Sampler::uniform(5, 3);
    CHECK(s.kind() == Sampler::Kind::Uniform);
    std::vector<int> counts(5, 0);
    for (int t = 0; t < 10000; ++t)
    {
        for (std::size_t i : s.draw(2).indices)
        {
            ++counts[i];
        }
    }
    for (int c : counts)
    {
        CHECK(std::abs(c - 4000) < 300);
    }
}

TEST_CASE("nice sampler returns distinct indices with equiprobable subsets")
{
    Sampler s = Sampler::nice(4, 8);
    std::map<std::set<std::size_t>, int> counts;
    for (int t = 0; t < 12000; ++t)
    {
        const auto d = s.draw(2);
        const std::set<std::size_t> set(d.indices.begin(), d.indices.end());
        REQUIRE(set.size() == 2);
        ++counts[set];
    }
    CHECK(counts.size() == 6);
    for (const auto& [set, c] : counts)
    {
        CHECK(std::abs(c - 2000) < 200);
    }
    CHECK_THROWS_AS(s.draw(5), std::invalid_argument);
    Sampler full = Sampler::nice(7, 1);
    auto d = full.draw(7);
    std::sort(d.indices.begin(), d.indices.end());
    CHECK(d.indices == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6});
}

TEST_CASE("importance sampler follows the smoothness weights")
{
    const std::vector<double> L{1.0, 3.0, 0.0, 4.0};
    Sampler s = Sampler::importance(L, 2);
    std::vector<int> counts(4, 0);
    const int N = 16000;
    for (int t = 0; t < N / 4; ++t)
    {
        const auto d = s.draw(4);
        REQUIRE(d.weights.size() == 4);
        for (std::size_t k = 0; k < 4; ++k)
        {
            ++counts[d.indices[k]];
            // weight = mean(L) / L_j
            CHECK(d.weights[k] == doctest::Approx(2.0 / L[d.indices[k]]));
        }
    }
    CHECK(counts[2] == 0);
    CHECK(std::abs(counts[0] - N / 8) < 250);
    CHECK(std::abs(counts[1] - 3 * N / 8) < 350);
    CHECK(std::abs(counts[3] - N / 2) < 350);
    CHECK_THROWS_AS(Sampler::importance(std::vector<double>{}, 0), std::invalid_argument);
    CHECK_THROWS_AS(Sampler::importance(std::vector<double>{0.0, 0.0}, 0), std::invalid_argument);
}

TEST_CASE("weighted importance batches are unbiased")
{
    const QuadraticProblem q = generate_quadratic(6, 3, 1e-3, 2.0, 7);
    const SmoothnessHints h = q.smoothness();
    Sampler s = Sampler::importance(h.per_component, 4);
    const Vec x{1.0, 0.5, -0.5};
    const Vec truth = full_gradient_reference(q, x);
    const int N = 20000;
    Vec sum(3, 0.0);
    Vec sq(3, 0.0);
    WorkerPool pool(WorkerTimeModel::fixed({1.0, 2.0}), 3);
    for (int t = 0; t < N; ++t)
    {
        const auto d = s.draw(2);
        const Vec g = compute_batch_any_sampling(d.indices, q, x, pool, d.weights).g;
        for (std::size_t k = 0; k < 3; ++k)
        {
            sum[k] += g[k];
            sq[k] += g[k] * g[k];
        }
    }
    for (std::size_t k = 0; k < 3; ++k)
    {
        const double mean = sum[k] / N;
        const double sd = std::sqrt(std::max(0.0, sq[k] / N - mean * mean));
        CHECK(std::abs(mean - truth[k]) <= 3.0 * sd / std::sqrt(static_cast<double>(N)) + 1e-12);
    }
}

TEST_CASE("sampler names round-trip")
{
    for (auto k : {Sampler::Kind::Uniform, Sampler::Kind::Nice, Sampler::Kind::Importance})
    {
        CHECK(sampler_kind_from_string(to_string(k)) == k);
    }
    CHECK_THROWS_AS(sampler_kind_from_string("stratified"), std::invalid_argument);
}
